import numpy as np
import pytest

from hwqkd.qstate import BasisLabel, DensityOperator, partial_trace
from hwqkd.sources import (
    HONEST,
    ILLUSION,
    SEPARABLE,
    TUNED_MIXTURE,
    CoinSpec,
    SourceKind,
    SourceModel,
    SourceParams,
    UnsupportedConfiguration,
    build_group_state,
    build_trio_state,
    coins_from_uniforms,
    honest_pure_state,
    illusion_components,
    mirror,
    psi_tuned,
    sample_coins,
    x_coordinates,
    zero_sum_probability,
)


class TestParams:
    def test_from_a2(self):
        p = SourceParams.from_a2(0.3)
        assert abs(p.a2 - 0.3) < 1e-15 and abs(p.b2 - 0.7) < 1e-15

    @pytest.mark.parametrize("a2", [-0.1, 1.1])
    def test_a2_range(self, a2):
        with pytest.raises(ValueError):
            SourceParams.from_a2(a2)

    def test_unnormalized(self):
        with pytest.raises(ValueError):
            SourceParams(0.9, 0.9)

    def test_bad_n(self):
        with pytest.raises(ValueError):
            SourceParams.from_a2(0.5, N=0)

    def test_particle1_mode(self):
        with pytest.raises(ValueError):
            SourceParams.from_a2(0.5, particle1="thermal")

    def test_dephased_keeps_diagonal(self):
        p = SourceParams.from_a2(0.2)
        np.testing.assert_allclose(
            np.diag(p.particle1_density()), np.diag(p.with_particle1("dephased").particle1_density()), atol=1e-15
        )


class TestModelNames:
    @pytest.mark.parametrize(
        "name", ["honest", "separable", "coins", "mixed", "mixed-z", "mixed-x", "fixed:C3", "tuned-zeros",
                 "tuned-ones", "tuned-mixture", "illusion"],
    )
    def test_round_trip(self, name):
        assert SourceModel.parse(name).name == name

    def test_unknown(self):
        with pytest.raises(ValueError, match="unknown source"):
            SourceModel.parse("laser")

    def test_fixed_needs_two_digits(self):
        with pytest.raises(ValueError):
            SourceModel.parse("fixed:C")

    def test_eve_flags(self):
        assert not HONEST.is_eve and ILLUSION.is_eve


class TestTrioStates:
    def test_honest_pure_matches_density(self, half):
        rho = build_trio_state(half)
        np.testing.assert_allclose(rho.matrix, honest_pure_state(half).density().matrix, atol=1e-12)

    def test_separable_is_diagonal(self):
        p = SourceParams.from_a2(0.25)
        m = build_trio_state(p, SEPARABLE).matrix
        np.testing.assert_allclose(m, np.diag(np.diag(m)), atol=1e-15)
        assert build_trio_state(p, SEPARABLE).is_valid()

    def test_same_pair_marginal(self, half):
        a = partial_trace(build_trio_state(half), [1, 2]).matrix
        b = partial_trace(build_trio_state(half, SEPARABLE), [1, 2]).matrix
        np.testing.assert_allclose(np.diag(a), np.diag(b), atol=1e-12)


class TestTunedStates:
    def test_zeros_state_zero_sum_in_both_bases(self):
        v = psi_tuned(3, "00")
        assert zero_sum_probability(v, BasisLabel.Z) == pytest.approx(1, abs=1e-12)
        assert zero_sum_probability(v, BasisLabel.X) == pytest.approx(1, abs=1e-12)

    def test_ones_state_nonzero_in_both_bases(self):
        v = psi_tuned(3, "11")
        assert zero_sum_probability(v, BasisLabel.Z) == pytest.approx(0, abs=1e-12)
        assert zero_sum_probability(v, BasisLabel.X) == pytest.approx(0, abs=1e-12)

    def test_other_ones_variant_leaks_zero_sums(self):
        v = psi_tuned(3, "11", variant=6)
        assert zero_sum_probability(v, BasisLabel.X) == pytest.approx(0.075, abs=1e-12)

    def test_role_checked(self):
        with pytest.raises(ValueError):
            psi_tuned(1, "00")

    def test_mirror_swaps_bases(self):
        v = psi_tuned(3, "11")
        np.testing.assert_allclose(x_coordinates(mirror(v)), v.amplitudes, atol=1e-12)


class TestIllusion:
    def test_ten_components_sum_to_one(self):
        comps = illusion_components()
        assert len(comps) == 10
        assert sum(c.weight for c in comps) == pytest.approx(1, abs=1e-15)

    def test_tags_match_zero_sums(self):
        for c in illusion_components():
            bz, bx = c.tuned
            assert zero_sum_probability(c.particle3, BasisLabel.Z) == pytest.approx(1 - bz, abs=1e-12)
            assert zero_sum_probability(c.particle3, BasisLabel.X) == pytest.approx(1 - bx, abs=1e-12)


class TestGroupStates:
    @pytest.mark.parametrize("name", ["honest", "separable", "mixed", "fixed:C3", "tuned-zeros", "tuned-ones",
                                      "tuned-mixture", "illusion"])
    def test_valid_density(self, name, half):
        state = build_group_state(SourceModel.parse(name), half)
        assert DensityOperator(state.total_pair_density()).is_valid()

    def test_mixture_weights(self, half):
        np.testing.assert_allclose(build_group_state(TUNED_MIXTURE, half).weights, [3 / 8, 5 / 8])

    def test_eve_sources_need_n1(self):
        with pytest.raises(UnsupportedConfiguration):
            build_group_state(ILLUSION, SourceParams.from_a2(0.5, N=2))

    def test_coins_not_quantum(self, half):
        with pytest.raises(UnsupportedConfiguration):
            build_group_state(SourceModel(SourceKind.COINS), half)


class TestCoins:
    def test_c3_is_minus_c2(self):
        rng = np.random.default_rng(0)
        c = sample_coins(CoinSpec(0.3), rng, 1000)
        np.testing.assert_array_equal(c.c3, -c.c2)

    def test_bit_layout(self):
        u1 = np.zeros((1, 4))
        c = coins_from_uniforms(CoinSpec(0.5), u1, np.array([0b1111_0001], dtype=np.uint64), 4)
        np.testing.assert_array_equal(c.c2[0], [1, -1, -1, -1])
        np.testing.assert_array_equal(c.c4[0], [1, 1, 1, 1])

    def test_c1_frequency(self):
        rng = np.random.default_rng(1)
        c = sample_coins(CoinSpec(0.2), rng, 20000, 1)
        f = np.mean(c.c1 == 1)
        assert abs(f - 0.2) < 3 * np.sqrt(0.16 / 20000)
