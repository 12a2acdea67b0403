import numpy as np
import pytest

from hwqkd.adversary import EveStrategy
from hwqkd.qkd_protocol import run_qkd_session
from hwqkd.security import (
    CONSISTENT,
    DETECTED,
    INCONCLUSIVE,
    MIN_UNIFORMITY_SAMPLES,
    CheckData,
    exact_battery,
    exact_cross_independence,
    exact_error_rates,
    exact_extreme_value,
    exact_per_qubit,
    exact_zero_correlation,
    extreme_value_test,
    local_uniformity_test,
    patterns,
    per_qubit_test,
    run_tests,
    spin_sum_battery_flags,
    spin_sums,
)
from hwqkd.sources import HONEST, ILLUSION, SourceParams, TUNED_MIXTURE, build_group_state


@pytest.fixture(scope="module")
def params():
    return SourceParams.from_a2(0.5, particle1="dephased")


def decisions(reports):
    return {r.name: r.decision for r in reports}


def make_data(alice_basis, bob_basis, alice_bits, bob_bits):
    n = len(bob_basis)
    return CheckData(
        np.asarray(alice_basis, dtype=np.int8),
        np.asarray(bob_basis, dtype=np.int8),
        np.asarray(alice_bits, dtype=np.int8),
        np.asarray(bob_bits, dtype=np.int8),
        np.full(n, -1, dtype=np.int8),
        np.full(n, -1, dtype=np.int8),
    )


class TestHelpers:
    def test_patterns_msb_first(self):
        np.testing.assert_array_equal(patterns([[1, 0, 0, 0], [0, 0, 0, 1], [1, 1, 1, 1]]), [8, 1, 15])

    def test_spin_sums(self):
        np.testing.assert_array_equal(spin_sums([[1, 1, 1, 1], [1, 0, 1, 0], [0, 0, 0, 0]]), [4, 0, -4])


class TestExact:
    def test_honest_all_consistent(self, params):
        reports = exact_battery(build_group_state(HONEST, params), EveStrategy.none())
        assert all(r.decision == CONSISTENT for r in reports)

    def test_mixture(self, params):
        state = build_group_state(TUNED_MIXTURE, params)
        assert not exact_error_rates(EveStrategy.parse("tuned-mixture"), params).detected
        cross = exact_cross_independence(state)
        assert cross.detected
        assert cross.statistic["factorization residual ZX"] == pytest.approx(0.234375, abs=1e-9)
        assert exact_extreme_value(state).statistic["P(remote 0 | local extreme)"] == pytest.approx(0, abs=1e-12)
        assert exact_per_qubit(state).statistic["anticorrelation"] == pytest.approx(0.5, abs=1e-12)

    def test_illusion_passes_spin_sum_tests(self, params):
        state = build_group_state(ILLUSION, params)
        assert not exact_error_rates(EveStrategy.parse("illusion"), params).detected
        assert not spin_sum_battery_flags(state)

    def test_illusion_caught_by_finer_tests(self, params):
        state = build_group_state(ILLUSION, params)
        ext = exact_extreme_value(state)
        assert ext.detected and ext.statistic["P(remote 0 | local extreme)"] == pytest.approx(0, abs=1e-12)
        pq = exact_per_qubit(state)
        assert pq.detected and pq.statistic["anticorrelation"] == pytest.approx(0.5, abs=1e-12)
        assert exact_cross_independence(state, "full").detected

    def test_mixed_basis_source(self, params):
        state = build_group_state(EveStrategy.parse("mixed").model, params)
        zc = exact_zero_correlation(state)
        assert zc.statistic["P(bob 0 | alice 0) Z"] == pytest.approx(0.6875, abs=1e-12)
        assert exact_per_qubit(state).statistic["anticorrelation"] == pytest.approx(0.75, abs=1e-12)

    def test_extreme_inconclusive_without_extremes(self, params):
        assert exact_extreme_value(build_group_state(EveStrategy.parse("tuned-zeros").model, params)).decision == INCONCLUSIVE

    def test_bad_resolution(self, params):
        with pytest.raises(ValueError):
            exact_cross_independence(build_group_state(HONEST, params), "coarse")


class TestSampledUnits:
    def test_per_qubit_perfect(self):
        bits = np.random.default_rng(0).integers(0, 2, (50, 4))
        d = make_data(np.zeros(50), np.zeros(50), bits, 1 - bits)
        assert per_qubit_test(d).decision == CONSISTENT

    def test_per_qubit_single_flip(self):
        bits = np.random.default_rng(0).integers(0, 2, (50, 4))
        bob = 1 - bits
        bob[3, 2] ^= 1
        assert per_qubit_test(make_data(np.zeros(50), np.zeros(50), bits, bob)).detected

    def test_uniformity_needs_samples(self):
        with pytest.raises(ValueError):
            local_uniformity_test(np.zeros(MIN_UNIFORMITY_SAMPLES - 1, dtype=int))

    def test_uniformity_flags_constant_patterns(self):
        assert local_uniformity_test(np.full(MIN_UNIFORMITY_SAMPLES, 3)).detected

    def test_uniformity_accepts_uniform(self):
        v = np.random.default_rng(1).integers(0, 16, 20_000)
        assert local_uniformity_test(v).decision == CONSISTENT

    def test_extreme_inconclusive_when_small(self):
        d = make_data([0], [1], [[0, 0, 0, 0]], [[1, 0, 1, 0]])
        assert extreme_value_test(d).decision == INCONCLUSIVE

    def test_unknown_test_name(self):
        d = make_data([0], [0], [[0, 0, 0, 0]], [[1, 1, 1, 1]])
        with pytest.raises(ValueError):
            run_tests(d, ["nonsense"])

    def test_missing_data_is_inconclusive(self):
        d = make_data([0], [1], [[0, 0, 0, 0]], [[1, 1, 1, 1]])
        assert decisions(run_tests(d, ["per_qubit"]))["per_qubit"] == INCONCLUSIVE


@pytest.fixture(scope="module")
def reports(params):
    out = {}
    for name in ("none", "tuned-mixture", "illusion"):
        s = run_qkd_session(name, params, 20_000, seed=8)
        out[name] = decisions(run_tests(CheckData.from_session(s)))
    return out


class TestSampledSessions:
    def test_honest(self, reports):
        assert all(d == CONSISTENT for d in reports["none"].values())

    def test_mixture_detected_by_cross_independence(self, reports):
        r = reports["tuned-mixture"]
        assert r["error_rate"] == CONSISTENT
        assert r["cross_independence"] == DETECTED

    def test_illusion(self, reports):
        r = reports["illusion"]
        for name in ("error_rate", "zero_correlation", "cross_independence"):
            assert r[name] == CONSISTENT
        assert r["extreme_value"] == DETECTED
        assert r["per_qubit"] == DETECTED

    def test_check_data_carries_sacrificed_bits(self, params):
        s = run_qkd_session(None, params, 2000, seed=2)
        d = CheckData.from_session(s)
        assert len(d) == s.attempt_check.sum()
        assert (d.raw_bit >= 0).sum() == s.sifted_check_mask().sum()
