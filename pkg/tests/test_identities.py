import numpy as np
import pytest

from hwqkd.identities import (
    anti_balanced_expansions,
    balanced_pair_expansions,
    chi_phi_expansions,
    extreme_fit_residual,
    failures,
    mirrored_expansions,
    odd_pair_expansions,
    ones_state_x_form,
    ones_variant_selection,
    tuned_zero_dual_form,
    verify_state_identities,
)
from hwqkd.qstate import BasisLabel, hex_ket
from hwqkd.sources import psi_tuned, x_coordinates

TOL = 1e-9


class TestExpansions:
    @pytest.mark.parametrize("check", balanced_pair_expansions() + odd_pair_expansions(), ids=lambda c: c.name)
    def test_pair_expansions(self, check):
        assert check.value < TOL

    def test_hadamard_of_zero_ket(self):
        # |0_z> is the uniform sum of the X hex kets over 4
        v = sum((hex_ket(d, BasisLabel.X) for d in range(1, 16)), hex_ket(0, BasisLabel.X)) * 0.25
        np.testing.assert_allclose(v.amplitudes, hex_ket(0).amplitudes, atol=1e-12)

    def test_chi_phi(self):
        assert all(c.passed for c in chi_phi_expansions())


class TestRefutedForms:
    def test_antisymmetric_pairs_fail(self):
        refuted = [c for c in anti_balanced_expansions() if c.kind == "refuted"]
        assert len(refuted) == 3
        for c in refuted:
            assert not c.passed
            assert c.value == pytest.approx(1 / np.sqrt(2), abs=1e-9)

    def test_symmetric_pairs_hold(self):
        held = [c for c in anti_balanced_expansions() + mirrored_expansions() if c.kind == "identity"]
        assert held and all(c.value < TOL for c in held)

    def test_mirrored_refuted(self):
        refuted = [c for c in mirrored_expansions() if c.kind == "refuted"]
        assert len(refuted) == 1 and not refuted[0].passed


class TestTunedStates:
    def test_zero_state_dual(self):
        c = tuned_zero_dual_form()
        assert c.passed and c.value < TOL

    def test_zero_state_x_amplitudes_equal_z(self):
        v = psi_tuned(3, "00")
        np.testing.assert_allclose(x_coordinates(v), v.amplitudes, atol=1e-12)

    def test_variant_selection(self):
        c = ones_variant_selection()
        assert c.passed
        assert c.details["selected"] == 7
        assert c.details["p_zero_sum_x"]["6"] == pytest.approx(0.075, abs=1e-12)
        assert c.details["p_zero_sum_x"]["7"] == pytest.approx(0.0, abs=1e-12)

    def test_ones_x_form(self):
        assert ones_state_x_form().passed


class TestInfeasibility:
    def test_residual_at_least_half(self):
        c = extreme_fit_residual()
        assert c.kind == "infeasibility"
        assert c.value >= 0.5
        assert c.value == pytest.approx(1 / np.sqrt(2), abs=1e-9)


def test_no_unexpected_failures():
    assert failures(verify_state_identities()) == []
