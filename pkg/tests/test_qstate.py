import numpy as np
import pytest

from hwqkd.qstate import (
    DOWN,
    UP,
    BasisLabel,
    BellOutcome,
    DensityOperator,
    InvalidMeasurement,
    StateVector,
    bell_projectors,
    bell_states,
    change_basis,
    embed,
    hex_ket,
    ket,
    measure_projective,
    outcome_distribution,
    partial_trace,
    product_projectors,
    singlet,
    tensor,
)

R2 = np.sqrt(2)


class TestKets:
    def test_bit_one_is_up(self):
        np.testing.assert_allclose(UP.amplitudes, [0, 1])
        np.testing.assert_allclose(DOWN.amplitudes, [1, 0])

    def test_first_qubit_is_most_significant(self):
        v = ket("10")
        assert np.argmax(np.abs(v.amplitudes)) == 2

    def test_hex_ket_c_is_up_up_down_down(self):
        assert hex_ket(0xC).allclose(ket("1100"))

    def test_hex_ket_x_basis_is_hadamard_image(self):
        h = BasisLabel.X.unitary
        expected = np.kron(np.kron(h[:, 1], h[:, 0]), np.kron(h[:, 1], h[:, 0]))
        np.testing.assert_allclose(hex_ket(0xA, BasisLabel.X).amplitudes, expected, atol=1e-12)

    def test_tensor_dimensions(self):
        assert tensor(UP, DOWN, UP).num_qubits == 3

    def test_normalization_rejects_zero(self):
        with pytest.raises(ValueError):
            StateVector(np.zeros(4)).normalize()


class TestBellStates:
    def test_orthonormal(self):
        m = np.column_stack([v.amplitudes for v in bell_states().values()])
        np.testing.assert_allclose(m.conj().T @ m, np.eye(4), atol=1e-12)

    def test_singlet_is_psi_minus(self):
        psi_minus = bell_states()[BellOutcome.PSI_MINUS]
        assert abs(abs(psi_minus.inner(singlet())) - 1) < 1e-12

    def test_singlet_same_in_x(self):
        s = singlet()
        sx = change_basis(s, [BasisLabel.X, BasisLabel.X])
        assert abs(abs(s.inner(sx)) - 1) < 1e-12

    def test_projectors_resolve_identity(self):
        np.testing.assert_allclose(sum(bell_projectors()), np.eye(4), atol=1e-12)


class TestDensityOperator:
    def test_pure_state_valid(self):
        assert singlet().density().is_valid()

    def test_negative_eigenvalue_rejected(self):
        rho = DensityOperator(np.diag([1.5, -0.5]))
        assert not rho.is_valid()
        with pytest.raises(ValueError):
            rho.validate()

    def test_partial_trace_of_singlet_is_mixed(self):
        red = partial_trace(singlet().density(), [0])
        np.testing.assert_allclose(red.matrix, np.eye(2) / 2, atol=1e-12)

    def test_partial_trace_of_product(self):
        rho = tensor(UP, DOWN).density()
        np.testing.assert_allclose(partial_trace(rho, [1]).matrix, DOWN.density().matrix, atol=1e-12)


class TestMeasurement:
    def test_singlet_z_anticorrelated(self):
        projs = product_projectors([BasisLabel.Z, BasisLabel.Z])
        p = outcome_distribution(singlet().density(), projs)
        np.testing.assert_allclose(p, [0, 0.5, 0.5, 0], atol=1e-12)

    def test_singlet_x_anticorrelated(self):
        projs = product_projectors([BasisLabel.X, BasisLabel.X])
        p = outcome_distribution(singlet().density(), projs)
        np.testing.assert_allclose(p, [0, 0.5, 0.5, 0], atol=1e-12)

    def test_incomplete_projectors_rejected(self):
        projs = product_projectors([BasisLabel.Z])[:1]
        with pytest.raises(InvalidMeasurement):
            outcome_distribution(UP.density(), projs)

    def test_collapse(self):
        rng = np.random.default_rng(3)
        z0 = embed(np.diag([1.0, 0.0]), [0], 2)
        z1 = embed(np.diag([0.0, 1.0]), [0], 2)
        k, post = measure_projective(singlet().density(), [z0, z1], rng)
        other = partial_trace(post, [1]).matrix
        # the second particle is left opposite to the first
        np.testing.assert_allclose(np.diag(other).real, [k, 1 - k], atol=1e-12)

    def test_frequencies(self):
        rng = np.random.default_rng(11)
        projs = product_projectors([BasisLabel.X])
        state = UP.density()
        counts = np.bincount([measure_projective(state, projs, rng)[0] for _ in range(4000)], minlength=2)
        assert abs(counts[1] / 4000 - 0.5) < 3 * np.sqrt(0.25 / 4000)
