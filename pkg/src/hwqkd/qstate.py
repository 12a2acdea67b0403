"""Dense state vectors and density operators for small qubit registers.

Conventions used throughout the package:

* Qubit 0 is the most significant bit of a computational basis index.
* Index bit value 1 is spin up, 0 is spin down.  A 4-qubit hex ket therefore
  reads directly as its digit: ``C = 1100 = |up up down down>``.
* The X basis is the Hadamard image of that encoding, ``|b_x> = H|b>``, so
  ``|1_x> = (|down> - |up>)/sqrt(2)`` is spin up along x and
  ``|0_x> = (|down> + |up>)/sqrt(2)`` is spin down along x.  This is the
  phase convention under which the balanced and odd hex-ket pair expansions hold.
"""

from __future__ import annotations

from enum import Enum
from typing import Sequence

import numpy as np

TOL = 1e-9

HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)
IDENTITY2 = np.eye(2)


class InvalidMeasurement(ValueError):
    """Raised when a measurement cannot be performed on the given state."""


class BasisLabel(str, Enum):
    Z = "Z"
    X = "X"

    @property
    def unitary(self) -> np.ndarray:
        """Columns are the basis kets (outcome 0, outcome 1) in Z coordinates."""
        return HADAMARD if self is BasisLabel.X else IDENTITY2

    @classmethod
    def parse(cls, value) -> "BasisLabel":
        if isinstance(value, cls):
            return value
        return cls(str(value).upper())


class BellOutcome(int, Enum):
    PSI_PLUS = 0
    PSI_MINUS = 1
    PHI_PLUS = 2
    PHI_MINUS = 3

    @property
    def symbol(self) -> str:
        return ("Ψ+", "Ψ-", "Φ+", "Φ-")[self.value]


class StateVector:
    """Amplitudes of an ``num_qubits``-qubit pure state.

    Arithmetic (``+``, ``-``, scalar ``*``) is allowed so unnormalized
    superpositions of basis kets can be written down directly; call
    :meth:`normalize` before treating the result as a physical state.
    """

    __slots__ = ("amplitudes", "num_qubits")

    def __init__(self, amplitudes, num_qubits: int | None = None):
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        n = int(round(np.log2(amps.size))) if amps.size else 0
        if amps.size != 2**n or n < 1:
            raise ValueError(f"amplitude count {amps.size} is not a power of two >= 2")
        if num_qubits is not None and num_qubits != n:
            raise ValueError(f"expected {num_qubits} qubits, got {n}")
        if not np.all(np.isfinite(amps)):
            raise ValueError("amplitudes must be finite")
        self.amplitudes = amps
        self.num_qubits = n

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "StateVector":
        nrm = self.norm()
        if nrm < 1e-15:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.amplitudes / nrm)

    def inner(self, other: "StateVector") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def density(self) -> "DensityOperator":
        return DensityOperator(np.outer(self.amplitudes, self.amplitudes.conj()))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def allclose(self, other: "StateVector", atol: float = TOL) -> bool:
        return max_abs_diff(self, other) < atol

    def __add__(self, other: "StateVector") -> "StateVector":
        return StateVector(self.amplitudes + other.amplitudes)

    def __sub__(self, other: "StateVector") -> "StateVector":
        return StateVector(self.amplitudes - other.amplitudes)

    def __neg__(self) -> "StateVector":
        return StateVector(-self.amplitudes)

    def __mul__(self, scalar) -> "StateVector":
        return StateVector(self.amplitudes * complex(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "StateVector":
        return StateVector(self.amplitudes / complex(scalar))

    def __repr__(self) -> str:
        return f"StateVector(num_qubits={self.num_qubits})"


class DensityOperator:
    """A ``2**n x 2**n`` density matrix."""

    __slots__ = ("matrix", "num_qubits")

    def __init__(self, matrix, num_qubits: int | None = None):
        mat = np.asarray(matrix, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("density matrix must be square")
        n = int(round(np.log2(mat.shape[0])))
        if mat.shape[0] != 2**n or n < 1:
            raise ValueError(f"dimension {mat.shape[0]} is not a power of two >= 2")
        if num_qubits is not None and num_qubits != n:
            raise ValueError(f"expected {num_qubits} qubits, got {n}")
        if not np.all(np.isfinite(mat)):
            raise ValueError("matrix entries must be finite")
        self.matrix = mat
        self.num_qubits = n

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def validity_errors(self, tol: float = TOL) -> list[str]:
        """Human-readable list of violated density-operator conditions."""
        errors = []
        herm = np.max(np.abs(self.matrix - self.matrix.conj().T))
        if herm > tol:
            errors.append(f"not Hermitian (max deviation {herm:.3g})")
        tr = self.trace()
        if abs(tr - 1.0) > tol:
            errors.append(f"trace {tr:.12g} != 1")
        if not errors:
            lowest = float(np.linalg.eigvalsh(self.matrix).min())
            if lowest < -tol:
                errors.append(f"negative eigenvalue {lowest:.3g}")
        return errors

    def is_valid(self, tol: float = TOL) -> bool:
        return not self.validity_errors(tol)

    def validate(self, tol: float = TOL) -> "DensityOperator":
        errors = self.validity_errors(tol)
        if errors:
            raise ValueError("invalid density operator: " + "; ".join(errors))
        return self

    def __add__(self, other: "DensityOperator") -> "DensityOperator":
        return DensityOperator(self.matrix + other.matrix)

    def __mul__(self, scalar) -> "DensityOperator":
        return DensityOperator(self.matrix * scalar)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"DensityOperator(num_qubits={self.num_qubits})"


def max_abs_diff(lhs, rhs) -> float:
    a = lhs.amplitudes if isinstance(lhs, StateVector) else np.asarray(lhs)
    b = rhs.amplitudes if isinstance(rhs, StateVector) else np.asarray(rhs)
    return float(np.max(np.abs(a - b)))


def basis_state(index: int, num_qubits: int) -> StateVector:
    amps = np.zeros(2**num_qubits, dtype=complex)
    amps[index] = 1.0
    return StateVector(amps)


def ket(bits: str) -> StateVector:
    """Computational ket from a string of ``1`` (up) / ``0`` (down) characters."""
    return basis_state(int(bits, 2), len(bits))


UP = ket("1")
DOWN = ket("0")


def tensor(*parts):
    """Kronecker product, leftmost argument on the most significant qubits.

    Works on :class:`StateVector` or :class:`DensityOperator` (not mixed).
    """
    if not parts:
        raise ValueError("tensor needs at least one operand")
    if all(isinstance(p, StateVector) for p in parts):
        out = parts[0].amplitudes
        for p in parts[1:]:
            out = np.kron(out, p.amplitudes)
        return StateVector(out)
    if all(isinstance(p, DensityOperator) for p in parts):
        out = parts[0].matrix
        for p in parts[1:]:
            out = np.kron(out, p.matrix)
        return DensityOperator(out)
    raise TypeError("tensor operands must all be StateVector or all DensityOperator")


def apply_local(amplitudes: np.ndarray, op: np.ndarray, qubit: int, num_qubits: int) -> np.ndarray:
    """Apply a single-qubit matrix to one qubit of a flat amplitude array."""
    psi = amplitudes.reshape((2,) * num_qubits)
    psi = np.tensordot(op, psi, axes=([1], [qubit]))
    return np.moveaxis(psi, 0, qubit).reshape(-1)


def basis_unitary(per_qubit: Sequence[BasisLabel]) -> np.ndarray:
    """Unitary whose columns are the product-basis kets for ``per_qubit`` labels."""
    out = np.ones((1, 1))
    for label in per_qubit:
        out = np.kron(out, BasisLabel.parse(label).unitary)
    return out


def change_basis(state: StateVector, per_qubit: Sequence[BasisLabel]) -> StateVector:
    """Coordinates of ``state`` in the product basis named by ``per_qubit``.

    The X change of coordinates is the Hadamard, so applying the same labels
    twice returns the input.
    """
    if len(per_qubit) != state.num_qubits:
        raise ValueError(
            f"{len(per_qubit)} basis labels given for a {state.num_qubits}-qubit state"
        )
    amps = state.amplitudes
    for q, label in enumerate(per_qubit):
        if BasisLabel.parse(label) is BasisLabel.X:
            amps = apply_local(amps, HADAMARD, q, state.num_qubits)
    return StateVector(amps)


def hex_ket(digit: int, basis: BasisLabel = BasisLabel.Z, num_qubits: int = 4) -> StateVector:
    """Product ket whose bit pattern is ``digit`` (MSB = first timeslot) in ``basis``."""
    if not 0 <= digit < 2**num_qubits:
        raise ValueError(f"digit {digit} out of range for {num_qubits} qubits")
    z = basis_state(digit, num_qubits)
    if BasisLabel.parse(basis) is BasisLabel.Z:
        return z
    # |d_x> has Z coordinates H^{(x)n} |d>
    return change_basis(z, [BasisLabel.X] * num_qubits)


def bell_states() -> dict[BellOutcome, StateVector]:
    r = 1 / np.sqrt(2)
    return {
        BellOutcome.PSI_PLUS: (ket("10") + ket("01")) * r,
        BellOutcome.PSI_MINUS: (ket("10") - ket("01")) * r,
        BellOutcome.PHI_PLUS: (ket("11") + ket("00")) * r,
        BellOutcome.PHI_MINUS: (ket("11") - ket("00")) * r,
    }


def singlet() -> StateVector:
    """(|up down> - |down up>)/sqrt(2)."""
    return (ket("10") - ket("01")) / np.sqrt(2)


def projector(state: StateVector) -> np.ndarray:
    return np.outer(state.amplitudes, state.amplitudes.conj())


def bell_projectors() -> list[np.ndarray]:
    return [projector(v) for v in bell_states().values()]


def product_projectors(per_qubit: Sequence[BasisLabel]) -> list[np.ndarray]:
    """Rank-1 projectors of a product-basis measurement, ordered by outcome index."""
    u = basis_unitary(per_qubit)
    return [np.outer(u[:, k], u[:, k].conj()) for k in range(u.shape[1])]


def embed(op: np.ndarray, qubits: Sequence[int], num_qubits: int) -> np.ndarray:
    """Extend an operator on ``qubits`` (in that order) to the full register."""
    k = len(qubits)
    if op.shape != (2**k, 2**k):
        raise ValueError("operator size does not match qubit list")
    rest = [q for q in range(num_qubits) if q not in qubits]
    full = np.kron(op, np.eye(2 ** len(rest)))
    order = list(qubits) + rest
    # permute tensor axes from `order` back to 0..n-1
    perm = np.argsort(order)
    t = full.reshape((2,) * (2 * num_qubits))
    t = t.transpose(list(perm) + [p + num_qubits for p in perm])
    return t.reshape(2**num_qubits, 2**num_qubits)


def _check_resolution(projectors: Sequence[np.ndarray], dim: int) -> None:
    total = sum(projectors)
    if np.max(np.abs(total - np.eye(dim))) > TOL:
        raise InvalidMeasurement("projectors do not resolve the identity")


def outcome_distribution(rho: DensityOperator, projectors: Sequence[np.ndarray]) -> np.ndarray:
    """Born probabilities ``tr(P_k rho)`` for a complete projector family."""
    _check_resolution(projectors, rho.dim)
    probs = np.array([np.real(np.trace(p @ rho.matrix)) for p in projectors])
    total = probs.sum()
    if total < 1e-12:
        raise InvalidMeasurement("total outcome probability vanishes")
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def measure_projective(
    rho: DensityOperator, projectors: Sequence[np.ndarray], rng: np.random.Generator
) -> tuple[int, DensityOperator]:
    """Sample one outcome by the Born rule and return the normalized post-state."""
    probs = outcome_distribution(rho, projectors)
    k = int(rng.choice(len(probs), p=probs))
    p = projectors[k]
    post = p @ rho.matrix @ p
    weight = np.real(np.trace(post))
    if weight < 1e-12:
        raise InvalidMeasurement("sampled outcome has vanishing weight")
    return k, DensityOperator(post / weight)


def partial_trace(rho: DensityOperator, keep: Sequence[int]) -> DensityOperator:
    """Reduced density operator on ``keep`` (kept in ascending order)."""
    keep = sorted(set(int(k) for k in keep))
    n = rho.num_qubits
    if not keep or keep[0] < 0 or keep[-1] >= n:
        raise ValueError(f"invalid qubit set {keep} for {n} qubits")
    if len(keep) == n:
        return DensityOperator(rho.matrix.copy())
    traced = [q for q in range(n) if q not in keep]
    t = rho.matrix.reshape((2,) * (2 * n))
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    row = list(letters[:n])
    col = list(letters[n : 2 * n])
    for q in traced:
        col[q] = row[q]
    out = "".join(row[q] for q in keep) + "".join(col[q] for q in keep)
    reduced = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    d = 2 ** len(keep)
    return DensityOperator(reduced.reshape(d, d))


def product_basis(per_qubit: Sequence[BasisLabel]) -> np.ndarray:
    return basis_unitary(per_qubit)


def bell_z_basis() -> np.ndarray:
    """Columns: Bell state on qubits (0,1) times Z ket on qubit 2, Bell-major."""
    cols = []
    for bell in bell_states().values():
        for z in (UP, DOWN):
            cols.append(np.kron(bell.amplitudes, z.amplitudes))
    return np.column_stack(cols)


def diagonal(rho: DensityOperator, basis: np.ndarray) -> np.ndarray:
    """Diagonal of ``rho`` in an orthonormal basis given as matrix columns."""
    basis = np.asarray(basis, dtype=complex)
    if np.max(np.abs(basis.conj().T @ basis - np.eye(basis.shape[1]))) > TOL:
        raise ValueError("basis columns are not orthonormal")
    diag = np.real(np.einsum("ik,ij,jk->k", basis.conj(), rho.matrix, basis))
    return diag
