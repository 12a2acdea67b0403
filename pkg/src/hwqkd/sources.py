"""Particle sources: honest, separable, coin-toss and Eve's replacement sources.

Every quantum source is described per timeslot group as a mixture of
components.  A component carries the particle-1 density (the same in every
timeslot and never correlated with particles 2 and 3) and either

* an i.i.d. pair density on (particle 2, particle 3) repeated in each
  timeslot, or
* a product of a 4-qubit state sent to Alice (particle 2) and a 4-qubit
  state sent to Bob (particle 3), which only makes sense for N = 1.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

from .qstate import (
    HADAMARD,
    TOL,
    BasisLabel,
    DensityOperator,
    StateVector,
    hex_ket,
    ket,
    singlet,
    tensor,
)

Q = np.exp(2j * np.pi / 3)

ONES_VARIANTS = (6, 7)
DEFAULT_ONES_VARIANT = 7


class UnsupportedConfiguration(ValueError):
    """Raised when a source is asked for a configuration it cannot represent."""


@dataclass(frozen=True)
class SourceParams:
    """Particle-1 amplitudes ``a`` (up) and ``b`` (down) plus group size ``N``.

    ``particle1`` selects how particle 1 is emitted.  ``"pure"`` sends the
    coherent state ``a|up> + b|down>``; ``"dephased"`` sends the diagonal
    mixture ``a^2 |up><up| + b^2 |down><down|``.  The two agree for every
    Z-basis statistic at Bob and differ once Bob measures in X.
    """

    a: float
    b: float
    N: int = 1
    particle1: str = "pure"

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ValueError("a and b must be finite reals")
        if abs(self.a**2 + self.b**2 - 1.0) > 1e-12:
            raise ValueError(f"a^2 + b^2 = {self.a**2 + self.b**2!r}, expected 1")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"group size N must be a positive integer, got {self.N!r}")
        if self.particle1 not in ("pure", "dephased"):
            raise ValueError(f"particle1 must be 'pure' or 'dephased', got {self.particle1!r}")

    @classmethod
    def from_a2(cls, a2: float, N: int = 1, particle1: str = "pure") -> "SourceParams":
        if not 0.0 <= a2 <= 1.0:
            raise ValueError(f"a^2 must lie in [0, 1], got {a2!r}")
        return cls(float(np.sqrt(a2)), float(np.sqrt(1.0 - a2)), N, particle1)

    @property
    def a2(self) -> float:
        return self.a**2

    @property
    def b2(self) -> float:
        return self.b**2

    def with_particle1(self, mode: str) -> "SourceParams":
        return SourceParams(self.a, self.b, self.N, mode)

    def particle1_density(self) -> np.ndarray:
        if self.particle1 == "dephased":
            return np.diag([self.b2, self.a2]).astype(complex)
        v = self.a * ket("1").amplitudes + self.b * ket("0").amplitudes
        return np.outer(v, v.conj())


class SourceKind(str, Enum):
    HONEST = "honest"
    SEPARABLE = "separable"
    COINS = "coins"
    MIXED_BASIS = "mixed"
    FIXED = "fixed"
    TUNED_ZEROS = "tuned-zeros"
    TUNED_ONES = "tuned-ones"
    TUNED_MIXTURE = "tuned-mixture"
    ILLUSION = "illusion"


EVE_KINDS = frozenset(
    {
        SourceKind.MIXED_BASIS,
        SourceKind.FIXED,
        SourceKind.TUNED_ZEROS,
        SourceKind.TUNED_ONES,
        SourceKind.TUNED_MIXTURE,
        SourceKind.ILLUSION,
    }
)


@dataclass(frozen=True)
class SourceModel:
    """A tagged source choice.

    ``basis`` is used by the mixed-basis replacement (``None`` means a fair
    random choice of Z or X per group).  ``hex2`` and ``hex3`` are the fixed
    4-qubit patterns for the fixed-sequence replacement.
    """

    kind: SourceKind
    basis: Optional[BasisLabel] = None
    hex2: Optional[int] = None
    hex3: Optional[int] = None

    def __post_init__(self):
        if self.kind is SourceKind.FIXED:
            for d in (self.hex2, self.hex3):
                if d is None or not 0 <= d <= 15:
                    raise ValueError("fixed source needs two hex digits 0..F")

    @property
    def is_eve(self) -> bool:
        return self.kind in EVE_KINDS

    @property
    def is_quantum(self) -> bool:
        return self.kind is not SourceKind.COINS

    @property
    def name(self) -> str:
        if self.kind is SourceKind.MIXED_BASIS:
            return "mixed" if self.basis is None else f"mixed-{self.basis.value.lower()}"
        if self.kind is SourceKind.FIXED:
            return f"fixed:{self.hex2:X}{self.hex3:X}"
        return self.kind.value

    @classmethod
    def parse(cls, name: str) -> "SourceModel":
        """Parse a CLI name such as ``honest``, ``mixed-z`` or ``fixed:C3``."""
        text = str(name).strip().lower()
        if text.startswith("fixed:"):
            digits = text.split(":", 1)[1]
            if len(digits) != 2:
                raise ValueError(f"fixed source needs two hex digits, got {name!r}")
            try:
                return cls(SourceKind.FIXED, hex2=int(digits[0], 16), hex3=int(digits[1], 16))
            except ValueError as exc:
                raise ValueError(f"bad hex digits in {name!r}") from exc
        if text in ("mixed-z", "mixed-x"):
            return cls(SourceKind.MIXED_BASIS, basis=BasisLabel(text[-1].upper()))
        try:
            return cls(SourceKind(text))
        except ValueError:
            known = sorted(k.value for k in SourceKind) + ["mixed-z", "mixed-x", "fixed:XY"]
            raise ValueError(f"unknown source {name!r}; expected one of {known}") from None

    def __str__(self) -> str:
        return self.name


HONEST = SourceModel(SourceKind.HONEST)
SEPARABLE = SourceModel(SourceKind.SEPARABLE)
COINS = SourceModel(SourceKind.COINS)
TUNED_ZEROS = SourceModel(SourceKind.TUNED_ZEROS)
TUNED_ONES = SourceModel(SourceKind.TUNED_ONES)
TUNED_MIXTURE = SourceModel(SourceKind.TUNED_MIXTURE)
ILLUSION = SourceModel(SourceKind.ILLUSION)


# ---------------------------------------------------------------------------
# pair and trio states


def singlet_density() -> np.ndarray:
    return singlet().density().matrix


def dephased_singlet(basis: BasisLabel = BasisLabel.Z) -> np.ndarray:
    """Equal mixture of the two anti-aligned product states in ``basis``."""
    u = np.kron(BasisLabel.parse(basis).unitary, BasisLabel.parse(basis).unitary)
    ud, du = u[:, 0b10], u[:, 0b01]
    return 0.5 * (np.outer(ud, ud.conj()) + np.outer(du, du.conj()))


def build_trio_state(params: SourceParams, model: SourceModel = HONEST) -> DensityOperator:
    """Three-qubit density (particle order 1, 2, 3) for an honest or separable source."""
    if model.kind is SourceKind.HONEST:
        rho1 = params.particle1_density()
        return DensityOperator(np.kron(rho1, singlet_density()))
    if model.kind is SourceKind.SEPARABLE:
        rho1 = np.diag([params.b2, params.a2]).astype(complex)
        return DensityOperator(np.kron(rho1, dephased_singlet(BasisLabel.Z)))
    raise UnsupportedConfiguration(f"no trio state for source {model.name!r}")


def honest_pure_state(params: SourceParams) -> StateVector:
    """(a|up> + b|down>) on particle 1 times the (2,3) singlet."""
    p1 = ket("1") * params.a + ket("0") * params.b
    return tensor(p1, singlet())


# ---------------------------------------------------------------------------
# tuned group states


def _check_role(role: int) -> None:
    if role not in (2, 3):
        raise ValueError(f"particle role must be 2 or 3, got {role!r}")


def psi_tuned(role: int, bits: str, variant: int = DEFAULT_ONES_VARIANT) -> StateVector:
    """Group state tuned so both Z and X spin sums are zero (``"00"``) or nonzero (``"11"``).

    The same amplitudes serve particle 2 and particle 3.  For ``"11"`` the
    last ket of the q^2 group is selected by ``variant``; only 7 (the
    complement of 8) keeps the X-basis spin sum away from zero.
    """
    _check_role(role)
    z = lambda d: hex_ket(d)  # noqa: E731
    if bits == "00":
        v = (z(0x3) + z(0xC)) + (z(0x5) + z(0xA)) * Q + (z(0x9) + z(0x6)) * Q**2
        return v / np.sqrt(6)
    if bits == "11":
        if variant not in ONES_VARIANTS:
            raise ValueError(f"ones-state variant must be one of {ONES_VARIANTS}")
        v = (
            (z(0x0) - z(0xF))
            + (z(0x1) + z(0x2) + z(0x4) + z(0x8)) * Q
            + (z(0xE) + z(0xD) + z(0xB) + z(variant)) * Q**2
        )
        return v / np.sqrt(10)
    raise ValueError(f"tuned bits must be '00' or '11', got {bits!r}")


def x_coordinates(state: StateVector) -> np.ndarray:
    """Amplitudes of a 4-qubit state on the X-basis hex kets."""
    h4 = _hadamard4()
    return h4.conj().T @ state.amplitudes


def mirror(state: StateVector) -> StateVector:
    """The state whose X-basis amplitudes equal the Z-basis amplitudes of ``state``."""
    return StateVector(_hadamard4() @ state.amplitudes)


def _hadamard4() -> np.ndarray:
    h2 = np.kron(HADAMARD, HADAMARD)
    return np.kron(h2, h2)


def zero_sum_probability(state: StateVector, basis: BasisLabel) -> float:
    """Probability that a 4-qubit group measured in ``basis`` has spin sum zero."""
    amps = state.amplitudes if BasisLabel.parse(basis) is BasisLabel.Z else x_coordinates(state)
    probs = np.abs(amps) ** 2
    return float(sum(probs[d] for d in BALANCED_PATTERNS))


BALANCED_PATTERNS = (0x3, 0x5, 0x6, 0x9, 0xA, 0xC)
EXTREME_PATTERNS = (0x0, 0xF)


class IllusionComponent(NamedTuple):
    weight: float
    particle2: StateVector
    particle3: StateVector
    label: str
    tuned: tuple[int, int]


def illusion_components() -> list[IllusionComponent]:
    """Ten pure product components of the illusion source, weights in 64ths."""
    r2 = np.sqrt(2)
    z = hex_ket
    alpha = (z(0x3) - z(0xC)) / r2
    beta = (z(0x5) - z(0xA)) / r2
    gamma = (z(0x9) - z(0x6)) / r2
    chi = (z(0x0) - z(0xF)) / r2
    phi = ((z(0x1) - z(0xE)) + (z(0x2) - z(0xD)) + (z(0x4) - z(0xB)) + (z(0x8) - z(0x7))) / (2 * r2)
    psi00 = psi_tuned(3, "00")
    table = [
        (9, psi00, "psi", (0, 0)),
        (5, alpha, "alpha", (0, 1)),
        (5, mirror(alpha), "alpha'", (1, 0)),
        (5, beta, "beta", (0, 1)),
        (5, mirror(beta), "beta'", (1, 0)),
        (5, gamma, "gamma", (0, 1)),
        (5, mirror(gamma), "gamma'", (1, 0)),
        (8, chi, "chi", (1, 1)),
        (8, mirror(chi), "chi'", (1, 1)),
        (9, phi, "phi", (1, 1)),
    ]
    return [IllusionComponent(w / 64.0, v, v, label, tuned) for w, v, label, tuned in table]


# ---------------------------------------------------------------------------
# group states


@dataclass(frozen=True)
class IIDComponent:
    """The same pair density (particle 2, particle 3) in every timeslot."""

    weight: float
    pair: np.ndarray
    label: str
    tuned: Optional[tuple[int, int]] = None


@dataclass(frozen=True)
class ProductComponent:
    """A 4-qubit state to Alice times a 4-qubit state to Bob (N = 1 only)."""

    weight: float
    psi2: np.ndarray
    psi3: np.ndarray
    label: str
    tuned: Optional[tuple[int, int]] = None


Component = IIDComponent | ProductComponent


@dataclass(frozen=True)
class GroupState:
    """Per-group mixture of components, sharing one particle-1 density."""

    model: SourceModel
    params: SourceParams
    rho1: np.ndarray
    components: tuple
    slots: int = field(default=4)

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    @property
    def is_iid(self) -> bool:
        return all(isinstance(c, IIDComponent) for c in self.components)

    def pair_density(self, component: Component) -> np.ndarray:
        """256x256 density on (particle-2 group, particle-3 group), N = 1 only."""
        if self.slots != 4:
            raise UnsupportedConfiguration("group pair densities are built for N = 1 only")
        if isinstance(component, ProductComponent):
            v = np.kron(component.psi2, component.psi3)
            return np.outer(v, v.conj())
        return iid_group_density(component.pair, 4)

    def total_pair_density(self) -> np.ndarray:
        return sum(c.weight * self.pair_density(c) for c in self.components)

    def density(self) -> DensityOperator:
        return DensityOperator(self.total_pair_density())


def iid_group_density(pair: np.ndarray, slots: int) -> np.ndarray:
    """Tensor power of a (2,3) pair density, reordered to particle-2 group first."""
    full = pair
    for _ in range(slots - 1):
        full = np.kron(full, pair)
    n = 2 * slots
    t = full.reshape((2,) * (2 * n))
    # qubit order is (2_1, 3_1, 2_2, 3_2, ...); bring all particle-2 qubits first
    order = [2 * t_ for t_ in range(slots)] + [2 * t_ + 1 for t_ in range(slots)]
    t = t.transpose(order + [o + n for o in order])
    return t.reshape(2**n, 2**n)


def build_group_state(model: SourceModel, params: SourceParams) -> GroupState:
    """Group-level description of any quantum source."""
    slots = 4 * params.N
    if model.kind is SourceKind.COINS:
        raise UnsupportedConfiguration("the coin source is classical; use sample_coins")
    if model.is_eve and params.N != 1:
        raise UnsupportedConfiguration(
            f"replacement source {model.name!r} is defined for N = 1 only (got N = {params.N})"
        )
    rho1 = params.particle1_density()
    kind = model.kind
    if kind is SourceKind.HONEST:
        comps = (IIDComponent(1.0, singlet_density(), "singlet"),)
    elif kind is SourceKind.SEPARABLE:
        rho1 = np.diag([params.b2, params.a2]).astype(complex)
        comps = (IIDComponent(1.0, dephased_singlet(BasisLabel.Z), "dephased-z"),)
    elif kind is SourceKind.MIXED_BASIS:
        bases = [BasisLabel.Z, BasisLabel.X] if model.basis is None else [model.basis]
        w = 1.0 / len(bases)
        comps = tuple(
            IIDComponent(w, dephased_singlet(b), f"dephased-{b.value.lower()}") for b in bases
        )
    elif kind is SourceKind.FIXED:
        comps = (
            ProductComponent(
                1.0,
                hex_ket(model.hex2).amplitudes,
                hex_ket(model.hex3).amplitudes,
                f"{model.hex2:X}{model.hex3:X}",
            ),
        )
    elif kind is SourceKind.TUNED_ZEROS:
        v = psi_tuned(3, "00").amplitudes
        comps = (ProductComponent(1.0, v, v, "psi00", (0, 0)),)
    elif kind is SourceKind.TUNED_ONES:
        v = psi_tuned(3, "11").amplitudes
        comps = (ProductComponent(1.0, v, v, "psi11", (1, 1)),)
    elif kind is SourceKind.TUNED_MIXTURE:
        v0 = psi_tuned(3, "00").amplitudes
        v1 = psi_tuned(3, "11").amplitudes
        comps = (
            ProductComponent(3 / 8, v0, v0, "psi00", (0, 0)),
            ProductComponent(5 / 8, v1, v1, "psi11", (1, 1)),
        )
    elif kind is SourceKind.ILLUSION:
        comps = tuple(
            ProductComponent(c.weight, c.particle2.amplitudes, c.particle3.amplitudes, c.label, c.tuned)
            for c in illusion_components()
        )
    else:  # pragma: no cover - exhaustive over SourceKind
        raise UnsupportedConfiguration(f"unhandled source {model.name!r}")
    total = sum(c.weight for c in comps)
    if abs(total - 1.0) > TOL:
        raise AssertionError(f"component weights sum to {total}")
    return GroupState(model, params, rho1, comps, slots)


# ---------------------------------------------------------------------------
# coin-toss source


@dataclass(frozen=True)
class CoinSpec:
    """Coin c1 shows +1 with probability ``p_heads_c1``; c2 and c4 are fair; c3 = -c2."""

    p_heads_c1: float

    def __post_init__(self):
        if not 0.0 <= self.p_heads_c1 <= 1.0:
            raise ValueError(f"P(c1 = +1) must lie in [0, 1], got {self.p_heads_c1!r}")

    @classmethod
    def from_params(cls, params: SourceParams) -> "CoinSpec":
        return cls(params.a2)


class CoinTosses(NamedTuple):
    c1: np.ndarray
    c2: np.ndarray
    c3: np.ndarray
    c4: np.ndarray


def coins_from_uniforms(spec: CoinSpec, u1: np.ndarray, bits: np.ndarray, slots: int) -> CoinTosses:
    """Coin values from one uniform per timeslot for c1 and a packed integer for c2, c4.

    ``bits`` holds ``2 * slots`` fair bits per row: the low ``slots`` bits are
    c2, the next ``slots`` bits are c4.
    """
    c1 = np.where(u1 < spec.p_heads_c1, 1, -1).astype(np.int8)
    shifts = np.arange(slots, dtype=np.uint64)
    b = bits.astype(np.uint64)[..., None]
    c2 = np.where((b >> shifts) & 1, 1, -1).astype(np.int8)
    c4 = np.where((b >> (shifts + np.uint64(slots))) & 1, 1, -1).astype(np.int8)
    return CoinTosses(c1, c2, (-c2).astype(np.int8), c4)


def sample_coins(spec: CoinSpec, rng: np.random.Generator, size: int, slots: int = 4) -> CoinTosses:
    """Draw ``size`` groups of ``slots`` coin tosses."""
    u1 = rng.random((size, slots))
    bits = rng.integers(0, 2 ** (2 * slots), size=size, dtype=np.uint64)
    return coins_from_uniforms(spec, u1, bits, slots)


def stream_key(*parts) -> int:
    """Stable 32-bit key for a tuple of printable parts."""
    return zlib.crc32("/".join(str(p) for p in parts).encode("utf-8"))


def model_names() -> list[str]:
    names = [k.value for k in SourceKind if k not in (SourceKind.FIXED,)]
    return names + ["mixed-z", "mixed-x", "fixed:<hex2><hex3>"]


def components_summary(state: GroupState) -> list[dict]:
    return [
        {"label": c.label, "weight": float(c.weight), "tuned": None if c.tuned is None else list(c.tuned)}
        for c in state.components
    ]

