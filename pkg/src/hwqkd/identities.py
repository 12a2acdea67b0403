"""Hex-ket expansion identities between the Z and X bases of a 4-qubit group.

Each check evaluates both sides as vectors in Z coordinates and reports the
max-abs difference.  The anti-balanced expansions are also evaluated in a
plausible but wrong form with ``-`` inside the X-basis pairs
(``kind="refuted"``, expected to fail) next to the form that holds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .qstate import TOL, BasisLabel, StateVector, hex_ket, max_abs_diff
from .sources import (
    BALANCED_PATTERNS,
    DEFAULT_ONES_VARIANT,
    ONES_VARIANTS,
    Q,
    illusion_components,
    mirror,
    psi_tuned,
    x_coordinates,
    zero_sum_probability,
)

Z = BasisLabel.Z
X = BasisLabel.X
R2 = np.sqrt(2)


@dataclass
class IdentityCheck:
    name: str
    description: str
    kind: str  # identity | refuted | infeasibility | selection
    value: float
    threshold: float
    passed: bool
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "kind": self.kind,
            "value": self.value,
            "threshold": self.threshold,
            "passed": self.passed,
            "details": self.details,
        }


def pair(d1: int, d2: int, sign: int, basis: BasisLabel) -> StateVector:
    """``|d1> + sign |d2>`` in ``basis`` (unnormalized)."""
    return hex_ket(d1, basis) + hex_ket(d2, basis) * sign


def combo(terms, basis: BasisLabel, inner_sign: int, scale: float) -> StateVector:
    """``scale * sum(coef * (|d1> + inner_sign |d2>))`` over ``(coef, d1, d2)`` terms."""
    out = None
    for coef, d1, d2 in terms:
        t = pair(d1, d2, inner_sign, basis) * coef
        out = t if out is None else out + t
    return out * scale


BALANCED_PAIRS = ((0x3, 0xC), (0x5, 0xA), (0x9, 0x6))
ODD_PAIRS = ((0x1, 0xE), (0x2, 0xD), (0x4, 0xB), (0x8, 0x7))


def _with_signs(pairs, signs):
    return [(s, d1, d2) for s, (d1, d2) in zip(signs, pairs)]


def _identity(name, description, lhs, rhs, kind="identity") -> IdentityCheck:
    diff = max_abs_diff(lhs, rhs)
    passed = diff < TOL
    return IdentityCheck(name, description, kind, diff, TOL, passed)


def balanced_pair_expansions() -> list[IdentityCheck]:
    """Balanced Z pairs written as sums of the four complement-symmetric X pairs."""
    out = []
    x_groups = ((0x0, 0xF),) + BALANCED_PAIRS
    for i, (d1, d2) in enumerate(BALANCED_PAIRS):
        signs = [1] + [1 if j == i else -1 for j in range(3)]
        rhs = combo(_with_signs(x_groups, signs), X, +1, 0.5)
        out.append(
            _identity(
                f"z-pair {d1:X}+{d2:X} in X",
                f"|{d1:X}_z>+|{d2:X}_z> equals half a signed sum of the symmetric X pairs",
                pair(d1, d2, +1, Z),
                rhs,
            )
        )
    rhs = combo(_with_signs(x_groups, [1, 1, 1, 1]), X, +1, 0.5)
    out.append(
        _identity(
            "z-pair 0+F in X",
            "|0_z>+|F_z> equals half the sum of all four symmetric X pairs",
            pair(0x0, 0xF, +1, Z),
            rhs,
        )
    )
    return out


def odd_pair_expansions() -> list[IdentityCheck]:
    """Antisymmetric Z pairs with odd spin sum, and the extreme pair 0-F."""
    out = [
        _identity(
            "z-pair 0-F in X",
            "|0_z>-|F_z> equals half the sum of the four odd symmetric X pairs",
            pair(0x0, 0xF, -1, Z),
            combo(_with_signs(ODD_PAIRS, [1, 1, 1, 1]), X, +1, 0.5),
        )
    ]
    for i, (d1, d2) in enumerate(ODD_PAIRS):
        signs = [-1 if j == i else 1 for j in range(4)]
        out.append(
            _identity(
                f"z-pair {d1:X}-{d2:X} in X",
                f"|{d1:X}_z>-|{d2:X}_z> is its own X pair negated plus the other three",
                pair(d1, d2, -1, Z),
                combo(_with_signs(ODD_PAIRS, signs), X, -1, 0.5),
            )
        )
    return out


def tuned_zero_dual_form() -> IdentityCheck:
    v = psi_tuned(3, "00")
    diff = float(np.max(np.abs(x_coordinates(v) - v.amplitudes)))
    return IdentityCheck(
        "zeros state dual form",
        "the zeros-tuned state has identical amplitudes on Z and X hex kets",
        "identity",
        diff,
        TOL,
        diff < TOL,
    )


def ones_variant_selection() -> IdentityCheck:
    """Pick the ones-state variant whose X spin sum is never zero."""
    zero_x = {
        v: zero_sum_probability(psi_tuned(3, "11", variant=v), X) for v in ONES_VARIANTS
    }
    zero_z = {
        v: zero_sum_probability(psi_tuned(3, "11", variant=v), Z) for v in ONES_VARIANTS
    }
    ok = [v for v in ONES_VARIANTS if zero_x[v] < TOL and zero_z[v] < TOL]
    chosen = DEFAULT_ONES_VARIANT
    details = {
        "variants": list(ONES_VARIANTS),
        "p_zero_sum_x": {str(k): v for k, v in zero_x.items()},
        "p_zero_sum_z": {str(k): v for k, v in zero_z.items()},
        "tuned_in_both_bases": ok,
        "selected": chosen,
    }
    return IdentityCheck(
        "ones state variant",
        "of the two candidate last kets (6, 7) only 7 keeps both spin sums nonzero",
        "selection",
        zero_x[chosen],
        TOL,
        ok == [chosen],
        details,
    )


def ones_state_x_form() -> IdentityCheck:
    """X amplitudes of the ones state: same layout with q and q^2 swapped, times -1."""
    v = psi_tuned(3, "11")
    z = lambda d: hex_ket(d)  # noqa: E731
    swapped = (
        (z(0x0) - z(0xF))
        + (z(0x1) + z(0x2) + z(0x4) + z(0x8)) * Q**2
        + (z(0xE) + z(0xD) + z(0xB) + z(0x7)) * Q
    ) / np.sqrt(10)
    diff = float(np.max(np.abs(x_coordinates(v) + swapped.amplitudes)))
    same = float(np.max(np.abs(x_coordinates(v) - v.amplitudes)))
    return IdentityCheck(
        "ones state X form",
        "X amplitudes equal minus the Z layout with q and q^2 exchanged",
        "identity",
        diff,
        TOL,
        diff < TOL,
        {"distance_to_identical_form": same},
    )


ANTI_SIGNS = ((-1, -1, 1, 1), (-1, 1, -1, 1), (-1, 1, 1, -1))


def anti_balanced_expansions() -> list[IdentityCheck]:
    """(3-C), (5-A), (9-6) over sqrt 2, expanded in X.

    The refuted form uses ``-`` inside each X pair; the form that holds uses
    ``+`` with the same outer signs.
    """
    out = []
    names = ("alpha", "beta", "gamma")
    for name, (d1, d2), signs in zip(names, BALANCED_PAIRS, ANTI_SIGNS):
        lhs = pair(d1, d2, -1, Z) / R2
        terms = _with_signs(ODD_PAIRS, signs)
        out.append(
            _identity(
                f"{name} X expansion (antisymmetric pairs)",
                f"(|{d1:X}_z>-|{d2:X}_z>)/sqrt2 with antisymmetric X pairs",
                lhs,
                combo(terms, X, -1, 1 / (2 * R2)),
                kind="refuted",
            )
        )
        out.append(
            _identity(
                f"{name} X expansion",
                f"(|{d1:X}_z>-|{d2:X}_z>)/sqrt2 with symmetric X pairs",
                lhs,
                combo(terms, X, +1, 1 / (2 * R2)),
            )
        )
    return out


def mirrored_expansions() -> list[IdentityCheck]:
    """The mirrored alpha state, stated by its Z expansion and its X form."""
    rhs = pair(0x3, 0xC, -1, X) / R2
    terms = _with_signs(ODD_PAIRS, ANTI_SIGNS[0])
    alpha = pair(0x3, 0xC, -1, Z) / R2
    return [
        _identity(
            "alpha' Z expansion (antisymmetric pairs)",
            "mirrored alpha from antisymmetric Z pairs equals (|3_x>-|C_x>)/sqrt2",
            combo(terms, Z, -1, 1 / (2 * R2)),
            rhs,
            kind="refuted",
        ),
        _identity(
            "alpha' Z expansion",
            "mirrored alpha from symmetric Z pairs equals (|3_x>-|C_x>)/sqrt2",
            combo(terms, Z, +1, 1 / (2 * R2)),
            rhs,
        ),
        _identity(
            "alpha' is mirror of alpha",
            "the mirror map sends (|3_z>-|C_z>)/sqrt2 to (|3_x>-|C_x>)/sqrt2",
            mirror(alpha),
            rhs,
        ),
    ]


def chi_phi_expansions() -> list[IdentityCheck]:
    chi = pair(0x0, 0xF, -1, Z) / R2
    phi_z = combo(_with_signs(ODD_PAIRS, [1, 1, 1, 1]), Z, -1, 1 / (2 * R2))
    phi_x = combo(_with_signs(ODD_PAIRS, [1, 1, 1, 1]), X, -1, 1 / (2 * R2))
    return [
        _identity(
            "chi X expansion",
            "(|0_z>-|F_z>)/sqrt2 is the normalized sum of the odd symmetric X pairs",
            chi,
            combo(_with_signs(ODD_PAIRS, [1, 1, 1, 1]), X, +1, 1 / (2 * R2)),
        ),
        _identity(
            "phi dual form",
            "the sum of odd antisymmetric pairs has the same form in Z and X",
            phi_z,
            phi_x,
        ),
    ]


def extreme_fit_residual() -> IdentityCheck:
    """Least-squares fit of |0_z>+|F_z> onto the balanced symmetric X pairs."""
    target = pair(0x0, 0xF, +1, Z).amplitudes
    basis = np.column_stack([pair(d1, d2, +1, X).amplitudes for d1, d2 in BALANCED_PAIRS])
    coef, *_ = np.linalg.lstsq(basis, target, rcond=None)
    residual = float(np.linalg.norm(target - basis @ coef))
    return IdentityCheck(
        "0+F outside balanced X span",
        "|0_z>+|F_z> cannot be built from balanced X pairs alone",
        "infeasibility",
        residual,
        0.5,
        residual >= 0.5,
        {"coefficients": [complex(c).real for c in coef]},
    )


def illusion_weight_check() -> IdentityCheck:
    total = sum(c.weight for c in illusion_components())
    return IdentityCheck(
        "illusion weights",
        "the ten illusion weights sum to one",
        "identity",
        abs(total - 1.0),
        TOL,
        abs(total - 1.0) < TOL,
    )


def balanced_support_check() -> IdentityCheck:
    probs = np.abs(psi_tuned(3, "00").amplitudes) ** 2
    target = np.zeros(16)
    target[list(BALANCED_PATTERNS)] = 1 / 6
    diff = float(np.max(np.abs(probs - target)))
    return IdentityCheck(
        "zeros state support",
        "the zeros-tuned state has probability 1/6 on each balanced pattern",
        "identity",
        diff,
        TOL,
        diff < TOL,
    )


def verify_state_identities() -> list[IdentityCheck]:
    """Every hex-ket identity the attack constructions rely on."""
    checks = []
    checks += balanced_pair_expansions()
    checks += odd_pair_expansions()
    checks.append(balanced_support_check())
    checks.append(tuned_zero_dual_form())
    checks.append(ones_variant_selection())
    checks.append(ones_state_x_form())
    checks += anti_balanced_expansions()
    checks += mirrored_expansions()
    checks += chi_phi_expansions()
    checks.append(extreme_fit_residual())
    checks.append(illusion_weight_check())
    return checks


def failures(checks: list[IdentityCheck]) -> list[IdentityCheck]:
    """Checks that count against the build (refuted forms are expected to fail)."""
    return [c for c in checks if c.kind != "refuted" and not c.passed]
