"""Eve's strategies: intercept-resend and source replacement, with her bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np

from .engine import BASES, intercept_channel, pattern_probs
from .montecarlo import cumulative, search
from .qstate import BasisLabel, DensityOperator, partial_trace
from .sources import (
    BALANCED_PATTERNS,
    HONEST,
    GroupState,
    ProductComponent,
    SourceModel,
    SourceParams,
    UnsupportedConfiguration,
    build_group_state,
)

INTERCEPT_POLICIES = ("per_group", "per_particle")


class EveKind(str, Enum):
    NONE = "none"
    INTERCEPT = "intercept"
    REPLACE = "replace"


@dataclass(frozen=True)
class EveStrategy:
    """No Eve, intercept-resend on particle 3, or a replacement source.

    ``schedule`` optionally overrides the component weights of the
    replacement source (same order as its components).
    """

    kind: EveKind = EveKind.NONE
    policy: str = "per_group"
    model: Optional[SourceModel] = None
    schedule: Optional[tuple] = None

    def __post_init__(self):
        if self.kind is EveKind.INTERCEPT and self.policy not in INTERCEPT_POLICIES:
            raise ValueError(f"intercept policy must be one of {INTERCEPT_POLICIES}")
        if self.kind is EveKind.REPLACE:
            if self.model is None:
                raise ValueError("a replacement strategy needs a source model")
            if self.schedule is not None:
                w = np.asarray(self.schedule, dtype=float)
                if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                    raise ValueError("schedule weights must be non-negative and sum to 1")

    @classmethod
    def none(cls) -> "EveStrategy":
        return cls()

    @classmethod
    def intercept(cls, policy: str = "per_group") -> "EveStrategy":
        return cls(EveKind.INTERCEPT, policy=policy)

    @classmethod
    def replace_source(cls, model: SourceModel | str, schedule=None) -> "EveStrategy":
        if isinstance(model, str):
            model = SourceModel.parse(model)
        return cls(EveKind.REPLACE, model=model, schedule=None if schedule is None else tuple(schedule))

    @classmethod
    def parse(cls, name: str | None) -> "EveStrategy":
        """``none``, ``intercept``, ``intercept:per_particle`` or a replacement source name."""
        if name is None:
            return cls.none()
        text = str(name).strip().lower()
        if text in ("", "none"):
            return cls.none()
        if text.startswith("intercept"):
            policy = text.split(":", 1)[1] if ":" in text else "per_group"
            return cls.intercept(policy)
        model = SourceModel.parse(text)
        if not model.is_eve:
            raise ValueError(f"{name!r} is not one of Eve's sources")
        return cls.replace_source(model)

    @property
    def name(self) -> str:
        if self.kind is EveKind.NONE:
            return "none"
        if self.kind is EveKind.INTERCEPT:
            return "intercept" if self.policy == "per_group" else f"intercept:{self.policy}"
        return self.model.name

    @property
    def intercept_policy(self) -> Optional[str]:
        return self.policy if self.kind is EveKind.INTERCEPT else None

    def source_model(self, honest: SourceModel = HONEST) -> SourceModel:
        return self.model if self.kind is EveKind.REPLACE else honest

    def group_state(self, params: SourceParams, honest: SourceModel = HONEST) -> GroupState:
        state = build_group_state(self.source_model(honest), params)
        if self.schedule is not None:
            state = reweighted(state, self.schedule)
        return state


def reweighted(state: GroupState, schedule) -> GroupState:
    w = list(schedule)
    if len(w) != len(state.components):
        raise ValueError(f"schedule has {len(w)} weights for {len(state.components)} components")
    comps = tuple(replace(c, weight=float(x)) for c, x in zip(state.components, w))
    return GroupState(state.model, state.params, state.rho1, comps, state.slots)


@dataclass
class EveRecord:
    """Per-attempt view of what Eve chose and what she expects Bob to decode.

    ``predicted`` holds Bob's decoded bit when it is certain given the
    component and Bob's basis, else -1.
    """

    component: np.ndarray
    eve_basis: np.ndarray
    predicted: np.ndarray
    measured: Optional[np.ndarray] = None


def predicted_bits(state: GroupState) -> np.ndarray:
    """``P[component, bob_basis]`` = Bob's certain decoded bit, or -1 when random."""
    out = np.full((len(state.components), 2), -1, dtype=np.int8)
    for ci, c in enumerate(state.components):
        if not isinstance(c, ProductComponent):
            continue
        for bi, b in enumerate(BASES):
            p0 = pattern_probs(c.psi3, b)[list(BALANCED_PATTERNS)].sum()
            if p0 > 1 - 1e-9:
                out[ci, bi] = 0
            elif p0 < 1e-9:
                out[ci, bi] = 1
    return out


def choose_replacement(schedule, rng: np.random.Generator, size: int | None = None):
    """Component indices drawn with the schedule weights."""
    cum = cumulative(schedule)
    u = rng.random(size)
    return search(cum, np.asarray(u))


def intercept(
    group_density: DensityOperator,
    policy: str,
    rng: np.random.Generator,
) -> tuple[dict, DensityOperator]:
    """Eve measures all four particle-3 qubits and resends her results.

    ``group_density`` is the 256-dim (particle-2 group, particle-3 group)
    state.  Returns Eve's record (bases and bits) and the state Bob receives.
    """
    from .qstate import embed, measure_projective

    if policy not in INTERCEPT_POLICIES:
        raise ValueError(f"intercept policy must be one of {INTERCEPT_POLICIES}")
    if group_density.num_qubits != 8:
        raise UnsupportedConfiguration("intercept works on 4-timeslot groups")
    if policy == "per_group":
        bases = [BASES[int(rng.integers(2))]] * 4
    else:
        bases = [BASES[int(rng.integers(2))] for _ in range(4)]
    rho = group_density
    bits = []
    for t, basis in enumerate(bases):
        u = basis.unitary.astype(complex)
        projs = [embed(np.outer(u[:, e], u[:, e].conj()), [4 + t], 8) for e in (0, 1)]
        e, rho = measure_projective(rho, projs, rng)
        bits.append(e)
    # the collapsed particle-3 eigenstates are resent as they are
    return {"bases": [b.value for b in bases], "bits": bits}, rho


def resend_pair(pair: np.ndarray, basis: BasisLabel) -> np.ndarray:
    """Measure-and-resend on the particle-3 half of a 4x4 pair density."""
    u = BasisLabel.parse(basis).unitary.astype(complex)
    out = np.zeros_like(pair, dtype=complex)
    for e in (0, 1):
        op = np.kron(np.eye(2), np.outer(u[:, e], u[:, e].conj()))
        out += op @ pair @ op
    return out


def effective_group_state(strategy: EveStrategy, params: SourceParams, honest: SourceModel = HONEST) -> GroupState:
    """Group state Alice and Bob effectively share under ``strategy``.

    Per-group interception becomes an equal mixture of the two basis
    channels applied to every timeslot; per-particle interception is the
    average channel applied independently per timeslot.
    """
    state = strategy.group_state(params, honest)
    if strategy.kind is not EveKind.INTERCEPT:
        return state
    if not state.is_iid:
        raise UnsupportedConfiguration("interception is modelled on i.i.d. sources only")
    comps = []
    for c in state.components:
        if strategy.policy == "per_group":
            for b in BASES:
                comps.append(replace(c, weight=c.weight / 2, pair=resend_pair(c.pair, b), label=f"{c.label}/eve-{b.value}"))
        else:
            avg = 0.5 * sum(resend_pair(c.pair, b) for b in BASES)
            comps.append(replace(c, pair=avg, label=f"{c.label}/eve-random"))
    return GroupState(state.model, state.params, state.rho1, tuple(comps), state.slots)


def alice_marginal(group_density: DensityOperator) -> DensityOperator:
    return partial_trace(group_density, keep=range(4))


def intercept_average(pair_density: np.ndarray, policy: str = "per_group") -> np.ndarray:
    """Average state Bob and Alice share after interception (Eve's results discarded)."""
    if policy == "per_group":
        return 0.5 * sum(intercept_channel(pair_density, b) for b in BASES)
    raise UnsupportedConfiguration("the averaged channel is provided for per_group only")


def eve_accuracy(session) -> Optional[float]:
    """Fraction of sifted bits where Eve's certain prediction equals Bob's bit.

    ``None`` when no Eve is present; raises for intercept-resend, where Eve
    holds partial information only (see :func:`basis_match_rate`).
    """
    strategy = session.strategy
    if strategy.kind is EveKind.NONE:
        return None
    if strategy.kind is EveKind.INTERCEPT:
        raise ValueError("Eve's accuracy is undefined under intercept-resend; use basis_match_rate")
    idx = session.sifted_attempts
    if len(idx) == 0:
        return None
    pred = session.eve.predicted[idx]
    bob = session.bob_bits[idx]
    return float(np.mean(pred == bob))


def basis_match_rate(session) -> dict:
    """Intercept-resend: how often Eve's basis matched Bob's on sifted groups."""
    if session.strategy.kind is not EveKind.INTERCEPT or session.strategy.policy != "per_group":
        raise ValueError("basis_match_rate applies to per-group intercept-resend")
    idx = session.sifted_attempts
    match = session.eve.eve_basis[idx] == session.attempts.bob_basis[idx]
    return {"sifted": int(len(idx)), "matched": int(match.sum()), "rate": float(match.mean()) if len(idx) else None}


def predicted_tables(strategy: EveStrategy, params: SourceParams) -> dict:
    """Exact error table under ``strategy`` (see :func:`qkd_protocol.error_table_exact`)."""
    from .qkd_protocol import error_table_exact

    return error_table_exact(strategy, params)
