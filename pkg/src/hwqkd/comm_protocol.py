"""Communication protocol: criterion Q, Bob's spin sums and the coin-toss analogue."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .engine import (
    AliceSetting,
    alice_projectors,
    bob_effects,
    iid_ok_sum,
    ok_sum_joint,
)
from .montecarlo import (
    AttemptBatch,
    CoinSampler,
    Sampler,
    basis_index,
    block_uniforms,
    row_width,
    run_blocks,
    setting_index,
)
from .qstate import (
    BasisLabel,
    BellOutcome,
    DensityOperator,
    embed,
    measure_projective,
)
from .sources import (
    CoinSpec,
    IIDComponent,
    ProductComponent,
    SourceKind,
    SourceModel,
    SourceParams,
    UnsupportedConfiguration,
    build_group_state,
)

CommSetting = AliceSetting


class Decoded(str, Enum):
    CERTAINLY_A = "certainly_A"
    GUESS_B = "guess_B"


@dataclass(frozen=True)
class GroupTranscript:
    """One group: Alice's per-timeslot outcomes, her OK flag and Bob's results.

    ``alice_results`` holds outcome indices 0..3 (Bell outcomes for setting
    a, ``2 * u1 + u2`` for the product settings); ``bob_results`` holds +-1.
    """

    setting: AliceSetting
    alice_results: tuple
    ok: bool
    bob_results: tuple
    bob_spin_sum: int
    bob_basis: BasisLabel = BasisLabel.Z

    def __post_init__(self):
        slots = len(self.bob_results)
        if len(self.alice_results) != slots or slots % 4:
            raise ValueError("transcript needs 4N Alice and 4N Bob results")
        if self.bob_spin_sum != sum(self.bob_results):
            raise ValueError("bob_spin_sum does not match bob_results")
        if self.ok != criterion_q(self.alice_results, slots // 4):
            raise ValueError("ok flag disagrees with criterion Q")


def _outcome_index(r) -> int:
    if isinstance(r, BellOutcome):
        return r.value
    if isinstance(r, (tuple, list)):
        if len(r) != 2 or any(v not in (1, -1) for v in r):
            raise ValueError(f"pair outcome must be two of +-1, got {r!r}")
        return 2 * (r[0] > 0) + (r[1] > 0)
    r = int(r)
    if not 0 <= r <= 3:
        raise ValueError(f"outcome index must be 0..3, got {r!r}")
    return r


def criterion_q(alice_results: Sequence, N: int) -> bool:
    """True iff each of the four outcomes occurs exactly ``N`` times."""
    if len(alice_results) != 4 * N:
        raise ValueError(f"expected {4 * N} results for N = {N}, got {len(alice_results)}")
    idx = [_outcome_index(r) for r in alice_results]
    return all(idx.count(k) == N for k in range(4))


def decode_setting(spin_sum: int) -> Decoded:
    return Decoded.GUESS_B if int(spin_sum) == 0 else Decoded.CERTAINLY_A


# ---------------------------------------------------------------------------
# exact path


def coin_timeslot_table(spec: CoinSpec, setting: AliceSetting) -> np.ndarray:
    """Classical ``T[k, b]`` for one timeslot of the coin source, by enumeration."""
    setting = AliceSetting.parse(setting)
    if setting is AliceSetting.C_XX:
        raise UnsupportedConfiguration("the coin source has no X/X setting")
    t = np.zeros((4, 2))
    for c1, c2, c4 in itertools.product((1, -1), repeat=3):
        p = (spec.p_heads_c1 if c1 > 0 else 1 - spec.p_heads_c1) * 0.5 * 0.5
        c3 = -c2
        first, second = (c4, c1 * c2) if setting is AliceSetting.A_BELL else (c1, c2)
        k = 2 * (first > 0) + (second > 0)
        t[k, int(c3 > 0)] += p
    return t


def ok_and_sum(
    model: SourceModel,
    params: SourceParams,
    setting: AliceSetting,
    bob_basis: BasisLabel = BasisLabel.Z,
) -> tuple[float, dict]:
    """Exact P(ok) and the unnormalized joint P(ok, Bob sum = s)."""
    setting = AliceSetting.parse(setting)
    if model.kind is SourceKind.COINS:
        if BasisLabel.parse(bob_basis) is not BasisLabel.Z:
            raise UnsupportedConfiguration("Bob can only read coin c3")
        table = coin_timeslot_table(CoinSpec.from_params(params), setting)
        p_ok, joint = iid_ok_sum(table, params.N)
        slots = 4 * params.N
        return p_ok, {int(2 * j - slots): float(p) for j, p in enumerate(joint)}
    res = ok_sum_joint(build_group_state(model, params), setting, bob_basis)
    return res["p_ok"], res["joint"]


def p_ok(model, params, setting, bob_basis=BasisLabel.Z) -> float:
    return ok_and_sum(model, params, setting, bob_basis)[0]


def spin_sum_distribution_exact(
    model: SourceModel,
    params: SourceParams,
    setting: AliceSetting,
    condition_ok: bool = True,
    bob_basis: BasisLabel = BasisLabel.Z,
) -> dict:
    """Exact distribution of Bob's spin sum, optionally conditioned on OK.

    Without conditioning the map is the joint P(ok, s) plus the mass of the
    non-OK groups under the key ``None``.
    """
    pok, joint = ok_and_sum(model, params, setting, bob_basis)
    if not condition_ok:
        out = dict(joint)
        out[None] = 1.0 - pok
        return out
    if pok < 1e-15:
        raise ValueError("OK has probability zero; the conditional distribution is undefined")
    return {s: p / pok for s, p in joint.items()}


def moments(dist: dict) -> tuple[float, float]:
    """Mean and second moment of an integer spin-sum distribution."""
    keys = [k for k in dist if k is not None]
    w = np.array([dist[k] for k in keys], dtype=float)
    s = np.array(keys, dtype=float)
    total = w.sum()
    return float((w * s).sum() / total), float((w * s * s).sum() / total)


def misdecode_probability(params: SourceParams, N: int) -> float:
    """P(spin sum = 0 | setting a, OK) for groups of 4N.

    Given OK, 2N timeslots show spin up with probability a^2 and the other
    2N with probability b^2; the sum is zero when exactly 2N are up.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    ups = np.array([1.0])
    for p in [params.a2] * (2 * N) + [params.b2] * (2 * N):
        ups = np.convolve(ups, [1 - p, p])
    return float(ups[2 * N])


def coin_conditionals(params: SourceParams) -> dict:
    """P(c3 = x | c1 c2 = y) for x, y in {+1, -1}, keyed ``(x, y)``."""
    spec = CoinSpec.from_params(params)
    joint: dict = {}
    for c1, c2 in itertools.product((1, -1), repeat=2):
        p = (spec.p_heads_c1 if c1 > 0 else 1 - spec.p_heads_c1) * 0.5
        key = (-c2, c1 * c2)
        joint[key] = joint.get(key, 0.0) + p
    out = {}
    for y in (1, -1):
        total = sum(joint.get((x, y), 0.0) for x in (1, -1))
        for x in (1, -1):
            out[(x, y)] = joint.get((x, y), 0.0) / total
    return out


# ---------------------------------------------------------------------------
# sampled path


def run_group(
    model: SourceModel,
    params: SourceParams,
    setting: AliceSetting,
    rng: np.random.Generator,
    bob_basis: BasisLabel = BasisLabel.Z,
) -> GroupTranscript:
    """Sample one group by sequential projective measurement on explicit states."""
    setting = AliceSetting.parse(setting)
    bob_basis = BasisLabel.parse(bob_basis)
    slots = 4 * params.N
    if model.kind is SourceKind.COINS:
        from .sources import sample_coins

        coins = sample_coins(CoinSpec.from_params(params), rng, 1, slots)
        if setting is AliceSetting.C_XX or bob_basis is not BasisLabel.Z:
            raise UnsupportedConfiguration("the coin source supports settings a, b with Bob in Z")
        if setting is AliceSetting.A_BELL:
            pairs = list(zip(coins.c4[0], coins.c1[0] * coins.c2[0]))
        else:
            pairs = list(zip(coins.c1[0], coins.c2[0]))
        alice = tuple(_outcome_index((int(a), int(b))) for a, b in pairs)
        bob = tuple(int(c) for c in coins.c3[0])
        return GroupTranscript(setting, alice, criterion_q(alice, params.N), bob, sum(bob), bob_basis)

    state = build_group_state(model, params)
    ci = int(rng.choice(len(state.components), p=state.weights))
    comp = state.components[ci]
    a_proj = alice_projectors(setting)
    b_proj = list(bob_effects(bob_basis))
    alice, bob = [], []
    if isinstance(comp, IIDComponent):
        a3 = [embed(p, [0, 1], 3) for p in a_proj]
        b3 = [embed(p, [2], 3) for p in b_proj]
        for _ in range(slots):
            rho = DensityOperator(np.kron(state.rho1, comp.pair))
            k, post = measure_projective(rho, a3, rng)
            b, _ = measure_projective(post, b3, rng)
            alice.append(k)
            bob.append(1 if b == 1 else -1)
    elif isinstance(comp, ProductComponent):
        p1 = _unravel_particle1(state.rho1, rng, 4)
        # qubits: particle-1 slots 0..3, particle-2 slots 4..7
        rho = DensityOperator(np.outer(np.kron(p1, comp.psi2), np.kron(p1, comp.psi2).conj()))
        for t in range(4):
            k, rho = measure_projective(rho, [embed(p, [t, 4 + t], 8) for p in a_proj], rng)
            alice.append(k)
        rho3 = DensityOperator(np.outer(comp.psi3, comp.psi3.conj()))
        for t in range(4):
            b, rho3 = measure_projective(rho3, [embed(p, [t], 4) for p in b_proj], rng)
            bob.append(1 if b == 1 else -1)
    alice_t, bob_t = tuple(alice), tuple(bob)
    return GroupTranscript(setting, alice_t, criterion_q(alice_t, params.N), bob_t, sum(bob_t), bob_basis)


def _unravel_particle1(rho1: np.ndarray, rng: np.random.Generator, slots: int) -> np.ndarray:
    """A pure particle-1 product state drawn from the eigen-decomposition of ``rho1``."""
    w, v = np.linalg.eigh(rho1)
    w = np.clip(w, 0, None)
    w = w / w.sum()
    out = np.array([1.0 + 0j])
    for _ in range(slots):
        i = rng.choice(2, p=w)
        out = np.kron(out, v[:, i])
    return out


def make_sampler(model: SourceModel, params: SourceParams, intercept: Optional[str] = None):
    if model.kind is SourceKind.COINS:
        if intercept:
            raise UnsupportedConfiguration("interception needs a quantum source")
        return CoinSampler(CoinSpec.from_params(params), 4 * params.N)
    return Sampler(build_group_state(model, params), intercept)


@dataclass
class SampledDistribution:
    attempts: int
    ok: int
    counts: dict

    @property
    def frequencies(self) -> dict:
        return {k: v / self.ok for k, v in self.counts.items()} if self.ok else {}

    def as_dict(self) -> dict:
        return {"attempts": self.attempts, "ok": self.ok, "counts": {str(k): v for k, v in self.counts.items()}}


def sample_spin_sums(
    model: SourceModel,
    params: SourceParams,
    setting: AliceSetting,
    attempts: int,
    seed: int,
    workers: int = 1,
    bob_basis: BasisLabel = BasisLabel.Z,
    stream: Optional[str] = None,
) -> SampledDistribution:
    """Histogram of Bob's spin sum over OK groups among ``attempts`` sampled groups."""
    sampler = make_sampler(model, params)
    si, bi = setting_index(setting), basis_index(bob_basis)
    slots = 4 * params.N
    width = row_width(slots)
    stream = stream or f"dist/{model.name}/{AliceSetting.parse(setting).value}/{bob_basis}/{params.a2!r}/{params.N}"

    def one(block, lo, hi):
        u = block_uniforms(seed, stream, block, width)[: hi - lo]
        m = hi - lo
        batch = sampler.sample(np.full(m, si), np.full(m, bi), u)
        ok = batch.ok()
        sums = batch.bob_sum()[ok]
        return int(ok.sum()), np.bincount((sums + slots) // 2, minlength=slots + 1)

    parts = run_blocks(attempts, one, workers)
    ok = sum(p[0] for p in parts)
    hist = sum(p[1] for p in parts) if parts else np.zeros(slots + 1, dtype=int)
    counts = {int(2 * j - slots): int(c) for j, c in enumerate(hist)}
    return SampledDistribution(attempts, ok, counts)


def run_protocol(
    model: SourceModel,
    params: SourceParams,
    groups: int,
    seed: int,
    workers: int = 1,
) -> dict:
    """Alice picks setting a or b uniformly per group; Bob decodes OK groups.

    Returns counts of (Alice's setting, Bob's decoding) over OK groups.
    """
    sampler = make_sampler(model, params)
    slots = 4 * params.N
    width = row_width(slots)
    stream = f"protocol/{model.name}/{params.a2!r}/{params.N}"

    def one(block, lo, hi):
        u = block_uniforms(seed, stream, block, width)[: hi - lo]
        settings = (u[:, 0] >= 0.5).astype(np.int8)  # 0 = a, 1 = b
        batch: AttemptBatch = sampler.sample(settings, np.zeros(hi - lo, dtype=np.int8), u)
        ok = batch.ok()
        nonzero = batch.bob_sum() != 0
        out = np.zeros((2, 2), dtype=np.int64)
        for s in (0, 1):
            sel = ok & (settings == s)
            out[s, 0] = np.count_nonzero(sel & nonzero)
            out[s, 1] = np.count_nonzero(sel & ~nonzero)
        return out, np.bincount(settings, minlength=2)

    parts = run_blocks(groups, one, workers)
    table = sum(p[0] for p in parts)
    sent = sum(p[1] for p in parts)
    return {
        "groups": groups,
        "sent": {"a": int(sent[0]), "b": int(sent[1])},
        "decoded": {
            "a": {"certainly_A": int(table[0, 0]), "guess_B": int(table[0, 1])},
            "b": {"certainly_A": int(table[1, 0]), "guess_B": int(table[1, 1])},
        },
    }
