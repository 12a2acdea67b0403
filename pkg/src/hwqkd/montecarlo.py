"""Deterministic, block-parallel Monte Carlo sampling of protocol attempts.

Random numbers are drawn in fixed-size blocks of rows.  Block ``i`` of a
named stream always comes from ``SeedSequence([seed, crc32(stream), i])``,
so results do not depend on how blocks are scheduled over workers, and
growing a run only appends rows.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .engine import (
    AliceSetting,
    SETTINGS,
    BASES,
    effective_povm,
    intercept_table,
    pattern_probs,
    timeslot_table,
)
from .qstate import BasisLabel
from .sources import (
    CoinSpec,
    GroupState,
    IIDComponent,
    ProductComponent,
    UnsupportedConfiguration,
    coins_from_uniforms,
    stream_key,
)

BLOCK_ROWS = 4096
SEED_MASK = (1 << 64) - 1

# uniform columns shared by every attempt row
COL_RAW = 0  # raw key bit / protocol-level choice
COL_ENC = 1  # encoding bit
COL_BOB = 2  # Bob's basis
COL_CHECK = 3  # check-sample selection
COL_COMPONENT = 4  # source component
COL_EVE = 5  # Eve's per-group basis
FIRST_SLOT_COL = 6


def row_width(slots: int) -> int:
    """Alice, Eve and Bob each get one uniform per timeslot."""
    return FIRST_SLOT_COL + 3 * slots


def block_generator(seed: int, stream: str, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & SEED_MASK, stream_key(stream), int(block)])
    return np.random.Generator(np.random.PCG64(ss))


def block_uniforms(seed: int, stream: str, block: int, width: int, rows: int = BLOCK_ROWS) -> np.ndarray:
    """The full ``(rows, width)`` uniform block; callers slice what they need."""
    return block_generator(seed, stream, block).random((rows, width))


def group_uniforms(seed: int, stream: str, start: int, stop: int, width: int) -> np.ndarray:
    """Uniform rows ``start:stop`` of a stream, independent of block scheduling."""
    if stop <= start:
        return np.empty((0, width))
    first, last = start // BLOCK_ROWS, (stop - 1) // BLOCK_ROWS
    parts = []
    for b in range(first, last + 1):
        blk = block_uniforms(seed, stream, b, width)
        lo = max(start - b * BLOCK_ROWS, 0)
        hi = min(stop - b * BLOCK_ROWS, BLOCK_ROWS)
        parts.append(blk[lo:hi])
    return np.concatenate(parts, axis=0)


def run_blocks(
    n_rows: int, fn: Callable[[int, int, int], object], workers: int = 1, block_rows: int = BLOCK_ROWS
) -> list:
    """Apply ``fn(block, lo, hi)`` to every block of ``n_rows`` rows, results in block order."""
    n_blocks = (n_rows + block_rows - 1) // block_rows
    jobs = [(b, b * block_rows, min((b + 1) * block_rows, n_rows)) for b in range(n_blocks)]
    if workers <= 1 or n_blocks <= 1:
        return [fn(*j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda j: fn(*j), jobs))


def search(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF lookup; zero-probability cells are never returned."""
    idx = np.searchsorted(cum, u, side="right")
    return np.minimum(idx, len(cum) - 1)


def cumulative(p: np.ndarray) -> np.ndarray:
    p = np.clip(np.asarray(p, dtype=float).ravel(), 0.0, None)
    c = np.cumsum(p)
    if c[-1] <= 0:
        raise UnsupportedConfiguration("cannot sample from an all-zero distribution")
    return c / c[-1]


@dataclass
class AttemptBatch:
    """Structure-of-arrays record of sampled group attempts."""

    setting: np.ndarray  # int8, index into SETTINGS
    bob_basis: np.ndarray  # int8, 0 = Z, 1 = X
    alice: np.ndarray  # int8 (n, slots) outcome index
    bob: np.ndarray  # int8 (n, slots) bit, 1 = up
    component: np.ndarray  # int16, -1 when the source has no components to pick
    eve_basis: np.ndarray  # int8, -1 when Eve does not measure per group
    eve_bits: Optional[np.ndarray] = None  # int8 (n, slots) Eve's intercepted results

    def __len__(self) -> int:
        return len(self.setting)

    @property
    def slots(self) -> int:
        return self.alice.shape[1]

    def ok(self) -> np.ndarray:
        return criterion_q_rows(self.alice)

    def bob_sum(self) -> np.ndarray:
        return 2 * self.bob.sum(axis=1, dtype=np.int32) - self.slots

    def alice_local_bits(self) -> np.ndarray:
        """Particle-2 bits (meaningful for the Z/Z and X/X settings only)."""
        return (self.alice & 1).astype(np.int8)

    def alice_local_sum(self) -> np.ndarray:
        return 2 * self.alice_local_bits().sum(axis=1, dtype=np.int32) - self.slots

    @staticmethod
    def concat(batches: list["AttemptBatch"]) -> "AttemptBatch":
        eve = None
        if batches and batches[0].eve_bits is not None:
            eve = np.concatenate([b.eve_bits for b in batches])
        return AttemptBatch(
            np.concatenate([b.setting for b in batches]),
            np.concatenate([b.bob_basis for b in batches]),
            np.concatenate([b.alice for b in batches]),
            np.concatenate([b.bob for b in batches]),
            np.concatenate([b.component for b in batches]),
            np.concatenate([b.eve_basis for b in batches]),
            eve,
        )

    def take(self, idx) -> "AttemptBatch":
        return AttemptBatch(
            self.setting[idx],
            self.bob_basis[idx],
            self.alice[idx],
            self.bob[idx],
            self.component[idx],
            self.eve_basis[idx],
            None if self.eve_bits is None else self.eve_bits[idx],
        )


def criterion_q_rows(alice: np.ndarray) -> np.ndarray:
    """Row-wise criterion Q: each of the four outcomes exactly ``slots/4`` times."""
    n = alice.shape[1] // 4
    counts = np.stack([(alice == k).sum(axis=1) for k in range(4)], axis=1)
    return np.all(counts == n, axis=1)


def _pattern_index_to_slots(idx: np.ndarray, base: int, slots: int) -> np.ndarray:
    """Split a flat index over ``base**slots`` cells into per-slot digits (MSB first)."""
    out = np.empty((len(idx), slots), dtype=np.int8)
    for t in range(slots):
        out[:, t] = (idx // base ** (slots - 1 - t)) % base
    return out


def alice_pattern_probs(rho1: np.ndarray, psi2: np.ndarray, setting: AliceSetting) -> np.ndarray:
    """P(k_1..k_4) for a 4-qubit particle-2 state, flattened to 256 cells."""
    es = effective_povm(rho1, setting)
    rho = np.outer(psi2, psi2.conj()).reshape((2,) * 8)
    res = rho
    for qb in range(4):
        nk = 4 - qb
        res = np.tensordot(es, res, axes=([2, 1], [qb, qb + nk]))
        res = np.moveaxis(res, 0, qb)
    return np.real(res).ravel()


class Sampler:
    """Born-rule sampler for attempts on a quantum group source.

    ``intercept`` is ``None``, ``"per_group"`` (one Eve basis for the whole
    group) or ``"per_particle"`` (a fresh basis per timeslot); interception
    is supported for i.i.d. sources only.
    """

    def __init__(self, state: GroupState, intercept: Optional[str] = None):
        if intercept not in (None, "per_group", "per_particle"):
            raise ValueError(f"unknown intercept policy {intercept!r}")
        if intercept is not None and not state.is_iid:
            raise UnsupportedConfiguration("interception is modelled on i.i.d. sources only")
        self.state = state
        self.intercept = intercept
        self.slots = state.slots
        self.comp_cum = cumulative(state.weights)
        self._tables: dict = {}

    def _iid_table(self, ci: int, si: int, bi: int, ei: int) -> np.ndarray:
        """Per-timeslot ``T[k, e, b]``; ``e`` has size 1 without interception."""
        key = ("iid", ci, si, bi, ei)
        if key not in self._tables:
            comp = self.state.components[ci]
            setting, bob = SETTINGS[si], BASES[bi]
            rho1 = self.state.rho1
            if self.intercept is None:
                t = timeslot_table(rho1, comp.pair, setting, bob)[:, None, :]
            elif self.intercept == "per_group":
                t = intercept_table(rho1, comp.pair, setting, BASES[ei], bob)
            else:
                # Eve's record is (basis, bit): e = 2 * basis + bit
                t = 0.5 * np.concatenate(
                    [intercept_table(rho1, comp.pair, setting, b, bob) for b in BASES], axis=1
                )
            self._tables[key] = t
        return self._tables[key]

    def _product_tables(self, ci: int, si: int, bi: int):
        key = ("prod", ci, si, bi)
        if key not in self._tables:
            comp = self.state.components[ci]
            pa = alice_pattern_probs(self.state.rho1, comp.psi2, SETTINGS[si])
            pb = pattern_probs(comp.psi3, BASES[bi])
            self._tables[key] = (cumulative(pa), cumulative(pb))
        return self._tables[key]

    def sample(self, settings: np.ndarray, bob_bases: np.ndarray, u: np.ndarray) -> AttemptBatch:
        n, slots = len(settings), self.slots
        alice = np.zeros((n, slots), dtype=np.int8)
        bob = np.zeros((n, slots), dtype=np.int8)
        eve_bits = np.full((n, slots), -1, dtype=np.int8) if self.intercept else None
        comp = search(self.comp_cum, u[:, COL_COMPONENT]).astype(np.int16)
        if self.intercept == "per_group":
            eve_basis = (u[:, COL_EVE] >= 0.5).astype(np.int8)
        else:
            eve_basis = np.full(n, -1, dtype=np.int8)
        ua = u[:, FIRST_SLOT_COL : FIRST_SLOT_COL + slots]
        ue = u[:, FIRST_SLOT_COL + slots : FIRST_SLOT_COL + 2 * slots]
        ub = u[:, FIRST_SLOT_COL + 2 * slots : FIRST_SLOT_COL + 3 * slots]
        ncomp = len(self.state.components)
        combo = ((comp.astype(np.int64) * 3 + settings) * 2 + bob_bases) * 2 + np.maximum(eve_basis, 0)
        for key in np.unique(combo):
            rows = np.nonzero(combo == key)[0]
            ei = int(key % 2)
            bi = int((key // 2) % 2)
            si = int((key // 4) % 3)
            ci = int(key // 12)
            assert ci < ncomp
            c = self.state.components[ci]
            if isinstance(c, IIDComponent):
                t = self._iid_table(ci, si, bi, ei)
                pk = t.sum(axis=(1, 2))
                k = search(cumulative(pk), ua[rows]).astype(np.int8)
                pke = t.sum(axis=2)
                with np.errstate(invalid="ignore", divide="ignore"):
                    cond_e = np.cumsum(pke, axis=1) / pke.sum(axis=1, keepdims=True)
                    p_up = t[:, :, 1] / t.sum(axis=2)
                cond_e = np.nan_to_num(cond_e, nan=1.0)
                p_up = np.nan_to_num(p_up, nan=0.0)
                e = (ue[rows][:, :, None] >= cond_e[k]).sum(axis=2)
                e = np.minimum(e, t.shape[1] - 1)
                b = (ub[rows] < p_up[k, e]).astype(np.int8)
                alice[rows] = k
                bob[rows] = b
                if eve_bits is not None:
                    eve_bits[rows] = (e & 1) if self.intercept == "per_particle" else e
            elif isinstance(c, ProductComponent):
                if slots != 4:
                    raise UnsupportedConfiguration("product components need N = 1")
                cum_a, cum_b = self._product_tables(ci, si, bi)
                ia = search(cum_a, ua[rows, 0])
                ib = search(cum_b, ub[rows, 0])
                alice[rows] = _pattern_index_to_slots(ia, 4, 4)
                bob[rows] = _pattern_index_to_slots(ib, 2, 4)
            else:  # pragma: no cover
                raise TypeError(type(c))
        if len(self.state.components) == 1:
            comp[:] = 0
        return AttemptBatch(
            settings.astype(np.int8), bob_bases.astype(np.int8), alice, bob, comp, eve_basis, eve_bits
        )


class CoinSampler:
    """Attempt sampler for the coin-toss source.

    Setting ``a`` reads (c4, c1*c2) per timeslot, setting ``b`` reads
    (c1, c2); Bob reads c3 = -c2.  Outcome index is ``2 * [first = +1] +
    [second = +1]``.
    """

    def __init__(self, spec: CoinSpec, slots: int = 4):
        self.spec = spec
        self.slots = slots

    def sample(self, settings: np.ndarray, bob_bases: np.ndarray, u: np.ndarray) -> AttemptBatch:
        if np.any(settings == 2):
            raise UnsupportedConfiguration("the coin source has no X/X setting")
        if np.any(bob_bases != 0):
            raise UnsupportedConfiguration("Bob can only read coin c3")
        n, slots = len(settings), self.slots
        u1 = u[:, FIRST_SLOT_COL : FIRST_SLOT_COL + slots]
        # fair coins c2 and c4 from the top bits of the Eve/Bob columns
        bits = np.zeros(n, dtype=np.uint64)
        ue = u[:, FIRST_SLOT_COL + slots : FIRST_SLOT_COL + 2 * slots]
        ub = u[:, FIRST_SLOT_COL + 2 * slots : FIRST_SLOT_COL + 3 * slots]
        for t in range(slots):
            bits |= (ue[:, t] >= 0.5).astype(np.uint64) << np.uint64(t)
            bits |= (ub[:, t] >= 0.5).astype(np.uint64) << np.uint64(t + slots)
        coins = coins_from_uniforms(self.spec, u1, bits, slots)
        first = np.where(settings[:, None] == 0, coins.c4, coins.c1)
        second = np.where(settings[:, None] == 0, coins.c1 * coins.c2, coins.c2)
        alice = (2 * (first > 0) + (second > 0)).astype(np.int8)
        bob = (coins.c3 > 0).astype(np.int8)
        n_ = np.full(n, -1)
        return AttemptBatch(
            settings.astype(np.int8),
            bob_bases.astype(np.int8),
            alice,
            bob,
            n_.astype(np.int16),
            n_.astype(np.int8),
        )


def basis_index(basis: BasisLabel) -> int:
    return BASES.index(BasisLabel.parse(basis))


def setting_index(setting) -> int:
    return SETTINGS.index(AliceSetting.parse(setting))


def sample_fixed(
    sampler,
    setting,
    bob_basis,
    n: int,
    seed: int,
    stream: str,
    workers: int = 1,
) -> AttemptBatch:
    """``n`` attempts with a fixed Alice setting and Bob basis."""
    si, bi = setting_index(setting), basis_index(bob_basis)
    width = row_width(sampler.slots)

    def one(block, lo, hi):
        u = block_uniforms(seed, stream, block, width)[: hi - lo]
        m = hi - lo
        return sampler.sample(np.full(m, si, dtype=np.int8), np.full(m, bi, dtype=np.int8), u)

    return AttemptBatch.concat(run_blocks(n, one, workers))


def count_values(values: np.ndarray, keys) -> dict:
    return {int(k): int(np.count_nonzero(values == k)) for k in keys}
