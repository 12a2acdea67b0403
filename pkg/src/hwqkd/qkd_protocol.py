"""Key distribution: raw key, encoding bits, announcements, sifting and error tables.

Alice uses the Bell setting for raw bit 1 and, for raw bit 0, the Z/Z
(``b``) or X/X (``c``) setting picked by her encoding bit.  She announces
``b`` or ``c`` after an OK group, which for raw bit 1 is just the encoding
bit.  Bob measures in Z (``b'``) or X (``c'``), keeps groups whose basis
matches the announcement, and decodes 1 for a nonzero spin sum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adversary import EveKind, EveRecord, EveStrategy, predicted_bits
from .engine import (
    BASES,
    AliceSetting,
    intercept_table,
    iid_ok_sum,
    joint_outcome_tensor,
    ok_bob_ups,
    pattern_probs,
    timeslot_table,
)
from .montecarlo import (
    BLOCK_ROWS,
    COL_BOB,
    COL_CHECK,
    AttemptBatch,
    Sampler,
    block_uniforms,
    row_width,
    run_blocks,
)
from .qstate import BasisLabel
from .sources import (
    BALANCED_PATTERNS,
    HONEST,
    IIDComponent,
    SourceModel,
    SourceParams,
    UnsupportedConfiguration,
)

ATTEMPTS_PER_CHUNK = 16
KEYS_PER_BLOCK = BLOCK_ROWS // ATTEMPTS_PER_CHUNK
DEFAULT_MAX_ATTEMPTS = 1024
DEFAULT_CHECK_FRACTION = 0.25

ANNOUNCE_TO_BASIS = {"b": BasisLabel.Z, "c": BasisLabel.X}


def alice_setting_for(raw_bit: int, encoding_bit: int) -> AliceSetting:
    if raw_bit not in (0, 1) or encoding_bit not in (0, 1):
        raise ValueError("bits must be 0 or 1")
    if raw_bit == 1:
        return AliceSetting.A_BELL
    return AliceSetting.B_ZZ if encoding_bit == 0 else AliceSetting.C_XX


def announced_encoding(raw_bit: int, encoding_bit: int) -> str:
    """``"b"`` or ``"c"``; for raw bit 0 this is the setting actually used."""
    if raw_bit not in (0, 1) or encoding_bit not in (0, 1):
        raise ValueError("bits must be 0 or 1")
    return "b" if encoding_bit == 0 else "c"


def bob_bit(spin_sum) -> np.ndarray:
    return (np.asarray(spin_sum) != 0).astype(np.int8)


def bb84_error_exact(eve_present: bool) -> float:
    """P(Bob's sifted bit differs from Alice's) for BB84 with per-qubit intercept-resend."""
    err = 0.0
    for basis in BASES:
        u = basis.unitary
        for bit in (0, 1):
            sent = u[:, bit]
            eves = [(1.0, sent)] if not eve_present else [
                (0.5 * abs(np.vdot(e.unitary[:, k], sent)) ** 2, e.unitary[:, k]) for e in BASES for k in (0, 1)
            ]
            for w, state in eves:
                err += 0.25 * w * abs(np.vdot(u[:, 1 - bit], state)) ** 2
    return float(err)


def bb84_reference() -> dict:
    """P(error) by Alice's bit with Eve absent or intercepting, for BB84 and this protocol."""
    return {
        "BB84": {("0", "absent"): 0.0, ("1", "absent"): 0.0, ("0", "present"): 0.25, ("1", "present"): 0.25},
        "HW": {("0", "absent"): 0.0, ("1", "absent"): 3 / 8, ("0", "present"): 5 / 16, ("1", "present"): 3 / 8},
    }


# ---------------------------------------------------------------------------
# exact error tables


def _branch_stats(state, setting: AliceSetting, bob_basis: BasisLabel, eve) -> dict:
    """P(ok), P(ok and Bob sum 0) and unconditioned P(Bob sum 0) for one branch.

    ``eve`` is None, a basis (per-group interception) or ``"per_particle"``.
    """
    p_ok = p_ok_zero = p_zero = 0.0
    for comp in state.components:
        if isinstance(comp, IIDComponent):
            if eve is None:
                t = timeslot_table(state.rho1, comp.pair, setting, bob_basis)
            elif eve == "per_particle":
                t = 0.5 * sum(
                    intercept_table(state.rho1, comp.pair, setting, b, bob_basis).sum(axis=1) for b in BASES
                )
            else:
                t = intercept_table(state.rho1, comp.pair, setting, eve, bob_basis).sum(axis=1)
            c_ok, joint = iid_ok_sum(t, state.slots // 4)
            p_up = t[:, 1].sum()
            ups = np.array([1.0])
            for _ in range(state.slots):
                ups = np.convolve(ups, [1 - p_up, p_up])
            c_zero = float(ups[state.slots // 2])
        else:
            if eve is not None:
                raise UnsupportedConfiguration("interception of a replacement source is not modelled")
            tens = joint_outcome_tensor(state.rho1, state.pair_density(comp), setting, bob_basis)
            joint = ok_bob_ups(tens)
            c_ok = float(joint.sum())
            c_zero = float(pattern_probs(comp.psi3, bob_basis)[list(BALANCED_PATTERNS)].sum())
        p_ok += comp.weight * c_ok
        p_ok_zero += comp.weight * float(joint[state.slots // 2])
        p_zero += comp.weight * c_zero
    return {"p_ok": p_ok, "p_ok_zero": p_ok_zero, "p_zero": p_zero}


def _branches(raw_bit: int):
    """(setting, Bob's matching basis, weight) for each encoding bit."""
    out = []
    for enc in (0, 1):
        s = alice_setting_for(raw_bit, enc)
        out.append((s, ANNOUNCE_TO_BASIS[announced_encoding(raw_bit, enc)], 0.5))
    return out


def error_table_exact(strategy: EveStrategy | SourceModel | None, params: SourceParams) -> dict:
    """Exact P(OK | raw bit) and P(Bob's bit | Alice's bit, OK, sifted).

    When P(OK) vanishes for a raw bit the Bob row is reported unconditioned
    and ``conditioned_on_ok`` is False for that bit.
    """
    if strategy is None:
        strategy = EveStrategy.none()
    elif isinstance(strategy, SourceModel):
        strategy = EveStrategy.none() if not strategy.is_eve else EveStrategy.replace_source(strategy)
    state = strategy.group_state(params)
    if strategy.kind is EveKind.INTERCEPT:
        eves = [(b, 0.5) for b in BASES] if strategy.policy == "per_group" else [("per_particle", 1.0)]
    else:
        eves = [(None, 1.0)]
    p_ok, bob, cond, rows = {}, {}, {}, []
    by_eve = {"correct": {}, "incorrect": {}}
    for raw in (0, 1):
        tot_ok = tot_ok_zero = tot_zero = 0.0
        for setting, basis, w in _branches(raw):
            for eve, we in eves:
                st = _branch_stats(state, setting, basis, eve)
                tot_ok += w * we * st["p_ok"]
                tot_ok_zero += w * we * st["p_ok_zero"]
                tot_zero += w * we * st["p_zero"]
                row = {
                    "alice_bit": raw,
                    "setting": setting.value,
                    "bob_basis": basis.value,
                    "eve_basis": None if eve is None else (eve if isinstance(eve, str) else eve.value),
                    "weight": w * we,
                    "p_ok": st["p_ok"],
                    "p_bob0_given_ok": st["p_ok_zero"] / st["p_ok"] if st["p_ok"] > 1e-15 else None,
                }
                rows.append(row)
                if isinstance(eve, BasisLabel):
                    key = "correct" if eve is basis else "incorrect"
                    acc = by_eve[key].setdefault(raw, [0.0, 0.0])
                    acc[0] += st["p_ok"]
                    acc[1] += st["p_ok_zero"]
        p_ok[raw] = tot_ok
        if tot_ok > 1e-15:
            p0 = tot_ok_zero / tot_ok
            cond[raw] = True
        else:
            p0 = tot_zero
            cond[raw] = False
        bob[raw] = {0: p0, 1: 1.0 - p0}
    out = {
        "strategy": strategy.name,
        "p_ok": p_ok,
        "bob": bob,
        "conditioned_on_ok": cond,
        "rows": rows,
    }
    if strategy.kind is EveKind.INTERCEPT and strategy.policy == "per_group":
        out["eve_basis"] = {
            key: {raw: {0: v[1] / v[0], 1: 1 - v[1] / v[0]} for raw, v in d.items()} for key, d in by_eve.items()
        }
    return out


# ---------------------------------------------------------------------------
# sessions


@dataclass(frozen=True)
class UseAnnouncement:
    """Bob's public list of the key positions he keeps; carries nothing else."""

    indices: tuple

    def __post_init__(self):
        if any(not isinstance(i, int) for i in self.indices):
            raise TypeError("a use announcement carries integer indices only")


@dataclass
class QkdSession:
    params: SourceParams
    strategy: EveStrategy
    source: SourceModel
    seed: int
    raw_key: np.ndarray
    encoding_bits: np.ndarray
    attempts: AttemptBatch
    attempt_key: np.ndarray
    attempt_check: np.ndarray
    ok_attempt: np.ndarray
    eve: EveRecord
    bob_use: UseAnnouncement = field(default=None)
    max_attempts: int = DEFAULT_MAX_ATTEMPTS

    @property
    def key_len(self) -> int:
        return len(self.raw_key)

    @property
    def ok(self) -> np.ndarray:
        return self.attempts.ok()

    @property
    def bob_bits(self) -> np.ndarray:
        return bob_bit(self.attempts.bob_sum())

    @property
    def announced(self) -> np.ndarray:
        """Per key bit: 0 for ``b``, 1 for ``c``, -1 when no OK group was found."""
        return np.where(self.ok_attempt >= 0, self.encoding_bits, -1).astype(np.int8)

    @property
    def decoding_bits(self) -> np.ndarray:
        """Bob's basis (0 = Z, 1 = X) in the OK group of each key bit, -1 if none."""
        out = np.full(self.key_len, -1, dtype=np.int8)
        has = self.ok_attempt >= 0
        out[has] = self.attempts.bob_basis[self.ok_attempt[has]]
        return out

    @property
    def sifted_keys(self) -> np.ndarray:
        return np.asarray(self.bob_use.indices, dtype=np.int64)

    @property
    def sifted_attempts(self) -> np.ndarray:
        return self.ok_attempt[self.sifted_keys]

    @property
    def sifted(self) -> np.ndarray:
        """Array of (alice_bit, bob_bit) rows for every sifted key position."""
        k = self.sifted_keys
        return np.column_stack([self.raw_key[k], self.bob_bits[self.ok_attempt[k]]]).astype(np.int8)

    def sifted_check_mask(self) -> np.ndarray:
        """Which sifted positions were sacrificed as check data."""
        return self.attempt_check[self.sifted_attempts]

    def key_pairs(self) -> np.ndarray:
        """Sifted pairs that remain secret (not sacrificed)."""
        return self.sifted[~self.sifted_check_mask()]

    def summary(self) -> dict:
        s = self.sifted
        ok = self.ok
        n_att = np.bincount(self.raw_key[self.attempt_key], minlength=2)
        n_ok = np.bincount(self.raw_key[self.attempt_key][ok], minlength=2)
        out = {
            "key_len": self.key_len,
            "attempts": int(len(self.attempts)),
            "attempts_by_raw_bit": {str(b): int(n_att[b]) for b in (0, 1)},
            "ok_by_raw_bit": {str(b): int(n_ok[b]) for b in (0, 1)},
            "abandoned": int(np.count_nonzero(self.ok_attempt < 0)),
            "sifted": int(len(s)),
            "sacrificed": int(self.sifted_check_mask().sum()),
            "pairs": {
                f"{a}->{b}": int(np.count_nonzero((s[:, 0] == a) & (s[:, 1] == b))) for a in (0, 1) for b in (0, 1)
            },
        }
        return out


def make_session_sampler(strategy: EveStrategy, params: SourceParams, source: SourceModel = HONEST):
    state = strategy.group_state(params, source)
    return state, Sampler(state, strategy.intercept_policy)


def run_qkd_session(
    strategy: EveStrategy | str | None,
    params: SourceParams,
    key_len: int,
    seed: int,
    workers: int = 1,
    source: SourceModel = HONEST,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    check_fraction: float = DEFAULT_CHECK_FRACTION,
) -> QkdSession:
    """Run the whole protocol for ``key_len`` raw key bits.

    Each key bit is retried in chunks of 16 groups until Alice sees OK or
    ``max_attempts`` groups have been spent.  Every attempt is kept in the
    transcript; ``check_fraction`` of all attempts, selected in advance and
    independently of their outcomes, are disclosed for testing.
    """
    if not isinstance(strategy, EveStrategy):
        strategy = EveStrategy.parse(strategy)
    if strategy.kind is not EveKind.NONE and params.N != 1:
        raise UnsupportedConfiguration("Eve's strategies are defined for N = 1")
    if max_attempts < ATTEMPTS_PER_CHUNK or max_attempts % ATTEMPTS_PER_CHUNK:
        raise ValueError(f"max_attempts must be a positive multiple of {ATTEMPTS_PER_CHUNK}")
    if not 0.0 <= check_fraction < 1.0:
        raise ValueError("check_fraction must lie in [0, 1)")
    state, sampler = make_session_sampler(strategy, params, source)
    slots = 4 * params.N
    width = row_width(slots)
    chunks = max_attempts // ATTEMPTS_PER_CHUNK
    tag = f"qkd/{source.name}/{strategy.name}/{params.a2!r}/{params.N}/{params.particle1}"

    def one(block, lo, hi):
        m = hi - lo
        ukey = block_uniforms(seed, tag + "/key", block, 2, rows=KEYS_PER_BLOCK)[:m]
        raw = (ukey[:, 0] >= 0.5).astype(np.int8)
        enc = (ukey[:, 1] >= 0.5).astype(np.int8)
        setting_of_key = np.where(raw == 1, 0, np.where(enc == 0, 1, 2)).astype(np.int8)
        pending = np.arange(m)
        ok_chunk = np.full(m, -1, dtype=np.int64)
        ok_pos = np.full(m, -1, dtype=np.int64)
        batches, keys, checks = [], [], []
        for c in range(chunks):
            if len(pending) == 0:
                break
            u = block_uniforms(seed, f"{tag}/attempts/{c}", block, width)
            rows = (pending[:, None] * ATTEMPTS_PER_CHUNK + np.arange(ATTEMPTS_PER_CHUNK)).ravel()
            uu = u[rows]
            settings = np.repeat(setting_of_key[pending], ATTEMPTS_PER_CHUNK)
            bob_basis = (uu[:, COL_BOB] >= 0.5).astype(np.int8)
            batch = sampler.sample(settings, bob_basis, uu)
            ok = batch.ok().reshape(len(pending), ATTEMPTS_PER_CHUNK)
            has = ok.any(axis=1)
            first = np.where(has, ok.argmax(axis=1), ATTEMPTS_PER_CHUNK - 1)
            keep = (np.arange(ATTEMPTS_PER_CHUNK)[None, :] <= first[:, None]).ravel()
            kept = batch.take(np.nonzero(keep)[0])
            key_of_row = np.repeat(pending, ATTEMPTS_PER_CHUNK)[keep]
            batches.append(kept)
            keys.append(key_of_row)
            checks.append(uu[keep, COL_CHECK] < check_fraction)
            # position of each pending key's OK row within this chunk's kept rows
            offsets = np.concatenate([[0], np.cumsum(first + 1)[:-1]])
            ok_chunk[pending[has]] = c
            ok_pos[pending[has]] = (offsets + first)[has]
            pending = pending[~has]
        return raw, enc, batches, keys, checks, (ok_chunk, ok_pos)

    parts = run_blocks(key_len, one, workers, block_rows=KEYS_PER_BLOCK)
    return _assemble(parts, strategy, source, params, seed, state, max_attempts)


def _assemble(parts, strategy, source, params, seed, state, max_attempts) -> QkdSession:
    raw_all, enc_all, batches, keys, checks, ok_idx = [], [], [], [], [], []
    offset_key = 0
    n_rows = 0
    for raw, enc, bl, kl, cl, oka in parts:
        # global row index of each (chunk, position) pair in this block
        chunk_starts = np.cumsum([0] + [len(b) for b in bl])
        for b, k, c in zip(bl, kl, cl):
            batches.append(b)
            keys.append(k + offset_key)
            checks.append(c)
        ok_chunk, ok_pos = oka
        fixed = np.where(ok_chunk >= 0, n_rows + chunk_starts[np.maximum(ok_chunk, 0)] + ok_pos, -1)
        ok_idx.append(fixed)
        raw_all.append(raw)
        enc_all.append(enc)
        offset_key += len(raw)
        n_rows += int(chunk_starts[-1])
    attempts = AttemptBatch.concat(batches)
    attempt_key = np.concatenate(keys)
    check = np.concatenate(checks)
    ok_attempt = np.concatenate(ok_idx)
    raw_key = np.concatenate(raw_all)
    enc_bits = np.concatenate(enc_all)
    # order attempts by key bit, keeping each key's attempts in time order
    order = np.argsort(attempt_key, kind="stable")
    inverse = np.empty_like(order)
    inverse[order] = np.arange(len(order))
    attempts = attempts.take(order)
    attempt_key = attempt_key[order]
    check = check[order]
    ok_attempt = np.where(ok_attempt >= 0, inverse[np.maximum(ok_attempt, 0)], -1)
    pred_table = predicted_bits(state)
    comp = attempts.component.astype(np.int64)
    if strategy.kind is EveKind.REPLACE:
        predicted = pred_table[np.maximum(comp, 0), attempts.bob_basis.astype(np.int64)]
    else:
        predicted = np.full(len(attempts), -1, dtype=np.int8)
    eve = EveRecord(attempts.component, attempts.eve_basis, predicted, attempts.eve_bits)
    session = QkdSession(
        params, strategy, source, seed, raw_key, enc_bits, attempts, attempt_key, check, ok_attempt, eve,
        max_attempts=max_attempts,
    )
    has = ok_attempt >= 0
    match = np.zeros(len(raw_key), dtype=bool)
    match[has] = attempts.bob_basis[ok_attempt[has]] == enc_bits[has]
    session.bob_use = UseAnnouncement(tuple(int(i) for i in np.nonzero(match)[0]))
    return session


def sample_protocol_counts(
    strategy: EveStrategy,
    params: SourceParams,
    raw_bit: int,
    attempts: int,
    seed: int,
    workers: int = 1,
    source: SourceModel = HONEST,
) -> dict:
    """Fixed-size sample of groups for one raw bit value.

    Encoding bit and Bob's basis are drawn per group; counts are returned
    for OK groups, sifted groups and Bob's decoded bit, split by whether
    Eve's per-group basis matched Bob's.
    """
    state, sampler = make_session_sampler(strategy, params, source)
    width = row_width(4 * params.N)
    tag = f"table/{source.name}/{strategy.name}/{raw_bit}/{params.a2!r}/{params.particle1}"

    def one(block, lo, hi):
        u = block_uniforms(seed, tag, block, width)[: hi - lo]
        enc = (u[:, 1] >= 0.5).astype(np.int8)
        settings = np.where(raw_bit == 1, 0, np.where(enc == 0, 1, 2)).astype(np.int8)
        bob_basis = (u[:, COL_BOB] >= 0.5).astype(np.int8)
        batch = sampler.sample(settings, bob_basis, u)
        ok = batch.ok()
        sifted = ok & (bob_basis == enc)
        bits = bob_bit(batch.bob_sum())
        out = np.zeros((3, 2), dtype=np.int64)  # rows: all, eve correct, eve incorrect
        for b in (0, 1):
            out[0, b] = np.count_nonzero(sifted & (bits == b))
            if strategy.kind is EveKind.INTERCEPT and strategy.policy == "per_group":
                match = batch.eve_basis == bob_basis
                out[1, b] = np.count_nonzero(sifted & match & (bits == b))
                out[2, b] = np.count_nonzero(sifted & ~match & (bits == b))
        unc = np.bincount(bits[bob_basis == enc], minlength=2)
        return int(ok.sum()), out, unc

    parts = run_blocks(attempts, one, workers)
    n_ok = sum(p[0] for p in parts)
    counts = sum(p[1] for p in parts)
    unc = sum(p[2] for p in parts)
    return {
        "attempts": attempts,
        "ok": int(n_ok),
        "sifted_bits": {0: int(counts[0, 0]), 1: int(counts[0, 1])},
        "eve_correct_bits": {0: int(counts[1, 0]), 1: int(counts[1, 1])},
        "eve_incorrect_bits": {0: int(counts[2, 0]), 1: int(counts[2, 1])},
        "matched_bits_all_groups": {0: int(unc[0]), 1: int(unc[1])},
    }
