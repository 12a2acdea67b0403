"""Detection tests run by Alice and Bob on disclosed check data.

Every test has a sampled form, taking :class:`CheckData`, and an exact form
computed from a :class:`GroupState`.  Sampled decisions use 3-sigma bounds
or a chi-square p-value below ``P_THRESHOLD``.  Exact decisions compare
against the honest values at ``EXACT_TOL``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .engine import BASES, SETTINGS, group_site_joint, pattern_sums
from .montecarlo import AttemptBatch
from .qstate import BasisLabel
from .sources import BALANCED_PATTERNS, EXTREME_PATTERNS, GroupState

EXACT_TOL = 1e-9
SIGMAS = 3.0
P_THRESHOLD = 0.0027  # two-sided 3-sigma tail
MIN_EXTREME_SAMPLES = 30
MIN_UNIFORMITY_SAMPLES = 16 * 100

HONEST_ERROR_RATES = {"0->1": 0.0, "1->0": 3 / 8}
HONEST_ZERO_FRACTION = 6 / 16

CONSISTENT = "consistent"
DETECTED = "eavesdropping_detected"
INCONCLUSIVE = "inconclusive"

TEST_NAMES = ("error_rate", "zero_correlation", "cross_independence", "uniformity", "extreme_value", "per_qubit")


@dataclass
class TestReport:
    name: str
    statistic: dict
    expected: dict
    decision: str
    samples: dict
    mode: str = "sampled"
    details: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    @property
    def detected(self) -> bool:
        return self.decision == DETECTED

    def as_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# check data


@dataclass
class CheckData:
    """Disclosed results of the check groups.

    ``alice_basis`` is the basis of Alice's particle-2 results (0 = Z,
    1 = X) or -1 when she used the Bell setting.  ``alice_bits`` and
    ``bob_bits`` are per-timeslot bits with 1 = up.  ``raw_bit`` and
    ``bob_bit`` are filled only for sifted key positions that were
    sacrificed (``-1`` elsewhere), for the error-rate test.
    """

    alice_basis: np.ndarray
    bob_basis: np.ndarray
    alice_bits: np.ndarray
    bob_bits: np.ndarray
    raw_bit: np.ndarray
    bob_bit: np.ndarray

    def __len__(self) -> int:
        return len(self.bob_basis)

    @classmethod
    def from_batch(cls, batch: AttemptBatch) -> "CheckData":
        local = np.array([-1 if s.local_basis is None else BASES.index(s.local_basis) for s in SETTINGS])
        n = len(batch)
        return cls(
            local[batch.setting].astype(np.int8),
            batch.bob_basis.astype(np.int8),
            batch.alice_local_bits(),
            batch.bob.astype(np.int8),
            np.full(n, -1, dtype=np.int8),
            np.full(n, -1, dtype=np.int8),
        )

    @classmethod
    def from_session(cls, session) -> "CheckData":
        """Check attempts of a QKD session, plus the sacrificed sifted bits."""
        idx = np.nonzero(session.attempt_check)[0]
        data = cls.from_batch(session.attempts.take(idx))
        pos = {int(a): i for i, a in enumerate(idx)}
        sifted = session.sifted
        att = session.sifted_attempts
        for (a_bit, b_bit), row in zip(sifted, att):
            i = pos.get(int(row))
            if i is not None:
                data.raw_bit[i] = a_bit
                data.bob_bit[i] = b_bit
        return data


def patterns(bits: np.ndarray) -> np.ndarray:
    """4-bit rows to hex patterns, first timeslot as the most significant bit."""
    bits = np.asarray(bits)
    w = 1 << np.arange(bits.shape[1] - 1, -1, -1)
    return (bits * w).sum(axis=1)


def spin_sums(bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits)
    return 2 * bits.sum(axis=1) - bits.shape[1]


def _sigma(p: float, n: int) -> float:
    return float(np.sqrt(p * (1 - p) / n)) if n else float("inf")


def _outside(obs: float, p: float, n: int) -> bool:
    """3-sigma binomial check; for p in {0, 1} any deviation counts."""
    s = _sigma(p, n)
    if s == 0.0:
        return abs(obs - p) > 0.0
    return abs(obs - p) > SIGMAS * s


def _rate(num: int, den: int) -> Optional[float]:
    return num / den if den else None


# ---------------------------------------------------------------------------
# sampled tests


def error_rate_test(data: CheckData) -> TestReport:
    """Observed 0->1 and 1->0 rates on sacrificed sifted bits against the honest table."""
    sel = data.raw_bit >= 0
    if not sel.any():
        raise ValueError("no sacrificed sifted bits in the check data")
    a, b = data.raw_bit[sel], data.bob_bit[sel]
    n0, n1 = int(np.sum(a == 0)), int(np.sum(a == 1))
    e01, e10 = int(np.sum((a == 0) & (b == 1))), int(np.sum((a == 1) & (b == 0)))
    r01, r10 = _rate(e01, n0), _rate(e10, n1)
    flags = []
    if n0:
        flags.append(_outside(r01, HONEST_ERROR_RATES["0->1"], n0))
    if n1:
        flags.append(_outside(r10, HONEST_ERROR_RATES["1->0"], n1))
    return TestReport(
        "error_rate",
        {"0->1": r01, "1->0": r10},
        dict(HONEST_ERROR_RATES),
        DETECTED if any(flags) else CONSISTENT,
        {"alice_0": n0, "alice_1": n1, "errors_0->1": e01, "errors_1->0": e10},
    )


def _same_basis(data: CheckData) -> np.ndarray:
    return (data.alice_basis >= 0) & (data.alice_basis == data.bob_basis)


def _cross_basis(data: CheckData) -> np.ndarray:
    return (data.alice_basis >= 0) & (data.alice_basis != data.bob_basis)


def spin_sum_zero_correlation_test(data: CheckData) -> TestReport:
    """Same basis at both sites: a zero sum on one side must come with a zero sum on the other."""
    sel = _same_basis(data)
    if not sel.any():
        raise ValueError("no check groups with matching bases")
    az = spin_sums(data.alice_bits[sel]) == 0
    bz = spin_sums(data.bob_bits[sel]) == 0
    n_a, n_b = int(az.sum()), int(bz.sum())
    both = int((az & bz).sum())
    p_ba, p_ab = _rate(both, n_a), _rate(both, n_b)
    mismatch = n_a + n_b - 2 * both
    return TestReport(
        "zero_correlation",
        {"P(bob 0 | alice 0)": p_ba, "P(alice 0 | bob 0)": p_ab},
        {"P(bob 0 | alice 0)": 1.0, "P(alice 0 | bob 0)": 1.0},
        DETECTED if mismatch else CONSISTENT,
        {"groups": int(sel.sum()), "alice_zero": n_a, "bob_zero": n_b, "mismatched": mismatch},
    )


def _sum_classes(bits: np.ndarray, resolution: str) -> np.ndarray:
    s = spin_sums(bits)
    if resolution == "decoded":
        return (s != 0).astype(int)
    if resolution == "full":
        return s
    raise ValueError("resolution must be 'decoded' or 'full'")


def cross_setting_independence_test(data: CheckData, resolution: str = "decoded") -> TestReport:
    """Different bases: Alice's and Bob's spin sums must be independent with honest marginals.

    ``resolution="decoded"`` tabulates zero versus nonzero sums, the only
    distinction the protocol uses; ``"full"`` tabulates every sum value.
    """
    sel = _cross_basis(data)
    n = int(sel.sum())
    if n < 2:
        raise ValueError("not enough check groups with differing bases")
    ca = _sum_classes(data.alice_bits[sel], resolution)
    cb = _sum_classes(data.bob_bits[sel], resolution)
    ra, ia = np.unique(ca, return_inverse=True)
    rb, ib = np.unique(cb, return_inverse=True)
    table = np.zeros((len(ra), len(rb)), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    if min(table.shape) >= 2:
        chi2, p_value, dof, _ = stats.chi2_contingency(table, correction=False)
    else:
        chi2, p_value, dof = 0.0, 1.0, 0
    za = float(np.mean(spin_sums(data.alice_bits[sel]) == 0))
    zb = float(np.mean(spin_sums(data.bob_bits[sel]) == 0))
    marg_bad = _outside(za, HONEST_ZERO_FRACTION, n) or _outside(zb, HONEST_ZERO_FRACTION, n)
    return TestReport(
        "cross_independence",
        {"chi2": float(chi2), "p_value": float(p_value), "dof": int(dof), "P(alice 0)": za, "P(bob 0)": zb},
        {"p_value_above": P_THRESHOLD, "P(alice 0)": HONEST_ZERO_FRACTION, "P(bob 0)": HONEST_ZERO_FRACTION},
        DETECTED if (p_value < P_THRESHOLD or marg_bad) else CONSISTENT,
        {"groups": n},
        details={
            "resolution": resolution,
            "alice_classes": [int(x) for x in ra],
            "bob_classes": [int(x) for x in rb],
            "table": table.tolist(),
        },
    )


def local_uniformity_test(pattern_values: np.ndarray, name: str = "uniformity") -> TestReport:
    """Chi-square goodness of fit of 4-bit local patterns to the uniform distribution."""
    pattern_values = np.asarray(pattern_values)
    n = len(pattern_values)
    if n < MIN_UNIFORMITY_SAMPLES:
        raise ValueError(f"uniformity test needs at least {MIN_UNIFORMITY_SAMPLES} patterns, got {n}")
    counts = np.bincount(pattern_values, minlength=16)
    chi2, p_value = stats.chisquare(counts)
    return TestReport(
        name,
        {"chi2": float(chi2), "p_value": float(p_value), "max_cell": float(counts.max() / n), "min_cell": float(counts.min() / n)},
        {"p_value_above": P_THRESHOLD, "cell": 1 / 16},
        DETECTED if p_value < P_THRESHOLD else CONSISTENT,
        {"patterns": n},
        details={"counts": counts.tolist()},
    )


def uniformity_battery(data: CheckData) -> list[TestReport]:
    """Uniformity of Alice's and Bob's patterns, separately per basis, where enough data exists."""
    out = []
    for side, bits, basis in (("alice", data.alice_bits, data.alice_basis), ("bob", data.bob_bits, data.bob_basis)):
        for bi, b in enumerate(BASES):
            sel = basis == bi
            if sel.sum() >= MIN_UNIFORMITY_SAMPLES:
                out.append(local_uniformity_test(patterns(bits[sel]), f"uniformity/{side}/{b.value}"))
    return out


def extreme_value_test(data: CheckData) -> TestReport:
    """P(remote other-basis sum = 0 | local pattern 0 or F), both directions pooled."""
    sel = _cross_basis(data)
    pa, pb = patterns(data.alice_bits[sel]), patterns(data.bob_bits[sel])
    sa, sb = spin_sums(data.alice_bits[sel]), spin_sums(data.bob_bits[sel])
    ext_a = np.isin(pa, EXTREME_PATTERNS)
    ext_b = np.isin(pb, EXTREME_PATTERNS)
    n = int(ext_a.sum() + ext_b.sum())
    hits = int(np.sum(ext_a & (sb == 0)) + np.sum(ext_b & (sa == 0)))
    rate = _rate(hits, n)
    if n < MIN_EXTREME_SAMPLES:
        decision = INCONCLUSIVE
    else:
        decision = DETECTED if _outside(rate, HONEST_ZERO_FRACTION, n) else CONSISTENT
    return TestReport(
        "extreme_value",
        {"P(remote 0 | local extreme)": rate},
        {"P(remote 0 | local extreme)": HONEST_ZERO_FRACTION},
        decision,
        {"groups": int(sel.sum()), "extreme": n, "remote_zero": hits},
    )


def per_qubit_test(data: CheckData) -> TestReport:
    """Same basis: fraction of timeslots where Bob's bit is opposite to Alice's particle-2 bit."""
    sel = _same_basis(data)
    if not sel.any():
        raise ValueError("no check groups with matching bases")
    anti = data.alice_bits[sel] != data.bob_bits[sel]
    n = int(anti.size)
    rate = float(anti.mean())
    return TestReport(
        "per_qubit",
        {"anticorrelation": rate},
        {"anticorrelation": 1.0},
        DETECTED if rate < 1.0 else CONSISTENT,
        {"groups": int(sel.sum()), "qubits": n},
    )


def run_tests(data: CheckData, names=TEST_NAMES, resolution: str = "decoded") -> list[TestReport]:
    """Run the named sampled tests; tests whose data requirements fail are reported inconclusive."""
    fns = {
        "error_rate": lambda: [error_rate_test(data)],
        "zero_correlation": lambda: [spin_sum_zero_correlation_test(data)],
        "cross_independence": lambda: [cross_setting_independence_test(data, resolution)],
        "uniformity": lambda: uniformity_battery(data),
        "extreme_value": lambda: [extreme_value_test(data)],
        "per_qubit": lambda: [per_qubit_test(data)],
    }
    out = []
    for name in names:
        if name not in fns:
            raise ValueError(f"unknown test {name!r}; expected one of {TEST_NAMES}")
        try:
            out.extend(fns[name]())
        except ValueError as exc:
            out.append(TestReport(name, {}, {}, INCONCLUSIVE, {}, details={"reason": str(exc)}))
    return out


# ---------------------------------------------------------------------------
# exact tests


def _zero_vec() -> np.ndarray:
    z = np.zeros(16)
    z[list(BALANCED_PATTERNS)] = 1.0
    return z


def _exact_report(name, statistic, expected, details=None) -> TestReport:
    bad = any(abs(statistic[k] - expected[k]) > EXACT_TOL for k in expected)
    return TestReport(name, statistic, expected, DETECTED if bad else CONSISTENT, {}, "exact", details or {})


def exact_error_rates(strategy, params) -> TestReport:
    from .qkd_protocol import error_table_exact

    t = error_table_exact(strategy, params)
    stat = {"0->1": t["bob"][0][1], "1->0": t["bob"][1][0]}
    return _exact_report(
        "error_rate", stat, dict(HONEST_ERROR_RATES),
        {"p_ok": {str(k): v for k, v in t["p_ok"].items()}, "conditioned_on_ok": {str(k): v for k, v in t["conditioned_on_ok"].items()}},
    )


def exact_zero_correlation(state: GroupState) -> TestReport:
    """P(zero sums disagree) in each common basis; honest value 0."""
    z = _zero_vec()
    stat = {}
    for b in BASES:
        j = group_site_joint(state, b, b)
        stat[f"P(bob 0 | alice 0) {b.value}"] = float(z @ j @ z / (z @ j.sum(axis=1)))
        stat[f"P(alice 0 | bob 0) {b.value}"] = float(z @ j @ z / (j.sum(axis=0) @ z))
    return _exact_report("zero_correlation", stat, {k: 1.0 for k in stat})


def cross_sum_table(state: GroupState, alice_basis, bob_basis, resolution: str = "decoded") -> tuple[np.ndarray, list]:
    """Exact joint table of Alice's and Bob's sum classes in the given bases."""
    j = group_site_joint(state, alice_basis, bob_basis)
    s = pattern_sums()
    if resolution == "decoded":
        cls, labels = (s != 0).astype(int), [0, 1]
    elif resolution == "full":
        labels = sorted(set(s.tolist()))
        cls = np.searchsorted(labels, s)
    else:
        raise ValueError("resolution must be 'decoded' or 'full'")
    m = np.zeros((len(labels), 16))
    m[cls, np.arange(16)] = 1.0
    return m @ j @ m.T, labels


def exact_cross_independence(state: GroupState, resolution: str = "decoded") -> TestReport:
    """Largest deviation of the cross-basis sum table from the product of its marginals."""
    stat, expected, tables = {}, {}, {}
    for a, b in ((BasisLabel.Z, BasisLabel.X), (BasisLabel.X, BasisLabel.Z)):
        t, labels = cross_sum_table(state, a, b, resolution)
        dev = float(np.abs(t - np.outer(t.sum(axis=1), t.sum(axis=0))).max())
        key = f"{a.value}{b.value}"
        stat[f"factorization residual {key}"] = dev
        expected[f"factorization residual {key}"] = 0.0
        z = labels.index(0)
        stat[f"P(alice 0) {key}"] = float(t.sum(axis=1)[z])
        stat[f"P(bob 0) {key}"] = float(t.sum(axis=0)[z])
        expected[f"P(alice 0) {key}"] = HONEST_ZERO_FRACTION
        expected[f"P(bob 0) {key}"] = HONEST_ZERO_FRACTION
        tables[key] = {"labels": labels, "table": t.tolist()}
    return _exact_report("cross_independence", stat, expected, {"resolution": resolution, "tables": tables})


def exact_uniformity(state: GroupState) -> TestReport:
    """Largest deviation of either site's 16 pattern probabilities from 1/16, in each basis."""
    stat = {}
    for b in BASES:
        j = group_site_joint(state, b, b)
        stat[f"alice {b.value}"] = float(np.abs(j.sum(axis=1) - 1 / 16).max())
        stat[f"bob {b.value}"] = float(np.abs(j.sum(axis=0) - 1 / 16).max())
    return _exact_report("uniformity", stat, {k: 0.0 for k in stat})


def exact_extreme_value(state: GroupState) -> TestReport:
    z = _zero_vec()
    e = np.zeros(16)
    e[list(EXTREME_PATTERNS)] = 1.0
    num = den = 0.0
    per = {}
    for a, b in ((BasisLabel.Z, BasisLabel.X), (BasisLabel.X, BasisLabel.Z)):
        j = group_site_joint(state, a, b)
        n_ab, d_ab = e @ j @ z, e @ j.sum(axis=1)  # Alice extreme, Bob zero
        n_ba, d_ba = z @ j @ e, j.sum(axis=0) @ e  # Bob extreme, Alice zero
        per[f"alice {a.value} extreme"] = float(n_ab / d_ab) if d_ab > EXACT_TOL else None
        per[f"bob {b.value} extreme"] = float(n_ba / d_ba) if d_ba > EXACT_TOL else None
        num += n_ab + n_ba
        den += d_ab + d_ba
    if den <= EXACT_TOL:
        return TestReport("extreme_value", {}, {}, INCONCLUSIVE, {}, "exact", {"reason": "no extreme patterns"})
    stat = {"P(remote 0 | local extreme)": float(num / den)}
    return _exact_report("extreme_value", stat, {"P(remote 0 | local extreme)": HONEST_ZERO_FRACTION}, {"directions": per})


def exact_per_qubit(state: GroupState) -> TestReport:
    bits = (np.arange(16)[:, None] >> np.arange(3, -1, -1)[None, :]) & 1
    diff = (bits[:, None, :] != bits[None, :, :]).mean(axis=2)  # [alice pattern, bob pattern]
    stat = {}
    for b in BASES:
        stat[f"anticorrelation {b.value}"] = float((group_site_joint(state, b, b) * diff).sum())
    stat["anticorrelation"] = float(np.mean(list(stat.values())))
    return _exact_report("per_qubit", stat, {k: 1.0 for k in stat})


def exact_battery(state: GroupState, strategy=None, resolution: str = "decoded") -> list[TestReport]:
    """All exact tests for one source; the error-rate test needs the strategy."""
    out = []
    if strategy is not None:
        out.append(exact_error_rates(strategy, state.params))
    out += [
        exact_zero_correlation(state),
        exact_cross_independence(state, resolution),
        exact_uniformity(state),
        exact_extreme_value(state),
        exact_per_qubit(state),
    ]
    return out


def spin_sum_battery_flags(state: GroupState, resolution: str = "decoded") -> bool:
    """True when any spin-sum test (zero correlation, cross independence, uniformity) flags the source."""
    return any(
        r.detected
        for r in (exact_zero_correlation(state), exact_cross_independence(state, resolution), exact_uniformity(state))
    )
