"""Command-line entry point.

Commands: ``dist``, ``protocol``, ``qkd``, ``security``, ``reproduce-tables``
and ``verify-identities``.  Settings come from built-in defaults, then an
optional ``key=value`` config file, then command-line flags.  The exit
status is 1 when any pass/fail check in the report fails.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import comm_protocol as comm
from .adversary import EveKind, EveStrategy, basis_match_rate, effective_group_state, eve_accuracy
from .engine import AliceSetting
from .identities import verify_state_identities
from .qkd_protocol import error_table_exact, run_qkd_session
from .qstate import BasisLabel
from .report import StatReport, freq, prob, prob_map, reports_equal
from .security import INCONCLUSIVE, TEST_NAMES, CheckData, exact_battery, run_tests
from .sources import SourceKind, SourceModel, SourceParams
from .tables import DEFAULT_ATTEMPTS_PER_BIT, reproduce_tables, sifted_counts

SEED_ENV = "HWQKD_SEED"
SIGMAS = 3.0
COMMANDS = ("dist", "protocol", "qkd", "security", "reproduce-tables", "verify-identities")

DEFAULT_TRIALS = {"dist": 200_000, "protocol": 200_000, "reproduce-tables": DEFAULT_ATTEMPTS_PER_BIT}
DEFAULT_PARTICLE1 = {"dist": "pure", "protocol": "pure"}  # others use "dephased"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    source: str = "honest"
    eve: str = "none"
    setting: str = "a"
    bob_basis: str = "Z"
    a2: float = 0.5
    N: int = 1
    particle1: Optional[str] = None
    key_len: int = 20_000
    trials: Optional[int] = None
    seed: int = 0
    sacrifice_fraction: float = 0.25
    max_attempts: int = 1024
    tests: str = "all"
    resolution: str = "decoded"
    workers: int = 1
    format: str = "json"
    output: Optional[str] = None
    compare: Optional[str] = None
    timestamp: bool = True

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if not 0.0 <= self.a2 <= 1.0:
            raise ConfigError(f"a2 must lie in [0, 1], got {self.a2}")
        if self.N < 1:
            raise ConfigError("N must be >= 1")
        if self.trials is None:
            self.trials = DEFAULT_TRIALS.get(self.command, 1)
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.key_len < 1:
            raise ConfigError("key-len must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.particle1 is None:
            self.particle1 = DEFAULT_PARTICLE1.get(self.command, "dephased")
        if self.format not in ("json", "csv"):
            raise ConfigError("format must be json or csv")
        if self.resolution not in ("decoded", "full"):
            raise ConfigError("resolution must be decoded or full")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def params(self) -> SourceParams:
        try:
            return SourceParams.from_a2(self.a2, self.N, self.particle1)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def echo(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("output", "compare", "timestamp", "workers", "format"):
            d.pop(k)  # presentation options do not change results
        return d


def parse_config_file(path: str) -> dict:
    """``key=value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected key=value, got {line!r}")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k.replace("-", "_")] = v
    return out


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _coerce(key: str, value):
    if key not in _FIELD_TYPES or key == "command":
        raise ConfigError(f"unknown config key {key!r}")
    if value is None or not isinstance(value, str):
        return value
    t = str(_FIELD_TYPES[key])
    try:
        if "int" in t:
            return int(value, 0)
        if "float" in t:
            return float(value)
        if "bool" in t:
            return value.strip().lower() in ("1", "true", "yes", "on")
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    return value


def build_config(args: argparse.Namespace, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    values: dict = {}
    if environ.get(SEED_ENV):
        values["seed"] = environ[SEED_ENV]
    if args.config:
        values.update(parse_config_file(args.config))
    for k, v in vars(args).items():
        if k in ("config", "command") or v is None:
            continue
        values[k] = v
    values = {k: _coerce(k, v) for k, v in values.items()}
    return RunConfig(command=args.command, **values)


# ---------------------------------------------------------------------------
# helpers


def _within(count: int, total: int, p: float) -> bool:
    if total == 0:
        return False
    obs = count / total
    if p < 1e-12 or p > 1 - 1e-12:
        return abs(obs - round(p)) == 0.0
    return abs(obs - p) <= SIGMAS * np.sqrt(p * (1 - p) / total)


def _strategy(cfg: RunConfig) -> EveStrategy:
    try:
        return EveStrategy.parse(cfg.eve)
    except ValueError as exc:
        raise ConfigError(f"--eve: {exc}") from None


def _source(cfg: RunConfig) -> SourceModel:
    try:
        return SourceModel.parse(cfg.source)
    except ValueError as exc:
        raise ConfigError(f"--source: {exc}") from None


def _selected_tests(cfg: RunConfig) -> tuple:
    if cfg.tests == "all":
        return TEST_NAMES
    names = tuple(t.strip() for t in cfg.tests.split(",") if t.strip())
    bad = [t for t in names if t not in TEST_NAMES]
    if bad:
        raise ConfigError(f"--tests: unknown {bad}; expected a comma list from {list(TEST_NAMES)} or 'all'")
    return names


# ---------------------------------------------------------------------------
# commands


def cmd_dist(cfg: RunConfig) -> StatReport:
    """Exact and sampled distribution of Bob's spin sum given OK."""
    rep = StatReport(cfg.echo())
    model, params = _source(cfg), cfg.params
    setting = AliceSetting.parse(cfg.setting)
    basis = BasisLabel.parse(cfg.bob_basis)
    p_ok, joint = comm.ok_and_sum(model, params, setting, basis)
    rep.exact = {"p_ok": prob(p_ok), "joint": prob_map(joint)}
    if p_ok > 1e-15:
        dist = {s: p / p_ok for s, p in joint.items()}
        mean, second = comm.moments(dist)
        rep.exact.update({"spin_sum": prob_map(dist), "mean": prob(mean), "second_moment": prob(second)})
    s = comm.sample_spin_sums(model, params, setting, cfg.trials, cfg.seed, cfg.workers, basis)
    rep.sampled = {
        "p_ok": freq(s.ok, s.attempts),
        "spin_sum": {str(k): freq(v, s.ok) for k, v in sorted(s.counts.items())},
    }
    rep.check("P(ok) within 3 sigma", _within(s.ok, s.attempts, p_ok))
    if p_ok > 1e-15:
        for k, v in sorted(s.counts.items()):
            rep.check(f"P(sum = {k} | ok) within 3 sigma", _within(v, s.ok, dist[k]), count=v, total=s.ok)
    return rep


def cmd_protocol(cfg: RunConfig) -> StatReport:
    """Communication protocol: settings a/b sent at random, Bob decodes OK groups."""
    rep = StatReport(cfg.echo())
    model, params = _source(cfg), cfg.params
    exact = {}
    for setting in (AliceSetting.A_BELL, AliceSetting.B_ZZ):
        p_ok, joint = comm.ok_and_sum(model, params, setting)
        p_zero = joint.get(0, 0.0) / p_ok if p_ok > 1e-15 else None
        exact[setting.value] = {"p_ok": p_ok, "P(guess_B)": p_zero}
    rep.exact = {
        k: {"p_ok": prob(v["p_ok"]), "P(guess_B)": prob(v["P(guess_B)"])} for k, v in exact.items()
    }
    rep.exact["misdecode_probability"] = prob(comm.misdecode_probability(params, params.N))
    res = comm.run_protocol(model, params, cfg.trials, cfg.seed, cfg.workers)
    rep.sampled = res
    for s in ("a", "b"):
        d = res["decoded"][s]
        n = d["certainly_A"] + d["guess_B"]
        p = exact[s]["P(guess_B)"]
        if p is not None:
            rep.check(f"setting {s}: P(guess_B | ok) within 3 sigma", _within(d["guess_B"], n, p), count=d["guess_B"], total=n)
    return rep


def _session(cfg: RunConfig):
    strategy = _strategy(cfg)
    source = _source(cfg)
    if source.is_eve or source.kind is SourceKind.COINS:
        raise ConfigError("--source for qkd/security must be honest or separable; use --eve for Eve's sources")
    session = run_qkd_session(
        strategy, cfg.params, cfg.key_len, cfg.seed, cfg.workers, source,
        max_attempts=cfg.max_attempts, check_fraction=cfg.sacrifice_fraction,
    )
    return strategy, source, session


def cmd_qkd(cfg: RunConfig) -> StatReport:
    """Run a key-distribution session; compare the sifted table with the exact one."""
    rep = StatReport(cfg.echo())
    strategy, source, session = _session(cfg)
    ex = error_table_exact(strategy if strategy.kind is not EveKind.NONE else source, cfg.params)
    rep.exact = {
        "p_ok": prob_map(ex["p_ok"]),
        "bob": {str(a): prob_map(v) for a, v in ex["bob"].items()},
        "conditioned_on_ok": {str(k): v for k, v in ex["conditioned_on_ok"].items()},
    }
    summary = session.summary()
    rep.sampled = {"session": summary}
    ok_key = session.raw_key[session.attempt_key]
    okm = session.ok
    for a in (0, 1):
        tot = int(np.sum(ok_key == a))
        n_ok = int(np.sum(okm & (ok_key == a)))
        rep.sampled.setdefault("p_ok", {})[str(a)] = freq(n_ok, tot)
        rep.check(f"P(ok | alice {a}) within 3 sigma", _within(n_ok, tot, ex["p_ok"][a]))
        s = session.sifted
        rows = s[s[:, 0] == a]
        if len(rows) and ex["conditioned_on_ok"][a]:
            n1 = int(np.sum(rows[:, 1] == 1))
            rep.sampled.setdefault("bob", {})[str(a)] = {"1": freq(n1, len(rows))}
            rep.check(f"P(bob 1 | alice {a}) within 3 sigma", _within(n1, len(rows), ex["bob"][a][1]))
    if strategy.kind is EveKind.REPLACE:
        rep.sampled["eve_accuracy"] = eve_accuracy(session)
    elif strategy.kind is EveKind.INTERCEPT and strategy.policy == "per_group":
        rep.sampled["eve_basis_match"] = basis_match_rate(session)
    tests = run_tests(CheckData.from_session(session), _selected_tests(cfg), cfg.resolution)
    rep.tests = [t.as_dict() for t in tests]
    return rep


def cmd_security(cfg: RunConfig) -> StatReport:
    """Sampled detection tests on a session, next to the exact test values for the same source.

    A check fails when a conclusive sampled decision disagrees with the exact one.
    """
    rep = StatReport(cfg.echo())
    strategy, source, session = _session(cfg)
    names = _selected_tests(cfg)
    sampled = run_tests(CheckData.from_session(session), names, cfg.resolution)
    state = effective_group_state(strategy, cfg.params, source)
    exact = {
        r.name: r
        for r in exact_battery(state, strategy if strategy.kind is not EveKind.NONE else source, cfg.resolution)
        if r.name in names
    }
    rep.exact = {name: r.as_dict() for name, r in exact.items()}
    rep.tests = [t.as_dict() for t in sampled]
    for t in sampled:
        base = t.name.split("/", 1)[0]
        ex = exact.get(base)
        if ex is None or t.decision == INCONCLUSIVE or ex.decision == INCONCLUSIVE:
            continue
        rep.check(f"{t.name}: sampled decision matches exact", t.decision == ex.decision, sampled=t.decision, exact=ex.decision)
    rep.sampled = {"session": session.summary(), "check_groups": int(session.attempt_check.sum())}
    return rep


def cmd_reproduce_tables(cfg: RunConfig) -> StatReport:
    rep = StatReport(cfg.echo())
    params = SourceParams.from_a2(0.5, 1, cfg.particle1)
    tables = reproduce_tables(params, True, cfg.seed, cfg.workers, cfg.trials)
    rep.tables = {k: t.as_dict() for k, t in tables.items()}
    rep.sampled = {"sifted_groups": sifted_counts(tables), "attempts_per_bit": cfg.trials}
    for k, t in tables.items():
        rep.check(f"{k} exact", t.exact_pass)
        if t.sampled_pass is not None:
            rep.check(f"{k} sampled", t.sampled_pass)
    return rep


def cmd_verify_identities(cfg: RunConfig) -> StatReport:
    rep = StatReport(cfg.echo())
    checks = verify_state_identities()
    rep.identities = [c.as_dict() for c in checks]
    for c in checks:
        if c.kind != "refuted":
            rep.check(c.name, c.passed, kind=c.kind)
    return rep


HANDLERS = {
    "dist": cmd_dist,
    "protocol": cmd_protocol,
    "qkd": cmd_qkd,
    "security": cmd_security,
    "reproduce-tables": cmd_reproduce_tables,
    "verify-identities": cmd_verify_identities,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--config", help="key=value file with defaults for any option")
    g.add_argument("--source", help="source model: honest, separable, coins, mixed, mixed-z, mixed-x, fixed:XY, "
                   "tuned-zeros, tuned-ones, tuned-mixture, illusion")
    g.add_argument("--eve", help="none, intercept, intercept:per_particle, or one of Eve's sources")
    g.add_argument("--setting", help="Alice's setting a, b or c")
    g.add_argument("--bob-basis", dest="bob_basis", help="Bob's basis Z or X (dist only)")
    g.add_argument("--a2", type=float, help="source amplitude squared, a^2 in [0, 1]")
    g.add_argument("--N", type=int, help="groups have 4N timeslots")
    g.add_argument("--particle1", choices=["pure", "dephased"], help="state of Alice's particle 1")
    g.add_argument("--key-len", dest="key_len", type=int, help="raw key bits per session")
    g.add_argument("--trials", type=int, help="sampled groups (per raw bit for reproduce-tables)")
    g.add_argument("--seed", type=lambda s: int(s, 0), help=f"64-bit master seed (default ${SEED_ENV} or 0)")
    g.add_argument("--sacrifice-fraction", dest="sacrifice_fraction", type=float, help="fraction of groups disclosed for tests")
    g.add_argument("--max-attempts", dest="max_attempts", type=int, help="groups tried per key bit before giving up")
    g.add_argument("--tests", help=f"comma list from {','.join(TEST_NAMES)} or 'all'")
    g.add_argument("--resolution", choices=["decoded", "full"], help="spin-sum resolution of the independence test")
    g.add_argument("--workers", type=int, help="threads for Monte Carlo (results do not depend on it)")
    g.add_argument("--format", choices=["json", "csv"])
    g.add_argument("--output", help="write the report here instead of stdout")
    g.add_argument("--compare", help="compare with a stored JSON report, ignoring the timestamp")
    g.add_argument("--no-timestamp", dest="timestamp", action="store_false", default=None)

    p = argparse.ArgumentParser(prog="hwqkd", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "dist": "spin-sum distribution for one source and setting",
        "protocol": "communication protocol run and decoding statistics",
        "qkd": "key distribution session with optional eavesdropper",
        "security": "detection tests, sampled and exact",
        "reproduce-tables": "the six key-transmission tables, exact and sampled",
        "verify-identities": "state identities behind Eve's sources",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


def run(cfg: RunConfig) -> StatReport:
    try:
        return HANDLERS[cfg.command](cfg)
    except ValueError as exc:  # includes UnsupportedConfiguration
        raise ConfigError(str(exc)) from None


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args)
        rep = run(cfg)
    except (ConfigError, OSError) as exc:
        print(f"hwqkd {args.command}: error: {exc}", file=sys.stderr)
        return 2
    if cfg.compare:
        with open(cfg.compare, encoding="utf-8") as fh:
            stored = json.load(fh)
        rep.check(f"matches {cfg.compare}", reports_equal(rep.as_dict(False), stored))
    text = rep.to_json(cfg.timestamp) if cfg.format == "json" else rep.to_csv()
    if cfg.output:
        with open(cfg.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    failed = [c["name"] for c in rep.checks if not c["passed"]]
    if failed:
        print(f"hwqkd {cfg.command}: {len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
    return 1 if failed else 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
