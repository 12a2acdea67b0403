"""Run reports: probability formatting, JSON and CSV emission, comparison mode."""

from __future__ import annotations

import csv
import io
import json
import platform
import time
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Optional

import numpy as np

RATIONAL_TOL = 1e-9
MAX_DENOMINATOR = 256
VOLATILE_KEYS = ("timestamp",)


def as_rational(p: float) -> Optional[str]:
    """Nearest p/q with q <= 256 when within 1e-9 of ``p``, else None."""
    if p is None or not np.isfinite(p):
        return None
    f = Fraction(float(p)).limit_denominator(MAX_DENOMINATOR)
    if abs(float(f) - p) > RATIONAL_TOL:
        return None
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


def prob(p: float) -> dict:
    """A probability in both decimal (12 digits) and small-rational form."""
    if p is None:
        return {"value": None, "rational": None}
    p = float(p)
    if abs(p) < 1e-15:
        p = 0.0
    return {"value": round(p, 12), "rational": as_rational(p)}


def freq(count: int, total: int) -> dict:
    """A sampled frequency; always carries its counts."""
    return {"count": int(count), "total": int(total), "value": round(count / total, 12) if total else None}


def prob_map(d: dict) -> dict:
    return {str(k): prob(v) for k, v in sorted(d.items())}


def to_jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, float):
        return round(obj, 12) if np.isfinite(obj) else None
    if hasattr(obj, "as_dict"):
        return to_jsonable(obj.as_dict())
    return obj


@dataclass
class StatReport:
    """Top-level report: config echo plus exact, sampled, tables, tests and identities sections."""

    config: dict
    exact: dict = field(default_factory=dict)
    sampled: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    tests: list = field(default_factory=list)
    identities: list = field(default_factory=list)
    checks: list = field(default_factory=list)

    def check(self, name: str, passed: bool, **info) -> bool:
        """Record a pass/fail check; any failed check makes the run fail."""
        self.checks.append({"name": name, "passed": bool(passed), **info})
        return bool(passed)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def as_dict(self, timestamp: bool = True) -> dict:
        from . import __version__

        out = {
            "config": self.config,
            "exact": self.exact,
            "sampled": self.sampled,
            "tables": self.tables,
            "tests": self.tests,
            "identities": self.identities,
            "checks": self.checks,
            "passed": self.passed,
            "provenance": {
                "package_version": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
            },
        }
        if timestamp:
            out["provenance"]["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        return to_jsonable(out)

    def to_json(self, timestamp: bool = True) -> str:
        return json.dumps(self.as_dict(timestamp), sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["table", "row", "column", "value"])
        for table, row, col, value in flatten_rows(self.as_dict(timestamp=False)):
            w.writerow([table, row, col, value])
        return buf.getvalue()


def flatten_rows(report: dict):
    """Flatten every leaf to (table, row, column, value); ``table`` is the top-level section."""
    for section in ("exact", "sampled", "tables", "tests", "identities", "checks"):
        yield from _flatten(section, report.get(section), [])


def _flatten(table: str, obj, path: list):
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _flatten(table, obj[k], path + [str(k)])
    elif isinstance(obj, list) and any(isinstance(v, (dict, list)) for v in obj):
        for i, v in enumerate(obj):
            yield from _flatten(table, v, path + [str(i)])
    else:
        if isinstance(obj, list):
            obj = json.dumps(obj)
        row = "/".join(path[:-1])
        col = path[-1] if path else ""
        yield table, row, col, obj


def strip_volatile(report: dict) -> dict:
    """Copy of a report dict without fields excluded from comparisons."""
    out = json.loads(json.dumps(report))
    prov = out.get("provenance", {})
    for k in VOLATILE_KEYS:
        prov.pop(k, None)
    return out


def reports_equal(a: dict | str, b: dict | str) -> bool:
    if isinstance(a, str):
        a = json.loads(a)
    if isinstance(b, str):
        b = json.loads(b)
    return strip_volatile(a) == strip_volatile(b)
