"""Check reports and their deterministic JSON/CSV rendering."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

_MAX_RATIONAL_BITS = 1024


def to_jsonable(x):
    """Fractions become "p/q", floats get 12 significant digits, inf becomes a string."""
    if isinstance(x, bool) or x is None:
        return x
    if isinstance(x, Fraction):
        # rationals with thousands of digits are unreadable; keep them as floats
        if max(abs(x.numerator).bit_length(), x.denominator.bit_length()) > _MAX_RATIONAL_BITS:
            return to_jsonable(float(x))
        return f"{x.numerator}/{x.denominator}"
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x) or math.isinf(x):
            return str(x)
        return float(f"{x:.12g}")
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [to_jsonable(v) for v in x]
    if hasattr(x, "to_json"):
        return x.to_json()
    return str(x)


@dataclass
class CheckReport:
    name: str
    passed: bool
    value: object = None
    bound_proxy: object = None
    params: dict = field(default_factory=dict)
    per_depth: list = field(default_factory=list)
    witnesses: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    seed: int | None = None
    runtime_ms: float = 0.0
    expected: str = "pass"  # "pass", or "witness" when a failure witness is the goal

    @property
    def meets_expectation(self) -> bool:
        return self.passed

    def to_dict(self, timings: bool = False) -> dict:
        d = {
            "name": self.name,
            "params": self.params,
            "value": self.value,
            "bound_proxy": self.bound_proxy,
            "pass": self.passed,
            "expected": self.expected,
            "per_depth": self.per_depth,
            "witnesses": self.witnesses,
            "notes": self.notes,
            "seed": self.seed,
        }
        if timings:
            d["runtime_ms"] = round(self.runtime_ms, 1)
        return to_jsonable(d)

    def to_json(self, timings: bool = False) -> str:
        return json.dumps(self.to_dict(timings), indent=2, sort_keys=True)

    def per_depth_csv(self) -> str:
        if not self.per_depth:
            return ""
        keys = sorted({k for row in self.per_depth for k in row})
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for row in self.per_depth:
            w.writerow({k: to_jsonable(row.get(k)) for k in keys})
        return buf.getvalue()

    def summary_line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: value={to_jsonable(self.value)} bound={to_jsonable(self.bound_proxy)}"
