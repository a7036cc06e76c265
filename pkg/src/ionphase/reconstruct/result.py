"""Fit results and their JSON form."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import RecordFormatError

# JSON field names; changing any of these breaks stored results
FIELDS = ("kind", "params", "ci", "log_likelihood", "chi2", "converged", "residuals", "diagnostics")


def _plain(obj):
    """Recursively convert numpy scalars/arrays into JSON-ready Python values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


@dataclass
class FitResult:
    """Parameter estimates of one fit.

    ``ci`` holds 68 % intervals ``(lo, hi)``; every interval contains its
    point estimate.  ``converged`` is False only together with an explanation
    in ``diagnostics['reason']``.
    """

    params: dict
    ci: dict
    kind: str = ""
    log_likelihood: float | None = None
    chi2: float | None = None
    converged: bool = True
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.params = {k: float(v) for k, v in self.params.items()}
        self.ci = {k: (float(lo), float(hi)) for k, (lo, hi) in self.ci.items()}
        self.residuals = np.asarray(self.residuals, dtype=float)
        for name, (lo, hi) in self.ci.items():
            if name not in self.params:
                raise ValueError(f"interval for unknown parameter {name!r}")
            v = self.params[name]
            if not (lo <= v <= hi) and not math.isnan(v):
                raise ValueError(f"{name}: estimate {v!r} outside interval ({lo!r}, {hi!r})")
        if not self.converged and "reason" not in self.diagnostics:
            raise ValueError("a non-converged result must state a reason in diagnostics")

    def __getitem__(self, name: str) -> float:
        return self.params[name]

    def stderr(self, name: str) -> float:
        lo, hi = self.ci[name]
        return (hi - lo) / 2

    def to_dict(self) -> dict:
        return _plain({
            "kind": self.kind,
            "params": self.params,
            "ci": {k: list(v) for k, v in self.ci.items()},
            "log_likelihood": self.log_likelihood,
            "chi2": self.chi2,
            "converged": self.converged,
            "residuals": self.residuals,
            "diagnostics": self.diagnostics,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "FitResult":
        missing = [f for f in ("params", "ci") if f not in data]
        if missing:
            raise RecordFormatError(f"fit result lacks fields {missing}")
        unknown = set(data) - set(FIELDS)
        if unknown:
            raise RecordFormatError(f"fit result has unknown fields {sorted(unknown)}")
        return cls(params=data["params"], ci={k: tuple(v) for k, v in data["ci"].items()},
                   kind=data.get("kind", ""), log_likelihood=data.get("log_likelihood"),
                   chi2=data.get("chi2"), converged=data.get("converged", True),
                   residuals=np.asarray(data.get("residuals", []), dtype=float),
                   diagnostics=data.get("diagnostics", {}))

    @classmethod
    def from_json(cls, text: str) -> "FitResult":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise RecordFormatError(f"invalid fit result JSON: {exc}") from None


def symmetric_ci(values: dict, errors: dict) -> dict:
    return {k: (values[k] - errors[k], values[k] + errors[k]) for k in errors}
