"""Experiment configuration: a single JSON document with a versioned schema.

Units
-----
Every frequency is given in Hz (``*_hz``, cycles per second) and converted
to angular frequency (rad/s) by :func:`angular` when physics objects are
built; the stored configuration keeps the values exactly as written, so
``emit(parse(text))`` is a fixed point.  Times are in microseconds
(``*_us``), phases in radians.  ``null`` for a decay time means no decay.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema

from .dynamics import MODELS, DriveParams
from .errors import ConfigError
from .fock import TrapParams
from .ga import GAConfig
from .observables import RABI_MODELS, SequenceParams

__all__ = ["ExperimentConfig", "PRESETS", "SCHEMA", "SCHEMA_VERSION", "angular", "emit",
           "load_config", "load_preset", "parse_config"]

SCHEMA_VERSION = 1
PRESETS = ("fig1b", "fig1c", "fig2", "fig3")
US = 1e-6

_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_decay = {"oneOf": [_pos, {"type": "null"}]}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_grid = {"t_start_us": _nonneg, "t_stop_us": _pos, "t_step_us": _pos}

SCHEMA = _obj({
    "schema_version": {"const": SCHEMA_VERSION},
    "name": {"type": "string"},
    "description": {"type": "string"},
    "trap": _obj({"eta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                  "omega_ax_hz": _pos}, ["eta", "omega_ax_hz"]),
    "drive": {
        **_obj({"delta_hz": _pos, "delta_S_hz": {"type": "number"}, "amplitude": _pos,
                "phase": {"type": "number"}, "spin_sign": {"enum": [1, -1]}}, ["delta_hz"]),
        "oneOf": [{"required": ["delta_S_hz"]}, {"required": ["amplitude"]}],
    },
    "sequence": _obj({"t_wait_us": _nonneg, "tau_us": _decay,
                      "fringe_amplitude": {"type": "number", "minimum": 0, "maximum": 1},
                      "omega_0_hz": _pos}),
    "state": _obj({"type": {"enum": ["ground", "thermal"]}, "nbar": _nonneg}, ["type"]),
    "model": {"enum": list(MODELS)},
    "scan": {"oneOf": [
        _obj({"type": {"const": "contrast"}, **_grid}, ["type", "t_stop_us", "t_step_us"]),
        _obj({"type": {"const": "bsb"},
              "displacement_times_us": {"type": "array", "items": _nonneg, "minItems": 1},
              "probe_step_us": _pos, "probe_points": {"type": "integer", "minimum": 1}},
             ["type", "displacement_times_us", "probe_step_us", "probe_points"]),
        _obj({"type": {"const": "homodyne"}, **_grid,
              "phase_points": {"type": "integer", "minimum": 4}},
             ["type", "t_stop_us", "t_step_us", "phase_points"]),
    ]},
    "shots": {"type": "integer", "minimum": 1},
    "seed": {"type": "integer", "minimum": 0},
    "fit": _obj({
        "model": {"enum": ["ground", "n_independent", *MODELS]},
        "free": {"type": "array", "items": {"enum": ["delta_S", "delta", "tau", "nbar",
                                                     "amplitude", "delta_eff"]},
                 "uniqueItems": True},
        "nbar_guess": _nonneg,
        "rabi_model": {"enum": list(RABI_MODELS)},
        "ga": _obj({k: {"type": "integer", "minimum": 0} for k in
                    ("population", "generations", "elite_count", "n_bootstrap", "n_max",
                     "tournament_size", "max_extensions")}
                   | {k: _nonneg for k in ("mutation_scale", "crossover_rate",
                                           "mutation_decay")}),
    }),
    "output": _obj({"dir": {"type": "string", "minLength": 1}}),
}, ["schema_version", "trap", "drive", "scan", "shots"])

_DEFAULTS = {
    "sequence": {"t_wait_us": 0.0, "tau_us": None, "fringe_amplitude": 1.0,
                 "omega_0_hz": 100e3},
    "state": {"type": "ground"},
    "model": "closed",
    "seed": 0,
    "fit": {},
    "output": {"dir": "out"},
}


def angular(hz: float) -> float:
    """Hz to rad/s; the only place the factor 2 pi enters."""
    return 2 * math.pi * hz


def _decay_s(tau_us):
    return math.inf if tau_us is None else tau_us * US


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration; ``data`` is the normalized JSON document."""

    data: dict

    def __getitem__(self, key):
        return self.data[key]

    @property
    def name(self) -> str:
        return self.data.get("name", "")

    @property
    def scan_type(self) -> str:
        return self.data["scan"]["type"]

    @property
    def model(self) -> str:
        return self.data["model"]

    @property
    def shots(self) -> int:
        return self.data["shots"]

    @property
    def seed(self) -> int:
        return self.data["seed"]

    @property
    def trap(self) -> TrapParams:
        t = self.data["trap"]
        return TrapParams(eta=t["eta"], omega_ax=angular(t["omega_ax_hz"]))

    @property
    def drive(self) -> DriveParams:
        d = self.data["drive"]
        eta = self.data["trap"]["eta"]
        delta = angular(d["delta_hz"])
        if "delta_S_hz" in d:
            delta_S = angular(d["delta_S_hz"])
        elif eta > 0:
            delta_S = 2 * d["amplitude"] * delta / eta
        else:
            raise ConfigError("drive.amplitude requires trap.eta > 0; give drive.delta_S_hz")
        return DriveParams(delta_S=delta_S, delta=delta, eta=eta,
                           omega_ax=angular(self.data["trap"]["omega_ax_hz"]),
                           phase=d.get("phase", 0.0), spin_sign=d.get("spin_sign", 1),
                           tau=_decay_s(self.data["sequence"]["tau_us"]))

    @property
    def sequence(self) -> SequenceParams:
        s = self.data["sequence"]
        return SequenceParams(t_wait=s["t_wait_us"] * US, tau=_decay_s(s["tau_us"]),
                              fringe_amplitude=s["fringe_amplitude"],
                              omega_0=angular(s["omega_0_hz"]))

    @property
    def ga(self) -> GAConfig:
        try:
            return GAConfig(seed=self.seed, **self.data["fit"].get("ga", {}))
        except ValueError as exc:
            raise ConfigError(f"fit.ga: {exc}") from None

    def grid(self):
        """Scan times in seconds (contrast and homodyne scans)."""
        import numpy as np

        s = self.data["scan"]
        start, stop, step = s.get("t_start_us", 0.0), s["t_stop_us"], s["t_step_us"]
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return (start + step * np.arange(n)) * US

    def with_overrides(self, **changes) -> "ExperimentConfig":
        data = copy.deepcopy(self.data)
        for key, value in changes.items():
            if value is not None:
                data[key] = value
        return parse_config(data)


def _line_of(text: str, path) -> int | None:
    """Best-effort line number of the JSON node at ``path`` in ``text``."""
    pos = 0
    for key in path:
        if isinstance(key, str):
            found = text.find(json.dumps(key), pos)
            if found < 0:
                return None
            pos = found
    return text.count("\n", 0, pos) + 1 if path else 1


def _format(err: jsonschema.ValidationError, text: str | None, source: str) -> str:
    path = list(err.absolute_path)
    where = "/".join(str(p) for p in path) or "<root>"
    line = _line_of(text, path) if text is not None else None
    loc = f"{source}:{line}" if line else source
    return f"{loc}: {where}: {err.message}"


def parse_config(doc, source: str = "<config>") -> ExperimentConfig:
    """Validate a JSON text or already-decoded mapping; fill defaults."""
    text = None
    if isinstance(doc, (str, bytes)):
        text = doc.decode() if isinstance(doc, bytes) else doc
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: configuration must be a JSON object")
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), e.message))
    if errors:
        # the deepest error is usually the informative one
        err = max(errors, key=lambda e: len(e.absolute_path))
        if err.context:
            err = max(err.context, key=lambda e: len(e.absolute_path))
        raise ConfigError(_format(err, text, source))
    data = copy.deepcopy(doc)
    for key, default in _DEFAULTS.items():
        if isinstance(default, dict):
            data[key] = {**default, **data.get(key, {})}
        else:
            data.setdefault(key, default)
    if data["state"]["type"] == "thermal" and "nbar" not in data["state"]:
        raise ConfigError(f"{source}: state: thermal state requires nbar")
    cfg = ExperimentConfig(data)
    # build the physics objects once so semantic errors surface here
    try:
        cfg.drive, cfg.sequence, cfg.trap, cfg.ga
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{source}: {exc}") from None
    return cfg


def emit(cfg: ExperimentConfig) -> str:
    """Canonical JSON text of a configuration."""
    return json.dumps(cfg.data, sort_keys=True, indent=2) + "\n"


def load_config(path) -> ExperimentConfig:
    """Read a config file, or a preset when ``path`` names one.

    File-system errors propagate as :class:`OSError`.
    """
    if str(path) in PRESETS:
        return load_preset(str(path))
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_config(text, str(path))


def load_preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
    text = resources.files("ionphase.presets").joinpath(f"{name}.json").read_text(encoding="utf-8")
    return parse_config(text, f"preset:{name}")
