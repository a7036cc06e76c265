"""Measurement records and their on-disk format.

A record is stored as two files sharing a stem::

    <stem>.csv   header ``control,shots,successes``, one row per point
    <stem>.json  sidecar with scan type, readout convention and metadata

Floats are written with ``repr`` so a write/read cycle is bit exact.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import RecordFormatError

__all__ = ["MeasurementRecord", "atomic_write", "read_record", "write_record", "SCAN_TYPES"]

SCAN_TYPES = ("contrast", "bsb", "homodyne")
# which spin state a "success" counts, per scan type
SUCCESS_STATE = {"contrast": "dark_up", "bsb": "bright_down", "homodyne": "dark_up"}
CSV_HEADER = ["control", "shots", "successes"]
FORMAT_VERSION = 1


@dataclass(frozen=True)
class MeasurementRecord:
    """Counts of one scan: ``successes[i]`` out of ``shots[i]`` at ``control[i]``."""

    control: np.ndarray
    shots: np.ndarray
    successes: np.ndarray
    scan_type: str = "contrast"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        control = np.asarray(self.control, dtype=float)
        shots = np.asarray(self.shots)
        successes = np.asarray(self.successes)
        if shots.size and not np.all(np.equal(np.mod(shots, 1), 0)):
            raise ValueError("shots must be integers")
        if successes.size and not np.all(np.equal(np.mod(successes, 1), 0)):
            raise ValueError("successes must be integers")
        shots = shots.astype(np.int64)
        successes = successes.astype(np.int64)
        if not (control.ndim == shots.ndim == successes.ndim == 1):
            raise ValueError("record arrays must be one-dimensional")
        if not (control.size == shots.size == successes.size):
            raise ValueError("record arrays must have equal length")
        if np.any(successes < 0) or np.any(successes > shots):
            raise ValueError("successes must lie in [0, shots]")
        if self.scan_type not in SCAN_TYPES:
            raise ValueError(f"unknown scan type {self.scan_type!r}")
        for name, arr in (("control", control), ("shots", shots), ("successes", successes)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return self.control.size

    @property
    def success_state(self) -> str:
        return SUCCESS_STATE[self.scan_type]

    @property
    def frequencies(self) -> np.ndarray:
        return self.successes / np.maximum(self.shots, 1)

    def __eq__(self, other):
        if not isinstance(other, MeasurementRecord):
            return NotImplemented
        return (self.scan_type == other.scan_type and self.meta == other.meta
                and np.array_equal(self.control, other.control)
                and np.array_equal(self.shots, other.shots)
                and np.array_equal(self.successes, other.successes))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for c, n, s in zip(self.control, self.shots, self.successes):
            writer.writerow([repr(float(c)), int(n), int(s)])
        return buf.getvalue()

    def sidecar(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "scan_type": self.scan_type,
            "success_state": self.success_state,
            "n_points": len(self),
            "meta": self.meta,
        }


def dumps_json(obj) -> str:
    """Canonical JSON text (sorted keys, trailing newline)."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_record(record: MeasurementRecord, stem) -> tuple[Path, Path]:
    """Write ``<stem>.csv`` and ``<stem>.json``; returns both paths."""
    stem = Path(stem)
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    atomic_write(csv_path, record.to_csv())
    atomic_write(json_path, dumps_json(record.sidecar()))
    return csv_path, json_path


def parse_record(csv_text: str, sidecar: dict | None = None, source: str = "<string>"):
    """Parse record CSV text; the optional sidecar supplies scan type and meta."""
    rows = list(csv.reader(io.StringIO(csv_text)))
    if not rows or [h.strip() for h in rows[0]] != CSV_HEADER:
        raise RecordFormatError(f"{source}: expected header {','.join(CSV_HEADER)!r}")
    control, shots, successes = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise RecordFormatError(f"{source}:{lineno}: expected 3 fields, got {len(row)}")
        try:
            control.append(float(row[0]))
            shots.append(int(row[1]))
            successes.append(int(row[2]))
        except ValueError as exc:
            raise RecordFormatError(f"{source}:{lineno}: {exc}") from None
    if not csv_text.endswith("\n"):
        raise RecordFormatError(f"{source}: file does not end with a newline (truncated?)")
    scan_type, meta = "contrast", {}
    if sidecar is not None:
        expected = sidecar.get("n_points")
        if expected is not None and expected != len(control):
            raise RecordFormatError(
                f"{source}: sidecar declares {expected} points, CSV has {len(control)}")
        scan_type = sidecar.get("scan_type", scan_type)
        meta = sidecar.get("meta", {})
        declared = sidecar.get("success_state")
        if declared is not None and scan_type in SUCCESS_STATE and declared != SUCCESS_STATE[scan_type]:
            raise RecordFormatError(f"{source}: success_state {declared!r} does not match {scan_type!r}")
    try:
        return MeasurementRecord(np.array(control), np.array(shots, dtype=np.int64),
                                 np.array(successes, dtype=np.int64), scan_type, meta)
    except ValueError as exc:
        raise RecordFormatError(f"{source}: {exc}") from None


def read_record(stem) -> MeasurementRecord:
    """Read a record written by :func:`write_record` (sidecar optional)."""
    stem = Path(stem)
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    sidecar = None
    if json_path.exists():
        try:
            sidecar = json.loads(json_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise RecordFormatError(f"{json_path}: {exc}") from None
    return parse_record(csv_path.read_text(encoding="utf-8"), sidecar, str(csv_path))
