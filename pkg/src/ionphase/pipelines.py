"""Simulation and reconstruction pipelines behind the command-line tool.

A dataset directory holds::

    dataset.json            configuration, seed and per-record metadata
    record_NNN.csv/.json    measurement records (see :mod:`ionphase.records`)
    truth.csv               noiseless probabilities: record, control, probability

``reconstruct`` adds ``fit.json`` (named fit results) and plot-ready CSVs:
``fit_curve.csv`` (record, control, observed, fitted, residual) for every
scan, ``alpha_series.csv`` and ``phonons.csv`` for sideband scans, and
``trajectory.csv`` for homodyne scans.  All files are written only after
the whole computation has finished, each through write-then-rename.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, parse_config
from .dynamics import alpha_closed, fock_branch
from .errors import RecordFormatError, Unidentifiable
from .fock import PhononDistribution, choose_n_max, coherent_distribution, thermal_distribution
from .observables import (SequenceParams, bsb_signal, contrast_ground, contrast_readout,
                          contrast_thermal, homodyne_signal, oscillator_phase, sample_record)
from .reconstruct import (fit_coherent, fit_contrast_curve, fit_detuning, fit_homodyne_fringe,
                          fit_trajectory, reconstruct_phonons)
from .records import MeasurementRecord, atomic_write, dumps_json, read_record, write_record

__all__ = ["reconstruct", "simulate"]

DATASET_VERSION = 1
US = 1e-6


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _displacements(cfg: ExperimentConfig, times: np.ndarray):
    """Branch displacement at ``times`` and, for numeric models, the states."""
    drive = cfg.drive
    if cfg.model == "closed":
        return np.asarray(alpha_closed(times, drive), dtype=complex), None
    order = np.argsort(times)
    ts = times[order]
    tr = fock_branch(0, drive, float(ts[-1]), cfg.model, times=ts)
    alpha = np.empty(times.size, dtype=complex)
    alpha[order] = tr.alpha
    states = [None] * times.size
    for i, s in zip(order, tr.states):
        states[i] = s
    return alpha, states


# --- simulation -----------------------------------------------------------

def _contrast_curves(cfg: ExperimentConfig, threads: int):
    t = cfg.grid()
    drive, state = cfg.drive, cfg["state"]
    if state["type"] == "ground" and cfg.model == "closed":
        contrast = np.asarray(contrast_ground(t, drive))
    else:
        nbar = state.get("nbar", 0.0) if state["type"] == "thermal" else 0.0
        dist = thermal_distribution(nbar, choose_n_max(nbar=nbar))
        contrast = np.asarray(contrast_thermal(t, drive, dist, cfg.model))
    q = np.asarray(contrast_readout(contrast, t, cfg.sequence.tau))
    return [(t, q, {"scan": "contrast"})]


def _bsb_curves(cfg: ExperimentConfig, threads: int):
    s = cfg["scan"]
    t_d = np.array(s["displacement_times_us"], dtype=float) * US
    probe = np.arange(s["probe_points"]) * s["probe_step_us"] * US
    alpha, states = _displacements(cfg, t_d)
    seq, eta = cfg.sequence, cfg.trap.eta
    rabi_model = cfg["fit"].get("rabi_model", "ld")
    n_max = choose_n_max(cfg.drive.amplitude)

    def one(k):
        if states is None:
            dist = coherent_distribution(abs(alpha[k]), n_max)
        else:
            dist = PhononDistribution(states[k].populations())
        q = np.asarray(bsb_signal(probe, dist, seq, eta, rabi_model))
        meta = {"t_displacement": float(t_d[k]), "eta": eta, "omega_0": seq.omega_0,
                "alpha_mag": float(abs(alpha[k]))}
        return probe, q, meta

    return _map(one, list(range(t_d.size)), threads)


def _homodyne_curves(cfg: ExperimentConfig, threads: int):
    t = cfg.grid()
    n_phase = cfg["scan"]["phase_points"]
    dphi = np.linspace(-np.pi, np.pi, n_phase, endpoint=False)
    alpha, _ = _displacements(cfg, t)
    seq, delta = cfg.sequence, cfg.drive.delta
    out = []
    for k, tk in enumerate(t):
        phi0 = float(oscillator_phase(tk, delta, replace(seq, delta_phi=0.0)))
        q = np.asarray(homodyne_signal(tk, abs(alpha[k]), phi0 + dphi, seq))
        out.append((dphi, q, {"t_displacement": float(tk), "alpha_mag": float(abs(alpha[k])),
                              "phi": float(np.angle(np.exp(1j * phi0)))}))
    return out


_CURVES = {"contrast": _contrast_curves, "bsb": _bsb_curves, "homodyne": _homodyne_curves}


def simulate(cfg: ExperimentConfig, out_dir, seed: int | None = None, threads: int = 1) -> Path:
    """Synthesize the dataset described by ``cfg`` into ``out_dir``.

    The result depends only on the configuration and seed: each record
    draws from its own counter-based stream keyed by ``(seed, record)``.
    """
    if seed is not None:
        cfg = cfg.with_overrides(seed=seed)
    out = Path(out_dir)
    curves = _CURVES[cfg.scan_type](cfg, threads)
    records, truth_rows, entries = [], [], []
    for k, (control, q, meta) in enumerate(curves):
        stream = None if len(curves) == 1 else k
        rec = sample_record(q, control, cfg.shots, cfg.seed, cfg.scan_type, meta, stream=stream)
        records.append(rec)
        truth_rows.extend((k, c, p) for c, p in zip(control, q))
        entries.append({"stem": f"record_{k:03d}", **meta})

    for entry, rec in zip(entries, records):
        write_record(rec, out / entry["stem"])
    atomic_write(out / "truth.csv", _csv(["record", "control", "probability"], truth_rows))
    dataset = {"format_version": DATASET_VERSION, "scan_type": cfg.scan_type,
               "seed": cfg.seed, "config": cfg.data, "records": entries, "truth": "truth.csv"}
    atomic_write(out / "dataset.json", dumps_json(dataset))
    return out


# --- reconstruction -------------------------------------------------------

def load_dataset(data_dir):
    """Return ``(config, dataset dict, records)`` of a simulated dataset."""
    data_dir = Path(data_dir)
    try:
        dataset = json.loads((data_dir / "dataset.json").read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RecordFormatError(f"{data_dir / 'dataset.json'}: {exc}") from None
    if dataset.get("format_version") != DATASET_VERSION:
        raise RecordFormatError(f"{data_dir}: unsupported dataset format "
                                f"{dataset.get('format_version')!r}")
    cfg = parse_config(dataset["config"], str(data_dir / "dataset.json"))
    records = [read_record(data_dir / e["stem"]) for e in dataset["records"]]
    return cfg, dataset, records


def _curve_rows(k, record: MeasurementRecord, fitted):
    obs = record.frequencies
    return [(k, c, o, f, f - o) for c, o, f in zip(record.control, obs, fitted)]


CURVE_HEADER = ["record", "control", "observed", "fitted", "residual"]


def _reconstruct_contrast(cfg, records, threads):
    rec = records[0]
    fit = cfg["fit"]
    thermal = cfg["state"]["type"] == "thermal"
    model = fit.get("model", "n_independent" if thermal else "ground")
    free = fit.get("free", ["nbar"] if thermal else ["delta_S", "delta", "tau"])
    result = fit_contrast_curve(rec, model, free, cfg.drive, nbar=fit.get("nbar_guess", 0.0),
                                tau=cfg.sequence.tau)
    files = {"fit_curve.csv": _csv(CURVE_HEADER,
                                   _curve_rows(0, rec, result.diagnostics["fitted"]))}
    return {"contrast": result}, files


def _reconstruct_bsb(cfg, records, threads):
    fit = cfg["fit"]
    rabi_model = fit.get("rabi_model", "ld")
    ga, eta = cfg.ga, cfg.trap.eta
    expected = cfg.drive.amplitude
    results, curve, series, phonons = {}, [], [], []
    for k, rec in enumerate(records):
        dist, res = reconstruct_phonons(rec, ga, eta=eta, expected_alpha=expected,
                                        rabi_model=rabi_model, threads=threads)
        coh = fit_coherent(dist)
        stem = f"record_{k:03d}"
        results[stem] = res
        results[f"{stem}_coherent"] = coh
        p = res.params
        seq = SequenceParams(tau=p["tau"], fringe_amplitude=p["fringe_amplitude"],
                             omega_0=p["omega_0"])
        curve += _curve_rows(k, rec, np.asarray(bsb_signal(rec.control, dist, seq, eta, rabi_model)))
        t_d = rec.meta.get("t_displacement", math.nan)
        lo, hi = coh.ci["alpha_mag"]
        closed = abs(complex(alpha_closed(t_d, cfg.drive))) if math.isfinite(t_d) else math.nan
        series.append((k, t_d, coh["alpha_mag"], lo, hi, closed,
                       int(coh.diagnostics["poor_fit"])))
        for n in range(dist.p.size):
            name = f"p_{n}"
            plo, phi = res.ci.get(name, (math.nan, math.nan))
            phonons.append((k, n, float(dist.p[n]), plo, phi))
    files = {
        "fit_curve.csv": _csv(CURVE_HEADER, curve),
        "alpha_series.csv": _csv(["record", "t_displacement", "alpha_mag", "alpha_lo",
                                  "alpha_hi", "alpha_closed", "poor_fit"], series),
        "phonons.csv": _csv(["record", "n", "p", "p_lo", "p_hi"], phonons),
    }
    return results, files


def _reconstruct_homodyne(cfg, records, threads):
    seq = cfg.sequence
    fit = cfg["fit"]

    def one(rec):
        try:
            return fit_homodyne_fringe(rec, rec.meta["t_displacement"], seq)
        except Unidentifiable:
            return None

    fringes = _map(one, records, threads)
    results, curve, points, skipped = {}, [], [], []
    for k, (rec, res) in enumerate(zip(records, fringes)):
        stem = f"record_{k:03d}"
        if res is None:
            skipped.append(stem)
            continue
        results[stem] = res
        curve += _curve_rows(k, rec, res.residuals + rec.frequencies)
        points.append((rec.meta["t_displacement"], res["alpha_mag"], res["phi_offset"],
                       res.stderr("phi_offset"), res.stderr("alpha_mag")))
    pts = np.array(points, dtype=float)
    det = fit_detuning(pts[:, [0, 2]], seq, sigma=pts[:, 3])
    results["detuning"] = det
    # trajectory frame: initial displacement along +Re, angle = half the oscillator phase
    order = np.argsort(pts[:, 0])
    unwrapped = np.empty(len(pts))
    unwrapped[order] = det.diagnostics["unwrapped"]
    t = pts[:, 0]
    angle = (unwrapped - det["phase0"] - det["delta"] * seq.t_wait) / 2
    guess = replace(cfg.drive, delta=abs(det["delta"]))
    traj = fit_trajectory(np.column_stack([t, pts[:, 1], angle]), guess,
                          free=fit.get("free", ["amplitude", "delta_eff"]), sigma=pts[:, 4])
    results["trajectory"] = traj
    fitted = np.asarray(traj.residuals) + pts[:, 1]
    closed = np.abs(np.asarray(alpha_closed(t, cfg.drive)))
    rows = [(ti, m, a, m * math.cos(a), m * math.sin(a), f, ci)
            for ti, m, a, f, ci in zip(t, pts[:, 1], angle, fitted, closed)]
    files = {
        "fit_curve.csv": _csv(CURVE_HEADER, curve),
        "trajectory.csv": _csv(["t", "alpha_mag", "angle", "re", "im", "alpha_fit",
                                "alpha_closed"], rows),
    }
    if skipped:
        det.diagnostics["unidentifiable_records"] = skipped
    return results, files


_FITS = {"contrast": _reconstruct_contrast, "bsb": _reconstruct_bsb,
         "homodyne": _reconstruct_homodyne}


def reconstruct(data_dir, out_dir=None, cfg: ExperimentConfig | None = None,
                threads: int = 1) -> Path:
    """Fit every record of a dataset; the fit section and seed of ``cfg`` override the stored ones."""
    stored, dataset, records = load_dataset(data_dir)
    if cfg is not None:
        data = dict(stored.data)
        data["fit"], data["seed"] = cfg["fit"], cfg.seed
        stored = parse_config(data)
    out = Path(out_dir) if out_dir is not None else Path(data_dir)
    results, files = _FITS[stored.scan_type](stored, records, threads)
    doc = {"format_version": DATASET_VERSION, "scan_type": stored.scan_type,
           "results": {name: r.to_dict() for name, r in results.items()}}
    for name, text in files.items():
        atomic_write(out / name, text)
    atomic_write(out / "fit.json", dumps_json(doc))
    return out
