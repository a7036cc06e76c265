"""Measurement signals synthesized from the branch dynamics.

Three scans are modelled:

* ``contrast`` -- spin-echo fringe contrast versus displacement pulse time.
  The recorded probability is ``P_up = (1 + C(t) e^{-t/tau}) / 2``.
* ``bsb`` -- blue-sideband Rabi flopping after the displacement; records
  ``P_down`` (bright).
* ``homodyne`` -- wave-packet beat signal versus relative drive phase;
  records ``P_up`` (dark).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import MODELS, DriveParams, alpha_closed, branch_overlaps
from .errors import TruncationError
from .fock import PhononDistribution, displaced_fock_overlap, laguerre
from .records import MeasurementRecord

__all__ = [
    "SequenceParams",
    "bsb_rabi_frequencies",
    "bsb_signal",
    "contrast_ground",
    "contrast_readout",
    "contrast_thermal",
    "homodyne_signal",
    "oscillator_phase",
    "sample_record",
    "thermal_overlap_kernels",
]

RABI_MODELS = ("ld", "exact")
THERMAL_MODELS = ("n_independent",) + MODELS


@dataclass(frozen=True)
class SequenceParams:
    """Timing and readout parameters of a pulse sequence.

    Parameters
    ----------
    t_wait : float
        Idle time between the displacement pulses (s).
    delta_phi : float
        Phase difference of the two displacement drives (rad).
    tau : float
        Decoherence time of the exponential envelope (s).
    fringe_amplitude : float
        Amplitude ``a`` of the sideband flopping, in ``[0, 1]``.
    omega_0 : float
        Carrier Rabi frequency (rad/s).
    """

    t_wait: float = 0.0
    delta_phi: float = 0.0
    tau: float = math.inf
    fringe_amplitude: float = 1.0
    omega_0: float = 2 * math.pi * 100e3

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not 0 <= self.fringe_amplitude <= 1:
            raise ValueError("fringe_amplitude must lie in [0, 1]")


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def contrast_ground(t, drive: DriveParams):
    """Fringe contrast ``exp(-2 |alpha(t)|^2)`` for a ground-state input."""
    alpha = np.abs(alpha_closed(t, drive))
    return _scalar(np.exp(-2 * alpha**2))


def thermal_overlap_kernels(t, drive: DriveParams, n_list, model: str = "rwa_n_dependent",
                            n_max: int | None = None) -> np.ndarray:
    """Per-Fock-state contrast kernels, shape ``(len(t), len(n_list))``.

    ``n_independent`` uses the analytic displaced-Fock element with
    ``beta = 2 alpha_0(t)`` for every ``n``; the ``closed`` model is the same
    closed form.  The numeric models return the modulus of the overlap of
    the two evolved spin branches.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    n_list = np.asarray(n_list, dtype=int)
    if model in ("n_independent", "closed"):
        beta = 2 * np.abs(alpha_closed(t, drive))
        return np.abs(np.column_stack([displaced_fock_overlap(int(n), beta) for n in n_list]))
    if model not in THERMAL_MODELS:
        raise ValueError(f"unknown contrast model {model!r}")
    order = np.argsort(t)
    if np.any(t < 0):
        raise ValueError("times must be nonnegative")
    ts, inverse = np.unique(t[order], return_inverse=True)
    out = np.abs(branch_overlaps(n_list, drive, ts, model, n_max=n_max))
    full = np.empty((t.size, n_list.size))
    full[order] = out[inverse]
    return full


def contrast_thermal(t, drive: DriveParams, dist: PhononDistribution,
                     model: str = "rwa_n_dependent", n_max: int | None = None,
                     tol: float = 1e-14):
    """Thermally averaged contrast ``sum_n p_n K_n(t)``.

    Fock inputs with ``p_n <= tol`` are skipped.  See
    :func:`thermal_overlap_kernels` for the per-``n`` kernel of each model.
    """
    if dist.deficit >= 1e-4:
        raise TruncationError(f"distribution truncation deficit {dist.deficit:.2e} >= 1e-4")
    n_list = dist.support(tol)
    kernels = thermal_overlap_kernels(t, drive, n_list, model, n_max=n_max)
    out = np.clip(kernels @ dist.p[n_list], 0.0, 1.0)
    return out if np.ndim(t) else float(out[0])


def contrast_readout(contrast, t, tau: float = math.inf):
    """Dark-state probability of a contrast scan, ``(1 + C e^{-t/tau}) / 2``."""
    decay = np.exp(-np.asarray(t, dtype=float) / tau) if math.isfinite(tau) else 1.0
    return _scalar(0.5 * (1 + np.asarray(contrast) * decay))


def bsb_rabi_frequencies(n_max: int, eta: float, omega_0: float, rabi_model: str = "ld"):
    """Sideband Rabi frequencies ``Omega_{n,n+1}`` for ``n = 0..n_max``."""
    n = np.arange(n_max + 1)
    if rabi_model == "ld":
        return eta * np.sqrt(n + 1) * omega_0
    if rabi_model == "exact":
        lag = np.array([laguerre(int(k), 1, eta**2) for k in n])
        return np.abs(omega_0 * eta * math.exp(-eta**2 / 2) * lag / np.sqrt(n + 1))
    raise ValueError(f"unknown rabi_model {rabi_model!r}; expected one of {RABI_MODELS}")


def bsb_signal(t_p, dist: PhononDistribution, seq: SequenceParams, eta: float,
               rabi_model: str = "ld"):
    """Bright-state probability after a blue-sideband probe of length ``t_p``.

    ``P_down = sum_n p_n / 2 (a e^{-t_p/tau} cos(Omega_{n,n+1} t_p) + 1)``.
    """
    t = np.asarray(t_p, dtype=float)
    rabi = bsb_rabi_frequencies(dist.n_max, eta, seq.omega_0, rabi_model)
    decay = np.exp(-t / seq.tau) if math.isfinite(seq.tau) else np.ones_like(t)
    osc = np.cos(np.multiply.outer(t, rabi))
    terms = 0.5 * (seq.fringe_amplitude * decay[..., None] * osc + 1.0)
    out = np.clip(terms @ dist.p, 0.0, 1.0)
    return _scalar(out)


def oscillator_phase(t, delta: float, seq: SequenceParams):
    """Oscillator phase ``delta_phi + delta (t + t_wait)`` of the homodyne sequence."""
    return _scalar(seq.delta_phi + delta * (np.asarray(t, dtype=float) + seq.t_wait))


def homodyne_signal(t, alpha_mag, phi, seq: SequenceParams):
    """Dark-state probability of the wave-packet beat signal.

    ``P_up = (1 - exp(-|a|^2 (1 - cos phi) - t/tau) cos(|a|^2 sin phi)) / 2``
    where ``phi`` is the total oscillator phase (see :func:`oscillator_phase`).
    """
    alpha_mag = np.asarray(alpha_mag, dtype=float)
    if np.any(alpha_mag < 0):
        raise ValueError("alpha_mag must be nonnegative")
    r2 = alpha_mag**2
    phi = np.asarray(phi, dtype=float)
    t = np.asarray(t, dtype=float)
    decay = t / seq.tau if math.isfinite(seq.tau) else 0.0 * t
    env = np.exp(-r2 * (1 - np.cos(phi)) - decay)
    return _scalar(np.clip(0.5 * (1 - env * np.cos(r2 * np.sin(phi))), 0.0, 1.0))


def _stream(*key) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(tuple(int(k) for k in key))))


def sample_record(curve, controls, shots: int = 200, seed: int = 0,
                  scan_type: str = "contrast", meta: dict | None = None,
                  stream: int | None = None) -> MeasurementRecord:
    """Draw binomial success counts for each control point.

    ``curve`` maps an array of controls to success probabilities (or is an
    array of probabilities).  Point ``i`` uses its own Philox stream keyed
    by ``(seed, i)``, or ``(seed, stream, i)`` when several records share a
    seed, so the record is reproducible and independent of the order in
    which points are evaluated.
    """
    controls = np.asarray(controls, dtype=float)
    probs = np.asarray(curve(controls) if callable(curve) else curve, dtype=float)
    if probs.shape != controls.shape:
        raise ValueError("curve must return one probability per control")
    if np.any((probs < 0) | (probs > 1)) or np.any(~np.isfinite(probs)):
        raise ValueError("probabilities must lie in [0, 1]")
    shots_arr = np.broadcast_to(np.asarray(shots, dtype=int), controls.shape)
    if np.any(shots_arr < 0):
        raise ValueError("shots must be nonnegative")
    prefix = (seed,) if stream is None else (seed, stream)
    successes = np.array([_stream(*prefix, i).binomial(int(n), float(q))
                          for i, (n, q) in enumerate(zip(shots_arr, probs))], dtype=int)
    return MeasurementRecord(controls, shots_arr.copy(), successes, scan_type, dict(meta or {}))
