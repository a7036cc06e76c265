"""Phase-space fits: homodyne fringes, detuning, and trajectory shape."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import least_squares

from ..dynamics import DriveParams
from ..errors import NonConvergence, PreconditionError, Unidentifiable, UnwrapAmbiguity
from ..observables import SequenceParams, homodyne_signal
from ..records import MeasurementRecord
from .result import FitResult, symmetric_ci

__all__ = ["fit_detuning", "fit_homodyne_fringe", "fit_trajectory", "unwrap_nearest"]

# below this |alpha| the fringe width and decay are strongly correlated
SMALL_ALPHA = 0.2


def _wrap(phi):
    return (np.asarray(phi) + np.pi) % (2 * np.pi) - np.pi


def binomial_sigma(record: MeasurementRecord) -> np.ndarray:
    """Per-point standard error of the observed frequency (Laplace-smoothed)."""
    q = (record.successes + 1) / (record.shots + 2)
    return np.sqrt(q * (1 - q) / np.maximum(record.shots, 1))


def _flat(y, sigma) -> bool:
    """True when a constant describes the data within statistical noise."""
    w = 1 / sigma**2
    mean = np.sum(w * y) / np.sum(w)
    chi2 = np.sum(w * (y - mean) ** 2)
    dof = y.size - 1
    return bool(chi2 <= dof + 3 * math.sqrt(2 * dof))


def _cov(jac: np.ndarray) -> np.ndarray:
    return np.linalg.pinv(jac.T @ jac)


def fit_homodyne_fringe(record: MeasurementRecord, t: float, seq: SequenceParams,
                        fit_tau: bool = True) -> FitResult:
    """Fit the beat signal versus ``delta_phi`` for one displacement time ``t``.

    The model is ``P_up(delta_phi) = homodyne(t, |alpha|, delta_phi + phi_offset)``
    with the decay factor ``exp(-t/tau)`` as a third parameter (fixed to
    ``seq.tau`` when ``fit_tau`` is False).  ``phi_offset`` is the oscillator
    phase accumulated by the drive; the dark envelope is centred at
    ``delta_phi = -phi_offset``.  Weighted least squares with binomial
    errors; intervals are one standard error.
    """
    if record.scan_type != "homodyne":
        raise PreconditionError(f"expected a homodyne record, got {record.scan_type!r}")
    dphi = record.control
    if np.ptp(dphi) < 2 * np.pi * (1 - 1 / max(len(record), 1)) - 1e-9:
        raise PreconditionError("delta_phi scan must cover a full period")
    y = record.frequencies
    sigma = binomial_sigma(record)
    if _flat(y, sigma):
        raise Unidentifiable("fringe is flat; |alpha| cannot be resolved")

    t = float(t)
    no_decay = SequenceParams(t_wait=seq.t_wait, fringe_amplitude=seq.fringe_amplitude,
                              omega_0=seq.omega_0)
    fixed_decay = math.exp(-t / seq.tau) if math.isfinite(seq.tau) else 1.0
    free_decay = fit_tau and t > 0

    def model(x):
        amp, off, decay = x[0], x[1], (x[2] if free_decay else fixed_decay)
        base = homodyne_signal(0.0, amp, dphi + off, no_decay)
        # rescale the envelope: base = (1 - E cos)/2  ->  (1 - D E cos)/2
        return 0.5 - decay * (0.5 - base)

    def resid(x):
        return (model(x) - y) / sigma

    # coarse grid for the envelope centre and width
    best = None
    for amp in np.linspace(0.1, 3.5, 35):
        for off in np.linspace(-np.pi, np.pi, 72, endpoint=False):
            x = [amp, off] + ([min(1.0, max(0.05, 1 - 2 * y.min()))] if free_decay else [])
            r = resid(np.array(x))
            c = r @ r
            if best is None or c < best[0]:
                best = (c, x)
    x0 = np.array(best[1], dtype=float)
    lo = [0.0, x0[1] - np.pi] + ([0.0] if free_decay else [])
    hi = [10.0, x0[1] + np.pi] + ([1.0] if free_decay else [])
    fit = least_squares(resid, x0, bounds=(lo, hi), xtol=1e-15, ftol=1e-15, gtol=1e-15,
                        max_nfev=5000)
    if not fit.success:
        raise NonConvergence(f"fringe fit failed: {fit.message}")
    amp, off = float(fit.x[0]), float(fit.x[1])
    cov = _cov(fit.jac)
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    r = fit.fun
    chi2 = float(r @ r)
    params = {"alpha_mag": amp, "phi_offset": float(_wrap(off))}
    errors = {"alpha_mag": float(err[0]), "phi_offset": float(err[1])}
    ci = symmetric_ci(params, errors)
    ci["alpha_mag"] = (max(0.0, ci["alpha_mag"][0]), ci["alpha_mag"][1])
    if free_decay:
        decay, d_err = float(fit.x[2]), float(err[2])
        params["decay"] = decay
        ci["decay"] = (max(0.0, decay - d_err), min(1.0, decay + d_err))
        params["tau"] = -t / math.log(decay) if 0 < decay < 1 else (math.inf if decay >= 1 else 0.0)
        d_lo, d_hi = ci["decay"]
        ci["tau"] = (-t / math.log(d_lo) if 0 < d_lo < 1 else (0.0 if d_lo <= 0 else math.inf),
                     -t / math.log(d_hi) if 0 < d_hi < 1 else math.inf)
    else:
        params["tau"] = seq.tau
    diagnostics = {
        "t": t,
        "dof": int(y.size - fit.x.size),
        "alpha_tau_degenerate": amp < SMALL_ALPHA,
        "envelope_center": float(_wrap(-off)),
        "correlation": (cov / np.outer(err, err)).tolist() if np.all(err > 0) else None,
    }
    return FitResult(params=params, ci=ci, kind="homodyne_fringe", chi2=chi2,
                     residuals=model(fit.x) - y, diagnostics=diagnostics)


def unwrap_nearest(phi) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-branch unwrapping from the first point.

    Returns the unwrapped phases and the branch index (multiple of 2 pi)
    added to each point.  Raises :class:`UnwrapAmbiguity` if two adjacent
    points remain a half-turn or more apart.
    """
    phi = np.asarray(phi, dtype=float)
    out = phi.copy()
    branch = np.zeros(phi.size, dtype=int)
    for i in range(1, phi.size):
        k = round((out[i - 1] - phi[i]) / (2 * np.pi))
        branch[i] = k
        out[i] = phi[i] + 2 * np.pi * k
        if abs(out[i] - out[i - 1]) >= np.pi - 1e-12:
            raise UnwrapAmbiguity(
                f"points {i - 1} and {i} differ by {abs(out[i] - out[i - 1]):.3f} rad after unwrapping")
    return out, branch


def fit_detuning(points, seq: SequenceParams | None = None, sigma=None) -> FitResult:
    """Detuning from the linear growth of the oscillator phase.

    ``points`` is an ``(N, 2)`` array of ``(t, phi)``.  Phases are unwrapped
    by nearest-branch continuation, then regressed on ``t``; the slope is the
    detuning (rad/s).  With per-point phase errors ``sigma`` the regression
    is weighted and the covariance taken as known; without them it is
    scaled by the reduced chi-square.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must have shape (N, 2)")
    order = np.argsort(pts[:, 0])
    t, phi = pts[order, 0], pts[order, 1]
    if t.size < 2:
        raise PreconditionError("need at least two points")
    unwrapped, branch = unwrap_nearest(phi)
    if t.size < 5:
        raise PreconditionError(f"need at least 5 points, got {t.size}")
    w = np.ones_like(t) if sigma is None else 1 / np.asarray(sigma, dtype=float)[order] ** 2
    design = np.column_stack([t, np.ones_like(t)])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(design * sw[:, None], unwrapped * sw, rcond=None)
    resid = unwrapped - design @ coef
    dof = t.size - 2
    chi2 = float(np.sum(w * resid**2))
    scale = chi2 / dof if sigma is None else 1.0
    cov = np.linalg.inv((design * w[:, None]).T @ design) * scale
    se = np.sqrt(np.diag(cov))
    slope, intercept = float(coef[0]), float(coef[1])
    t_wait = seq.t_wait if seq is not None else 0.0
    params = {"delta": slope, "phase0": intercept - slope * t_wait}
    ci = {"delta": (slope - se[0], slope + se[0]),
          "phase0": (params["phase0"] - se[1], params["phase0"] + se[1])}
    return FitResult(params=params, ci=ci, kind="detuning", chi2=chi2, residuals=resid,
                     diagnostics={"stderr": float(se[0]), "branches": branch.tolist(),
                                  "n_wraps": int(np.count_nonzero(np.diff(branch))),
                                  "reduced_chi2": chi2 / dof,
                                  "unwrapped": unwrapped.tolist()})


TRAJECTORY_FREE = frozenset({"amplitude", "delta_eff"})
# minimum sweep of delta t / 2 (rad); below it amplitude and delta_eff are inseparable
MIN_SWEEP = 1.0


def fit_trajectory(points, drive_guess: DriveParams, free=("amplitude", "delta_eff"),
                   sigma=None) -> FitResult:
    """Fit ``|alpha(t)| = A |sin(delta_eff t / 2)|`` to a measured trajectory.

    ``points`` is ``(N, 3)``: ``(t, |alpha|, phi)``.  The phase column is
    carried into the reconstructed trajectory but does not enter the fit.
    With ``free={'delta_eff'}`` the amplitude is tied to
    ``eta Delta_S / (2 delta_eff)`` from ``drive_guess``; by default it floats.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("points must have shape (N, 3)")
    free = frozenset(free)
    if "delta_eff" not in free or not free <= TRAJECTORY_FREE:
        raise ValueError(f"free must contain 'delta_eff' and be a subset of {sorted(TRAJECTORY_FREE)}")
    if pts.shape[0] < 8:
        raise PreconditionError(f"need at least 8 points, got {pts.shape[0]}")
    t, mag, phi = pts[:, 0], pts[:, 1], pts[:, 2]
    delta = abs(drive_guess.delta)
    if np.ptp(t) * delta / 2 < MIN_SWEEP:
        raise PreconditionError(
            f"points sweep the sine argument over {np.ptp(t) * delta / 2:.2f} rad; need {MIN_SWEEP}")
    sig = np.ones_like(t) if sigma is None else np.asarray(sigma, dtype=float)
    force = abs(drive_guess.eta * drive_guess.delta_S) / 2
    float_amp = "amplitude" in free

    def model(x, tt):
        d_eff = x[0]
        amp = x[1] if float_amp else force / d_eff
        return amp * np.abs(np.sin(d_eff * tt / 2))

    def resid(x):
        return (model(x, t) - mag) / sig

    best = None
    for factor in np.linspace(0.6, 1.8, 25):
        x = [factor * delta] + ([max(mag.max(), 1e-6)] if float_amp else [])
        fit = least_squares(resid, x, xtol=1e-15, ftol=1e-15, gtol=1e-15,
                            bounds=([0.05 * delta] + ([0.0] if float_amp else []),
                                    [10 * delta] + ([np.inf] if float_amp else [])))
        if best is None or fit.cost < best.cost:
            best = fit
    if not best.success:
        raise NonConvergence(f"trajectory fit failed: {best.message}")
    chi2 = float(best.fun @ best.fun)
    dof = max(1, t.size - best.x.size)
    cov = _cov(best.jac) * (chi2 / dof if sigma is None else 1.0)
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    d_eff = float(best.x[0])
    amp = float(best.x[1]) if float_amp else force / d_eff
    params = {"delta_eff": d_eff, "amplitude": amp, "ratio": d_eff / delta}
    ci = {"delta_eff": (d_eff - err[0], d_eff + err[0]),
          "ratio": ((d_eff - err[0]) / delta, (d_eff + err[0]) / delta)}
    if float_amp:
        ci["amplitude"] = (amp - err[1], amp + err[1])
    fitted = model(best.x, t)
    return FitResult(params=params, ci=ci, kind="trajectory", chi2=chi2,
                     residuals=fitted - mag,
                     diagnostics={"free": sorted(free), "delta": delta,
                                  "trajectory": {"t": t.tolist(),
                                                 "re": (fitted * np.cos(phi)).tolist(),
                                                 "im": (fitted * np.sin(phi)).tolist()}})
