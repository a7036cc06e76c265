"""Least-squares fits of spin-echo contrast scans."""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
from scipy.optimize import least_squares
from scipy.special import xlogy

from ..dynamics import DriveParams
from ..errors import NonConvergence, PreconditionError
from ..observables import contrast_ground, thermal_overlap_kernels
from ..records import MeasurementRecord
from .phase_space import _cov, _flat, binomial_sigma
from .result import FitResult

__all__ = ["CONTRAST_MODELS", "CONTRAST_FREE", "fit_contrast_curve"]

CONTRAST_MODELS = ("ground", "n_independent", "closed", "rwa_n_dependent", "full_wave")
CONTRAST_FREE = ("delta_S", "delta", "tau", "nbar")
# thermal mass left out of the kernel sum at the largest admissible nbar
THERMAL_DEFICIT = 1e-4
# multi-start factors on the detuning guess
DELTA_STARTS = (0.7, 0.85, 1.0, 1.15, 1.3)
NBAR_GRID = 36


def deviance_residuals(p, y, shots) -> np.ndarray:
    """Signed binomial deviance residuals; their squared sum is twice the NLL excess.

    Least squares on these is the binomial maximum-likelihood fit.  Weighting
    plain residuals by the observed variance instead biases smooth parameters.
    """
    p = np.clip(p, 1e-12, 1 - 1e-12)
    dev = 2 * shots * (xlogy(y, y / p) + xlogy(1 - y, (1 - y) / (1 - p)))
    return np.sign(p - y) * np.sqrt(np.clip(dev, 0.0, None))


def _thermal_cutoff(nbar_hi: float) -> int:
    if nbar_hi <= 0:
        return 1
    return int(math.ceil(math.log(THERMAL_DEFICIT) / math.log(nbar_hi / (1 + nbar_hi))))


def _thermal_weights(nbar: float, size: int) -> np.ndarray:
    n = np.arange(size)
    if nbar <= 0:
        return (n == 0).astype(float)
    return np.exp(n * math.log(nbar / (1 + nbar)) - math.log1p(nbar))


class _ContrastModel:
    """Readout probability as a function of the packed free parameters."""

    def __init__(self, t, model, free, drive, nbar, tau, nbar_hi, n_max):
        self.t, self.model, self.free = t, model, free
        self.drive, self.nbar, self.tau = drive, nbar, tau
        self.size = _thermal_cutoff(nbar_hi)
        self.n_max = n_max
        self._cache: dict = {}

    def unpack(self, x):
        vals = dict(zip(self.free, x))
        drive = replace(self.drive,
                        delta_S=math.exp(vals["delta_S"]) if "delta_S" in vals else self.drive.delta_S,
                        delta=math.exp(vals["delta"]) if "delta" in vals else self.drive.delta)
        gamma = vals["tau"] if "tau" in vals else (0.0 if math.isinf(self.tau) else 1 / self.tau)
        nbar = vals.get("nbar", self.nbar)
        return drive, gamma, nbar

    def contrast(self, drive, nbar):
        if self.model == "ground":
            return np.asarray(contrast_ground(self.t, drive))
        key = (drive.delta_S, drive.delta)
        kernels = self._cache.get(key)
        if kernels is None:
            kernels = thermal_overlap_kernels(self.t, drive, np.arange(self.size),
                                              self.model, n_max=self.n_max)
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = kernels
        return kernels @ _thermal_weights(nbar, self.size)

    def __call__(self, x):
        drive, gamma, nbar = self.unpack(x)
        return 0.5 * (1 + self.contrast(drive, nbar) * np.exp(-gamma * self.t))


def fit_contrast_curve(record: MeasurementRecord, model: str = "ground",
                       free=("delta_S", "delta", "tau"), drive_guess: DriveParams | None = None,
                       nbar: float = 0.0, tau: float = math.inf, n_max: int | None = None) -> FitResult:
    """Fit a contrast scan ``P_up(t) = (1 + C(t) exp(-t/tau)) / 2``.

    ``model`` selects ``C``: ``ground`` is the closed-form ground-state
    contrast, the others are thermal averages with the kernel of that name
    (see :func:`~ionphase.observables.thermal_overlap_kernels`).  Parameters
    outside ``free`` are held at ``drive_guess``, ``nbar`` and ``tau``; the
    free ones start there.  Refitting a thermal scan with ``free={'nbar'}``
    and the drive of a ground-state fit reuses one kernel table throughout.
    The fit maximizes the binomial likelihood; ``chi2`` holds the deviance.
    """
    if record.scan_type != "contrast":
        raise PreconditionError(f"expected a contrast record, got {record.scan_type!r}")
    if model not in CONTRAST_MODELS:
        raise ValueError(f"unknown contrast model {model!r}; choose from {CONTRAST_MODELS}")
    requested = set(free)
    free = tuple(p for p in CONTRAST_FREE if p in requested)
    if requested - set(CONTRAST_FREE) or not free:
        raise ValueError(f"free must be a nonempty subset of {CONTRAST_FREE}")
    if model == "ground" and "nbar" in free:
        raise ValueError("the ground model has no nbar")
    if drive_guess is None:
        raise ValueError("drive_guess is required")
    if drive_guess.delta <= 0 or drive_guess.delta_S == 0:
        raise ValueError("drive_guess needs positive delta and nonzero delta_S")
    t = record.control
    if np.any(t < 0):
        raise PreconditionError("contrast times must be nonnegative")
    if np.ptp(t) * drive_guess.delta < 2 * math.pi * 0.9:
        raise PreconditionError("record must span at least one revival")
    y = record.frequencies
    sigma = binomial_sigma(record)
    if _flat(y, sigma):
        raise NonConvergence("contrast record is flat; no revival structure to fit")

    nbar_hi = 3 * nbar + 5 if "nbar" in free else nbar
    fn = _ContrastModel(t, model, free, drive_guess, nbar, tau, nbar_hi, n_max)

    gamma0 = 0.0 if math.isinf(tau) else 1 / tau
    gamma_hi = 10 / max(np.ptp(t), 1e-12)
    start = {"delta_S": math.log(abs(drive_guess.delta_S)), "delta": math.log(drive_guess.delta),
             "tau": min(gamma0, gamma_hi), "nbar": nbar}
    lo = {"delta_S": start["delta_S"] - 3, "delta": start["delta"] - math.log(2),
          "tau": 0.0, "nbar": 0.0}
    hi = {"delta_S": start["delta_S"] + 3, "delta": start["delta"] + math.log(2),
          "tau": gamma_hi, "nbar": nbar_hi}
    bounds = ([lo[p] for p in free], [hi[p] for p in free])

    shots = record.shots.astype(float)

    def resid(x):
        return deviance_residuals(fn(x), y, shots)

    starts = []
    for factor in (DELTA_STARTS if "delta" in free else (1.0,)):
        x0 = dict(start)
        x0["delta"] = start["delta"] + math.log(factor)
        if "delta_S" in free:
            # keep the excursion eta Delta_S / 2 delta at its guessed value
            x0["delta_S"] = start["delta_S"] + math.log(factor)
        x0 = np.clip([x0[p] for p in free], bounds[0], bounds[1])
        if "nbar" in free:
            # the nbar cost is multimodal; seed from a grid (kernels are cached per drive)
            k = free.index("nbar")
            grid = np.linspace(0.0, nbar_hi, NBAR_GRID)
            costs = []
            for v in grid:
                x0[k] = v
                r = resid(x0)
                costs.append(r @ r)
            x0[k] = grid[int(np.argmin(costs))]
        starts.append(x0)

    best = None
    for x0 in starts:
        fit = least_squares(resid, x0, bounds=bounds, x_scale="jac",
                            xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=2000)
        if best is None or fit.cost < best.cost:
            best = fit
    if best.status <= 0:
        raise NonConvergence(f"contrast fit failed: {best.message}")

    drive, gamma, nbar_fit = fn.unpack(best.x)
    cov = _cov(best.jac)
    err = dict(zip(free, np.sqrt(np.clip(np.diag(cov), 0, None))))
    params, ci = {}, {}
    for name in free:
        if name in ("delta_S", "delta"):
            value = getattr(drive, name)
            # log-parametrized: the interval is multiplicative
            params[name] = value
            ci[name] = (value * math.exp(-err[name]), value * math.exp(err[name]))
        elif name == "tau":
            params["tau"] = math.inf if gamma == 0 else 1 / gamma
            g_lo, g_hi = max(gamma - err["tau"], 0.0), gamma + err["tau"]
            ci["tau"] = (1 / g_hi if g_hi > 0 else math.inf, math.inf if g_lo == 0 else 1 / g_lo)
        else:
            params["nbar"] = nbar_fit
            ci["nbar"] = (max(nbar_fit - err["nbar"], 0.0), nbar_fit + err["nbar"])
    params["amplitude"] = drive.amplitude
    chi2 = float(best.fun @ best.fun)
    fitted = fn(best.x)
    diagnostics = {
        "model": model,
        "free": list(free),
        "dof": int(y.size - len(free)),
        "drive": {"delta_S": drive.delta_S, "delta": drive.delta, "eta": drive.eta},
        "nbar": nbar_fit,
        "gamma": gamma,
        "at_bound": [p for p, v, a, b in zip(free, best.x, *bounds) if v <= a or v >= b],
        "fitted": fitted.tolist(),
    }
    return FitResult(params=params, ci=ci, kind="contrast", chi2=chi2,
                     residuals=fitted - y, diagnostics=diagnostics)
