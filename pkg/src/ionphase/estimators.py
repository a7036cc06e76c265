"""scikit-learn style wrappers around the reconstruction routines.

Each estimator takes the scan control as ``X`` (one column) and the success
counts as ``y``; ``shots`` is a constructor parameter or a per-point array
passed to ``fit``.  After fitting, ``result_`` holds the
:class:`~ionphase.reconstruct.FitResult` and ``predict`` evaluates the
fitted signal at new controls.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .dynamics import DriveParams
from .fock import PhononDistribution
from .ga import GAConfig
from .observables import SequenceParams, bsb_signal, homodyne_signal
from .reconstruct import (fit_coherent, fit_contrast_curve, fit_detuning, fit_homodyne_fringe,
                          fit_trajectory, reconstruct_phonons)
from .reconstruct.contrast import _ContrastModel, _thermal_cutoff
from .reconstruct.phonons import _poisson
from .records import MeasurementRecord

__all__ = [
    "CoherentStateFitter",
    "ContrastCurveFitter",
    "DetuningEstimator",
    "HomodyneFringeFitter",
    "PhononReconstructor",
    "TrajectoryFitter",
]


def _column(X) -> np.ndarray:
    X = check_array(X, ensure_2d=False, dtype=float)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"expected a single control column, got {X.shape[1]}")
        X = X[:, 0]
    return X


def _as_record(X, y, shots, scan_type, meta=None) -> MeasurementRecord:
    control = _column(X)
    y = check_array(y, ensure_2d=False, dtype=float)
    check_consistent_length(control, y)
    shots = np.broadcast_to(np.asarray(shots), control.shape)
    return MeasurementRecord(control, shots, y, scan_type, dict(meta or {}))


class _CountsEstimator(BaseEstimator):
    """Shared ``fit`` plumbing for estimators that consume success counts."""

    scan_type = "contrast"

    def fit(self, X, y, shots=None):
        record = _as_record(X, y, self.shots if shots is None else shots, self.scan_type)
        self._fit_record(record)
        self.n_features_in_ = 1
        return self

    def fit_record(self, record: MeasurementRecord):
        self._fit_record(record)
        self.n_features_in_ = 1
        return self


class PhononReconstructor(_CountsEstimator):
    """Genetic maximum-likelihood phonon distribution from a sideband scan."""

    scan_type = "bsb"

    def __init__(self, eta=0.25, omega_0=None, omega_0_bounds=None, expected_alpha=None,
                 rabi_model="ld", shots=200, ga=None, threads=1):
        self.eta = eta
        self.omega_0 = omega_0
        self.omega_0_bounds = omega_0_bounds
        self.expected_alpha = expected_alpha
        self.rabi_model = rabi_model
        self.shots = shots
        self.ga = ga
        self.threads = threads

    def _fit_record(self, record):
        self.distribution_, self.result_ = reconstruct_phonons(
            record, self.ga or GAConfig(), eta=self.eta, omega_0=self.omega_0,
            omega_0_bounds=self.omega_0_bounds, expected_alpha=self.expected_alpha,
            rabi_model=self.rabi_model, threads=self.threads)
        self.p_ = self.distribution_.p

    def predict(self, X):
        check_is_fitted(self, "result_")
        r = self.result_.params
        seq = SequenceParams(tau=r["tau"], fringe_amplitude=r["fringe_amplitude"],
                             omega_0=r["omega_0"])
        return np.asarray(bsb_signal(_column(X), self.distribution_, seq, self.eta,
                                     self.rabi_model))


class CoherentStateFitter(BaseEstimator):
    """Poissonian fit to a phonon distribution; ``X`` is the vector ``p_n``."""

    def __init__(self, sigma=0.02, level=0.99):
        self.sigma = sigma
        self.level = level

    def fit(self, X, y=None):
        p = _column(X)
        self.result_ = fit_coherent(PhononDistribution(p), self.sigma, self.level)
        self.alpha_ = self.result_["alpha_mag"]
        self.poor_fit_ = self.result_.diagnostics["poor_fit"]
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        """Poisson probabilities at the phonon numbers in ``X``."""
        check_is_fitted(self, "result_")
        return _poisson(self.alpha_, _column(X))


class HomodyneFringeFitter(_CountsEstimator):
    """Fringe width and phase from a ``delta_phi`` scan at displacement time ``t``."""

    scan_type = "homodyne"

    def __init__(self, t=0.0, seq=None, fit_tau=True, shots=200):
        self.t = t
        self.seq = seq
        self.fit_tau = fit_tau
        self.shots = shots

    def _fit_record(self, record):
        self.result_ = fit_homodyne_fringe(record, self.t, self.seq or SequenceParams(),
                                           fit_tau=self.fit_tau)
        self.alpha_mag_ = self.result_["alpha_mag"]
        self.phi_offset_ = self.result_["phi_offset"]

    def predict(self, X):
        check_is_fitted(self, "result_")
        decay = self.result_.params.get("decay")
        if decay is None:
            tau = self.result_["tau"]
            decay = math.exp(-self.t / tau) if math.isfinite(tau) else 1.0
        base = homodyne_signal(0.0, self.alpha_mag_, _column(X) + self.phi_offset_, SequenceParams())
        return 0.5 - decay * (0.5 - np.asarray(base))


class DetuningEstimator(BaseEstimator):
    """Linear regression of unwrapped phase on time; ``y`` is the wrapped phase."""

    def __init__(self, seq=None):
        self.seq = seq

    def fit(self, X, y, sigma=None):
        t = _column(X)
        phi = check_array(y, ensure_2d=False, dtype=float)
        check_consistent_length(t, phi)
        self.result_ = fit_detuning(np.column_stack([t, phi]), self.seq, sigma)
        self.delta_ = self.result_["delta"]
        self.stderr_ = self.result_.diagnostics["stderr"]
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        """Unwrapped phase of the fitted line."""
        check_is_fitted(self, "result_")
        t_wait = self.seq.t_wait if self.seq is not None else 0.0
        return self.delta_ * (_column(X) + t_wait) + self.result_["phase0"]


class TrajectoryFitter(BaseEstimator):
    """Effective-detuning fit of ``|alpha(t)|``; ``y`` is ``(|alpha|, phi)`` per row."""

    def __init__(self, drive_guess=None, free=("amplitude", "delta_eff")):
        self.drive_guess = drive_guess
        self.free = free

    def fit(self, X, y, sigma=None):
        t = _column(X)
        y = check_array(y, dtype=float)
        check_consistent_length(t, y)
        if y.shape[1] != 2:
            raise ValueError("y must have columns (|alpha|, phi)")
        if self.drive_guess is None:
            raise ValueError("drive_guess is required")
        self.result_ = fit_trajectory(np.column_stack([t, y]), self.drive_guess, self.free, sigma)
        self.delta_eff_ = self.result_["delta_eff"]
        self.amplitude_ = self.result_["amplitude"]
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        return self.amplitude_ * np.abs(np.sin(self.delta_eff_ * _column(X) / 2))


class ContrastCurveFitter(_CountsEstimator):
    """Contrast-scan fit; see :func:`~ionphase.reconstruct.fit_contrast_curve`."""

    scan_type = "contrast"

    def __init__(self, drive_guess=None, model="ground", free=("delta_S", "delta", "tau"),
                 nbar=0.0, tau=math.inf, n_max=None, shots=200):
        self.drive_guess = drive_guess
        self.model = model
        self.free = free
        self.nbar = nbar
        self.tau = tau
        self.n_max = n_max
        self.shots = shots

    def _fit_record(self, record):
        self.result_ = fit_contrast_curve(record, self.model, self.free, self.drive_guess,
                                          self.nbar, self.tau, self.n_max)
        d = self.result_.diagnostics["drive"]
        self.drive_ = DriveParams(delta_S=d["delta_S"], delta=d["delta"], eta=d["eta"],
                                  omega_ax=self.drive_guess.omega_ax)
        self.nbar_ = self.result_.diagnostics["nbar"]
        self.gamma_ = self.result_.diagnostics["gamma"]

    def predict(self, X):
        check_is_fitted(self, "result_")
        t = _column(X)
        fn = _ContrastModel(t, self.model, (), self.drive_, self.nbar_,
                            math.inf if self.gamma_ == 0 else 1 / self.gamma_,
                            self.nbar_, self.n_max)
        fn.size = max(fn.size, _thermal_cutoff(self.nbar_))
        return fn(np.zeros(0))
