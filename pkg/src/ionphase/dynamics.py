"""Spin-dependent displacement of one motional branch.

Three descriptions of the same drive are provided, in increasing fidelity:

``closed``
    Lamb-Dicke closed form; the branch is the initial state displaced by
    ``alpha(t) = -s (eta Delta_S / 2 delta) e^{i phase} e^{i delta t/2} sin(delta t/2)``.
``rwa_n_dependent``
    Resonant sideband coupling ``|n> <-> |n+1>`` with the exact matrix
    element ``<n+1| sin(eta (a + a^+)) |n>``.  In the frame rotating at the
    detuning the Hamiltonian is time independent, so the evolution is
    solved exactly by one eigendecomposition.
``full_wave``
    The complete travelling-wave light shift
    ``-s (Delta_S/2) cos(eta (a e^{-i w t} + a^+ e^{i w t}) - (w - delta) t + phase)``
    in the oscillator interaction picture, integrated with a fourth-order
    Magnus propagator (two Gauss points per step, exact exponential).

All times are seconds and all frequencies angular (rad/s).
"""

from __future__ import annotations

import math
import warnings
from collections.abc import Mapping
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateDetuning, StepSizeError, TruncationError
from .fock import MotionalState, displacement_oracle, fock_state, position_functions

__all__ = [
    "MODELS",
    "AlphaFamily",
    "BranchTrajectory",
    "DriveParams",
    "alpha_closed",
    "alpha_n_family",
    "branch_overlaps",
    "evolve_branch",
    "extract_alpha",
    "sideband_elements",
]

MODELS = ("closed", "rwa_n_dependent", "full_wave")

TOP_POPULATION_LIMIT = 1e-6
STEP_TOLERANCE = 1e-6
# full_wave steps per trap period
STEPS_PER_PERIOD = 64


@dataclass(frozen=True)
class DriveParams:
    """Spin-dependent light-force drive.

    Parameters
    ----------
    delta_S : float
        Differential ac-Stark shift (rad/s).
    delta : float
        Detuning of the beat note from the trap frequency (rad/s).
    eta : float
        Lamb-Dicke factor.
    omega_ax : float
        Axial trap frequency (rad/s).  Only the ``full_wave`` model uses it.
    phase : float
        Optical beat phase of the drive (rad).
    spin_sign : {+1, -1}
        Sign of the force on the branch being evolved.
    tau : float
        Empirical decoherence time (s); used by the observables only.
    """

    delta_S: float
    delta: float
    eta: float
    omega_ax: float = 2 * math.pi * 1.35e6
    phase: float = 0.0
    spin_sign: int = 1
    tau: float = math.inf

    def __post_init__(self):
        if self.spin_sign not in (1, -1):
            raise ValueError("spin_sign must be +1 or -1")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not 0 <= self.eta < 1:
            raise ValueError("eta must lie in [0, 1)")
        if not self.omega_ax > 0:
            raise ValueError("omega_ax must be positive")

    @property
    def amplitude(self) -> float:
        """Maximum closed-form excursion ``eta Delta_S / (2 |delta|)``."""
        if self.delta == 0:
            return math.inf
        return abs(self.eta * self.delta_S / (2 * self.delta))

    def flipped(self) -> "DriveParams":
        """The same drive acting on the opposite spin component."""
        return replace(self, spin_sign=-self.spin_sign)


@dataclass(frozen=True)
class BranchTrajectory:
    times: np.ndarray
    alpha: np.ndarray
    model_tag: str
    states: tuple[MotionalState, ...] | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        alpha = np.asarray(self.alpha, dtype=complex)
        if times.shape != alpha.shape:
            raise ValueError("times and alpha must have equal length")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.model_tag not in MODELS:
            raise ValueError(f"unknown model {self.model_tag!r}")
        times.setflags(write=False)
        alpha.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "alpha", alpha)

    @property
    def final_state(self) -> MotionalState | None:
        return None if self.states is None else self.states[-1]


def alpha_closed(t, drive: DriveParams):
    """Closed-form Lamb-Dicke displacement of the branch at time(s) ``t``.

    For ``delta == 0`` a :class:`DegenerateDetuning` warning is issued and
    the resonant limit ``-s eta Delta_S t / 4`` (times the drive phase) is
    returned.
    """
    t = np.asarray(t, dtype=float)
    pref = -drive.spin_sign * np.exp(1j * drive.phase)
    if drive.delta == 0:
        warnings.warn("delta = 0: using the resonant limit of the displacement",
                      DegenerateDetuning, stacklevel=2)
        out = pref * drive.eta * drive.delta_S * t / 4
    else:
        half = drive.delta * t / 2
        out = pref * drive.eta * drive.delta_S / (2 * drive.delta) * np.exp(1j * half) * np.sin(half)
    return out if out.ndim else complex(out)


def extract_alpha(state) -> complex:
    """Phase-space centre ``<a>`` of a state (``MotionalState`` or amplitude array)."""
    c = state.amplitudes if isinstance(state, MotionalState) else np.asarray(state)
    root = np.sqrt(np.arange(1, c.shape[0]))
    return complex(np.sum(root * np.conj(c[:-1]) * c[1:], axis=0)) if c.ndim == 1 else \
        np.sum(root[:, None] * np.conj(c[:-1]) * c[1:], axis=0)


def sideband_elements(eta: float, n_max: int) -> np.ndarray:
    """``M[n] = <n+1| sin(eta (a + a^+)) |n>`` for ``n = 0..n_max-1``."""
    _, sin = position_functions(eta, n_max)
    return np.diag(sin, -1).copy()


def _basis_size(n_top: int, drive: DriveParams, t_final: float) -> int:
    """Truncation used when the caller does not fix one."""
    amp = drive.amplitude
    if not math.isfinite(amp):
        amp = abs(drive.eta * drive.delta_S * t_final / 4)
    margin = max(32, math.ceil(8 * (1 + amp**2)), math.ceil(6 * amp * math.sqrt(n_top + 1)))
    return n_top + margin


def _as_times(times, t_final):
    if times is None:
        times = np.linspace(0.0, t_final, 101)
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a non-empty 1-d array")
    if times[0] < 0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be nonnegative and strictly increasing")
    return times


def _check_top(psi: np.ndarray, t: float) -> None:
    top = np.max(np.abs(psi[-1]) ** 2)
    if top > TOP_POPULATION_LIMIT:
        raise TruncationError(f"top-of-basis population {top:.2e} at t={t:.3e} s")


class _RWAPropagator:
    """Exact propagator of the n-dependent sideband model.

    ``U(t) = exp(i delta t N) exp(-i H' t)`` with the time-independent
    rotating-frame Hamiltonian ``H' = H_c + delta N``.
    """

    def __init__(self, drive: DriveParams, n_max: int):
        dim = n_max + 1
        self.n = np.arange(dim)
        self.delta = drive.delta
        m = sideband_elements(drive.eta, n_max) if drive.eta > 0 else np.zeros(n_max)
        coupling = -drive.spin_sign * drive.delta_S / 4 * 1j * np.exp(1j * drive.phase) * m
        h = np.diag(self.delta * self.n.astype(float)).astype(complex)
        h[self.n[1:], self.n[:-1]] = coupling
        h[self.n[:-1], self.n[1:]] = np.conj(coupling)
        self.w, self.v = np.linalg.eigh(h)

    def apply(self, t: float, psi0: np.ndarray) -> np.ndarray:
        coeff = self.v.conj().T @ psi0
        out = self.v @ (np.exp(-1j * self.w * t)[:, None] * coeff) if psi0.ndim == 2 else \
            self.v @ (np.exp(-1j * self.w * t) * coeff)
        phase = np.exp(1j * self.delta * t * self.n)
        return phase[:, None] * out if out.ndim == 2 else phase * out


class _FullWaveHamiltonian:
    def __init__(self, drive: DriveParams, n_max: int):
        self.cos, self.sin = position_functions(drive.eta, n_max)
        self.n = np.arange(n_max + 1)
        self.drive = drive
        self.scale = -drive.spin_sign * drive.delta_S / 2

    def __call__(self, t: float) -> np.ndarray:
        d = self.drive
        c = -(d.omega_ax - d.delta) * t + d.phase
        rot = np.exp(1j * d.omega_ax * t * self.n)
        core = math.cos(c) * self.cos - math.sin(c) * self.sin
        return self.scale * (rot[:, None] * core * np.conj(rot)[None, :])


_GAUSS = math.sqrt(3) / 6


def _magnus_step(ham: _FullWaveHamiltonian, t0: float, dt: float, psi: np.ndarray) -> np.ndarray:
    h1 = ham(t0 + (0.5 - _GAUSS) * dt)
    h2 = ham(t0 + (0.5 + _GAUSS) * dt)
    gen = dt / 2 * (h1 + h2) - 1j * math.sqrt(3) / 12 * dt**2 * (h2 @ h1 - h1 @ h2)
    w, v = np.linalg.eigh(gen)
    return v @ (np.exp(-1j * w)[:, None] * (v.conj().T @ psi)) if psi.ndim == 2 else \
        v @ (np.exp(-1j * w) * (v.conj().T @ psi))


def _default_dt(drive: DriveParams) -> float:
    return 2 * math.pi / drive.omega_ax / STEPS_PER_PERIOD


def _full_wave_states(drive, n_max, times, psi0, dt, check_top=True):
    ham = _FullWaveHamiltonian(drive, n_max)
    out = []
    psi = psi0.copy()
    t = 0.0
    for target in times:
        span = target - t
        if span > 0:
            steps = max(1, math.ceil(span / dt - 1e-9))
            h = span / steps
            for k in range(steps):
                psi = _magnus_step(ham, t + k * h, h, psi)
                if check_top:
                    _check_top(psi, t + (k + 1) * h)
        t = target
        out.append(psi.copy())
    return out


def _propagate(model, drive, n_max, times, psi0, dt):
    """States at ``times`` for initial amplitude vector(s) ``psi0``."""
    if drive.delta_S == 0:
        return [psi0.copy() for _ in times]
    if model == "closed":
        alphas = alpha_closed(times, drive) if drive.delta != 0 else _resonant(times, drive)
        return [displacement_oracle(a, n_max) @ psi0 for a in np.atleast_1d(alphas)]
    if model == "rwa_n_dependent":
        prop = _RWAPropagator(drive, n_max)
        states = [prop.apply(t, psi0) for t in times]
        for t, psi in zip(times, states):
            _check_top(psi, t)
        return states
    if model == "full_wave":
        return _full_wave_states(drive, n_max, times, psi0, dt)
    raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")


def _resonant(times, drive):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateDetuning)
        return alpha_closed(times, drive)


def evolve_branch(initial: MotionalState, drive: DriveParams, t_final: float,
                  model: str = "rwa_n_dependent", dt: float | None = None, times=None,
                  n_max: int | None = None, check_steps: bool = False) -> BranchTrajectory:
    """Evolve one spin branch under the displacement drive.

    Parameters
    ----------
    initial : MotionalState
        Normalized initial motional state.
    drive : DriveParams
    t_final : float
        Duration of the drive pulse (s).
    model : {'closed', 'rwa_n_dependent', 'full_wave'}
    dt : float, optional
        Integration step for ``full_wave``; defaults to a 64th of the trap
        period.  Ignored by the other models, which are solved exactly.
    times : array_like, optional
        Output times in ``[0, t_final]``; 101 uniform points by default.
    n_max : int, optional
        Basis truncation; the initial state is zero-padded to it.
    check_steps : bool
        Re-run with ``dt/2`` and raise :class:`StepSizeError` if the final
        state moves by more than ``1e-6``.

    Returns
    -------
    BranchTrajectory
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")
    times = _as_times(times, t_final)
    if abs(initial.norm() - 1) > 1e-8:
        raise ValueError("initial state must be normalized")
    if n_max is not None:
        initial = initial.padded(n_max)
    dim_max = initial.n_max
    if dt is None:
        dt = _default_dt(drive)
    elif model == "full_wave" and dt > _default_dt(drive) * (1 + 1e-12):
        warnings.warn(f"dt={dt:.3e} s exceeds a 64th of the trap period", stacklevel=2)

    psi0 = np.asarray(initial.amplitudes)
    states = _propagate(model, drive, dim_max, times, psi0, dt)
    if check_steps and model == "full_wave" and drive.delta_S != 0:
        fine = _propagate(model, drive, dim_max, times, psi0, dt / 2)
        err = np.linalg.norm(states[-1] - fine[-1])
        if err > STEP_TOLERANCE:
            raise StepSizeError(f"halving dt moved the final state by {err:.2e}")
    alpha = np.array([extract_alpha(s) for s in states])
    return BranchTrajectory(times, alpha, model, tuple(MotionalState(s) for s in states))


class AlphaFamily(Mapping):
    """Displacements ``alpha_n(t)`` of both spin branches, keyed by initial ``n``."""

    def __init__(self, times, plus: dict, minus: dict):
        self.times = np.asarray(times, dtype=float)
        self.plus = plus
        self.minus = minus

    def __getitem__(self, n):
        return self.plus[n].alpha

    def __iter__(self):
        return iter(self.plus)

    def __len__(self):
        return len(self.plus)

    def overlap(self, n) -> np.ndarray:
        """``<psi_n^-(t)|psi_n^+(t)>`` at every output time."""
        p, m = self.plus[n].states, self.minus[n].states
        return np.array([np.vdot(b.amplitudes, a.amplitudes) for a, b in zip(p, m)])


def alpha_n_family(n_list, drive: DriveParams, times, model: str = "rwa_n_dependent",
                   n_max: int | None = None, dt: float | None = None) -> AlphaFamily:
    """Evolve ``|n>`` for each ``n`` in ``n_list`` under both spin branches."""
    times = _as_times(times, None)
    n_list = [int(n) for n in n_list]
    if n_max is None:
        n_max = _basis_size(max(n_list), drive, float(times[-1]))
    if dt is None:
        dt = _default_dt(drive)
    psi0 = np.zeros((n_max + 1, len(n_list)), dtype=complex)
    psi0[n_list, np.arange(len(n_list))] = 1.0
    plus, minus = {}, {}
    for store, d in ((plus, drive), (minus, drive.flipped())):
        states = _propagate(model, d, n_max, times, psi0, dt)
        for j, n in enumerate(n_list):
            cols = [s[:, j] for s in states]
            store[n] = BranchTrajectory(times, [extract_alpha(c) for c in cols], model,
                                        tuple(MotionalState(c) for c in cols))
    return AlphaFamily(times, plus, minus)


def branch_overlaps(n_list, drive: DriveParams, times, model: str = "rwa_n_dependent",
                    n_max: int | None = None, dt: float | None = None) -> np.ndarray:
    """Overlaps ``<psi_n^-(t)|psi_n^+(t)>`` of the two branches started in ``|n>``.

    Returns an array of shape ``(len(times), len(n_list))``.  States are not
    retained, so this scales to the few hundred Fock inputs of a thermal
    average.
    """
    times = _as_times(times, None)
    n_list = np.asarray(n_list, dtype=int)
    if n_max is None:
        n_max = _basis_size(int(n_list.max()), drive, float(times[-1]))
    if dt is None:
        dt = _default_dt(drive)
    psi0 = np.zeros((n_max + 1, n_list.size), dtype=complex)
    psi0[n_list, np.arange(n_list.size)] = 1.0
    if drive.delta_S == 0:
        return np.ones((times.size, n_list.size), dtype=complex)
    if model == "rwa_n_dependent":
        up, down = _RWAPropagator(drive, n_max), _RWAPropagator(drive.flipped(), n_max)
        out = np.empty((times.size, n_list.size), dtype=complex)
        for i, t in enumerate(times):
            a, b = up.apply(t, psi0), down.apply(t, psi0)
            _check_top(a, t)
            _check_top(b, t)
            out[i] = np.sum(np.conj(b) * a, axis=0)
        return out
    up = _propagate(model, drive, n_max, times, psi0, dt)
    down = _propagate(model, drive.flipped(), n_max, times, psi0, dt)
    return np.array([np.sum(np.conj(b) * a, axis=0) for a, b in zip(up, down)])


def fock_branch(n: int, drive: DriveParams, t_final: float, model: str = "rwa_n_dependent",
                **kwargs) -> BranchTrajectory:
    """Convenience wrapper: evolve the Fock state ``|n>`` in a default basis."""
    n_max = kwargs.pop("n_max", None) or _basis_size(n, drive, t_final)
    return evolve_branch(fock_state(n, n_max), drive, t_final, model, **kwargs)
