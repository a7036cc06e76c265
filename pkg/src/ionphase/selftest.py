"""Built-in oracle and invariant checks, printed as a pass/fail table."""

from __future__ import annotations

import math
import sys
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .dynamics import DriveParams, alpha_closed, fock_branch
from .errors import StepSizeError
from .fock import displaced_fock_overlap, displacement_oracle

ORACLE_TOL = 1e-9
UNITARITY_TOL = 1e-8
LD_TOL = 0.01


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    detail: str


def oracle_suite(n_top: int = 20, points: int = 64, beta_max: float = 4.0, n_max: int = 128):
    """Analytic diagonal displaced-Fock elements against the matrix oracle."""
    worst = 0.0
    for b in np.linspace(0.0, beta_max, points):
        beta = b * np.exp(0.37j * b)
        u = displacement_oracle(beta, n_max, block=n_top + 1)
        diag = np.diagonal(u)[: n_top + 1]
        exact = np.array([displaced_fock_overlap(n, beta) for n in range(n_top + 1)])
        worst = max(worst, float(np.max(np.abs(diag - exact))))
    return [Check("oracle", f"<n|D|n>, n<={n_top}, |beta|<={beta_max}", worst <= ORACLE_TOL,
                  f"max err {worst:.2e}")]


def _probe_drive(eta: float) -> DriveParams:
    # slow drive: counter-rotating corrections scale with delta / omega_ax
    delta = 2 * math.pi * 5.237e3
    amp = 0.5
    delta_S = 2 * amp * delta / eta if eta > 0 else 2 * math.pi * 100e3
    return DriveParams(delta_S=delta_S, delta=delta, eta=eta)


def unitarity_suite(eta: float = 0.05):
    drive = _probe_drive(max(eta, 0.05))
    t_final = math.pi / drive.delta
    out = []
    for model in ("rwa_n_dependent", "full_wave"):
        for n in (0, 3):
            tr = fock_branch(n, drive, t_final, model, times=np.linspace(0, t_final, 9))
            dev = max(abs(s.norm() - 1) for s in tr.states)
            out.append(Check("unitarity", f"{model}, |{n}>", dev <= UNITARITY_TOL,
                             f"norm dev {dev:.1e}"))
    return out


def ld_suite(eta: float = 0.05):
    """Numeric models agree with the closed form in the Lamb-Dicke limit."""
    drive = _probe_drive(eta)
    t_final = math.pi / drive.delta
    times = np.linspace(0, t_final, 9)
    ref = np.asarray(alpha_closed(times, drive))
    scale = max(drive.amplitude, 1e-12)
    out = []
    for model in ("rwa_n_dependent", "full_wave"):
        tr = fock_branch(0, drive, t_final, model, times=times)
        err = float(np.max(np.abs(tr.alpha - ref)))
        out.append(Check("lamb-dicke", f"{model}, eta={eta:g}", err <= LD_TOL * scale + 1e-12,
                         f"max |dalpha| {err:.2e} (amplitude {drive.amplitude:.3g})"))
    return out


def step_suite(dt: float | None = None):
    """Halving the full-wave step leaves the final state unchanged."""
    drive = _probe_drive(0.05)
    t_final = 20e-6
    label = "default dt" if dt is None else f"dt={dt:.3g} s"
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fock_branch(0, drive, t_final, "full_wave", times=[0.0, t_final], dt=dt,
                        check_steps=True)
    except StepSizeError as exc:
        return [Check("step", label, False, str(exc))]
    return [Check("step", label, True, "halved step agrees")]


def run_selftest(eta: float | None = None, dt: float | None = None, stream=None) -> bool:
    """Run every suite, print a table to ``stream``; True iff all checks pass."""
    stream = stream or sys.stdout
    eta = 0.05 if eta is None else eta
    checks = []
    start = time.perf_counter()
    for suite in (oracle_suite, lambda: unitarity_suite(eta), lambda: ld_suite(eta),
                  lambda: step_suite(dt)):
        checks.extend(suite())
    width = max(len(c.name) for c in checks)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.suite:<10} {c.name:<{width}}  {c.detail}",
              file=stream)
    ok = all(c.passed for c in checks)
    print(f"{sum(c.passed for c in checks)}/{len(checks)} checks passed "
          f"in {time.perf_counter() - start:.1f} s", file=stream)
    return ok
