"""Phonon-distribution reconstruction from blue-sideband flopping."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.optimize import least_squares, minimize
from scipy.special import gammaln, softmax
from scipy.stats import chi2 as chi2_dist

from ..errors import DegenerateData, NonConvergence, PreconditionError
from ..fock import PhononDistribution
from ..ga import GAConfig, maximize
from ..observables import bsb_rabi_frequencies
from ..records import MeasurementRecord
from .result import FitResult

__all__ = ["fit_coherent", "reconstruct_phonons", "reconstruction_n_max"]

# GA genes in [0, 1] map to logits in [-LOGIT_SPAN, LOGIT_SPAN]
LOGIT_SPAN = 6.0
# local refinement keeps logits inside this box
LOGIT_BOUND = 40.0
PROB_FLOOR = 1e-12
MIN_POINTS = 20
MIN_SHOTS = 50


def reconstruction_n_max(expected_alpha: float = 0.0) -> int:
    return max(8, 2 + math.ceil(3 * expected_alpha**2))


def _stream(*key) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(tuple(int(k) for k in key))))


class _BSBLikelihood:
    """Binomial likelihood of a sideband record as a function of (p, Omega_0, a, gamma)."""

    def __init__(self, t, shots, successes, n_max, eta, rabi_model, omega_bounds, gamma_max):
        self.t = np.asarray(t, dtype=float)
        self.shots = np.asarray(shots, dtype=float)
        self.successes = np.asarray(successes, dtype=float)
        self.k = n_max + 1
        # Omega_{n,n+1} = omega_0 * ratio[n]
        self.ratio = bsb_rabi_frequencies(n_max, eta, 1.0, rabi_model)
        self.omega_lo, self.omega_hi = omega_bounds
        self.omega_scale = 0.5 * (self.omega_lo + self.omega_hi)
        self.gamma_max = gamma_max
        self.t_scale = max(float(self.t.max()), 1e-300)

    # -- GA encoding -------------------------------------------------------
    def decode(self, genes):
        genes = np.atleast_2d(genes)
        logits = LOGIT_SPAN * (2 * genes[:, : self.k] - 1)
        p = softmax(logits, axis=1)
        omega = self.omega_lo + genes[:, self.k] * (self.omega_hi - self.omega_lo)
        a = genes[:, self.k + 1]
        gamma = genes[:, self.k + 2] * self.gamma_max
        return logits, p, omega, a, gamma

    def fitness(self, genes):
        _, p, omega, a, gamma = self.decode(genes)
        return self.loglik(p, omega, a, gamma)

    # -- model ---------------------------------------------------------------
    def signal(self, p, omega, a, gamma):
        p = np.atleast_2d(p)
        omega, a, gamma = (np.atleast_1d(v)[:, None] for v in (omega, a, gamma))
        phase = omega[:, :, None] * self.ratio[None, :, None] * self.t[None, None, :]
        s = np.einsum("pn,pnt->pt", p, np.cos(phase))
        return 0.5 * (1 + a * np.exp(-gamma * self.t[None, :]) * s)

    def loglik(self, p, omega, a, gamma, successes=None):
        s = self.successes if successes is None else successes
        q = np.clip(self.signal(p, omega, a, gamma), PROB_FLOOR, 1 - PROB_FLOOR)
        return np.sum(s * np.log(q) + (self.shots - s) * np.log1p(-q), axis=1)

    # -- unconstrained vector for local refinement ------------------------------
    def to_x(self, logits, omega, a, gamma):
        return np.concatenate([logits - logits.mean(), [omega / self.omega_scale, a,
                                                        gamma * self.t_scale]])

    def from_x(self, x):
        logits = x[: self.k]
        return logits, softmax(logits), x[self.k] * self.omega_scale, x[self.k + 1], \
            x[self.k + 2] / self.t_scale

    def bounds(self):
        return ([(-LOGIT_BOUND, LOGIT_BOUND)] * self.k
                + [(self.omega_lo / self.omega_scale, self.omega_hi / self.omega_scale),
                   (0.0, 1.0), (0.0, self.gamma_max * self.t_scale)])

    def nll(self, x, successes=None):
        _, p, omega, a, gamma = self.from_x(x)
        return -float(self.loglik(p, omega, a, gamma, successes)[0])

    def nll_grad(self, x, successes=None):
        s = self.successes if successes is None else successes
        _, p, omega, a, gamma = self.from_x(x)
        t, n_ = self.t, self.shots
        phase = np.outer(t, omega * self.ratio)
        c, sn = np.cos(phase), np.sin(phase)
        env = np.exp(-gamma * t)
        mix = c @ p
        q_raw = 0.5 * (1 + a * env * mix)
        q = np.clip(q_raw, PROB_FLOOR, 1 - PROB_FLOOR)
        ll = np.sum(s * np.log(q) + (n_ - s) * np.log1p(-q))
        g = s / q - (n_ - s) / (1 - q)
        g = np.where(q_raw == q, g, 0.0)
        d_logits = 0.5 * a * p * ((g * env) @ (c - mix[:, None]))
        d_omega = -0.5 * a * np.sum(g * env * t * (sn @ (p * self.ratio)))
        d_a = 0.5 * np.sum(g * env * mix)
        d_gamma = -0.5 * a * np.sum(g * t * env * mix)
        grad = np.concatenate([d_logits, [d_omega * self.omega_scale, d_a,
                                          d_gamma / self.t_scale]])
        return -ll, -grad


def _refine(model: _BSBLikelihood, x0, successes=None, ftol=1e-13):
    res = minimize(model.nll_grad, x0, args=(successes,), jac=True, method="L-BFGS-B",
                   bounds=model.bounds(), options={"maxiter": 2000, "ftol": ftol, "gtol": 1e-8})
    return res.x if res.fun <= model.nll(x0, successes) else np.asarray(x0)


def _percentile_ci(samples: np.ndarray, estimate: float, level: float = 0.68):
    lo, hi = np.quantile(samples, [(1 - level) / 2, (1 + level) / 2])
    # percentile intervals of a skewed bootstrap may miss the estimate; widen to include it
    return min(lo, estimate), max(hi, estimate)


def _stabilized_ci(samples: np.ndarray, estimate: float, forward, inverse, level: float = 0.68):
    """Basic bootstrap interval on a variance-stabilized scale, mapped back."""
    g = forward(samples)
    g_hat = forward(estimate)
    q_lo, q_hi = np.quantile(g, [(1 - level) / 2, (1 + level) / 2])
    lo, hi = inverse(max(2 * g_hat - q_hi, forward(0.0))), inverse(min(2 * g_hat - q_lo, forward(1.0)))
    return min(lo, estimate), max(hi, estimate)


# the spread of the fringe amplitude scales with sqrt(1 - a^2): arcsin stabilizes it
_STABILIZED = {"fringe_amplitude": (np.arcsin, np.sin)}


def reconstruct_phonons(record: MeasurementRecord, cfg: GAConfig | None = None, *,
                        eta: float | None = None, omega_0: float | None = None,
                        omega_0_bounds: tuple[float, float] | None = None,
                        expected_alpha: float | None = None, rabi_model: str = "ld",
                        strict: bool = True, threads: int = 1):
    """Maximum-likelihood phonon distribution from a blue-sideband record.

    The binomial log-likelihood of the record under the sideband signal is
    maximized over the simplex of ``p_n`` (softmax-encoded genes) together
    with ``Omega_0``, the fringe amplitude ``a`` and the decay rate
    ``1/tau``.  A genetic search is followed by a Nelder-Mead polish and a
    gradient refinement; 68 % intervals come from a parametric bootstrap.

    Parameters
    ----------
    record : MeasurementRecord
        ``bsb`` scan; ``control`` is the probe time in seconds.
    cfg : GAConfig, optional
    eta, omega_0 : float, optional
        Lamb-Dicke factor and nominal carrier Rabi frequency; default to
        ``record.meta`` entries of the same name.  The search spans
        ``omega_0`` +-10 %.  One of ``omega_0`` and ``omega_0_bounds`` is
        required: rescaling ``Omega_0`` by ``1/sqrt(n+1)`` shifts weight between
        Fock levels, so an unanchored search returns aliased distributions.
    omega_0_bounds : (float, float), optional
        Search interval for ``Omega_0``.
    expected_alpha : float, optional
        Sets the default truncation ``2 + ceil(3 |alpha|^2)`` (minimum 8).
    strict : bool
        Raise :class:`NonConvergence` when the GA best likelihood is still
        moving over the last generations; otherwise flag it in the result.

    Returns
    -------
    (PhononDistribution, FitResult)
    """
    cfg = cfg or GAConfig()
    if record.scan_type != "bsb":
        raise PreconditionError(f"expected a bsb record, got {record.scan_type!r}")
    if len(record) < MIN_POINTS:
        raise PreconditionError(f"need at least {MIN_POINTS} time points, got {len(record)}")
    if np.any(record.shots < MIN_SHOTS):
        raise PreconditionError(f"need at least {MIN_SHOTS} shots per point")
    freq = record.frequencies
    if np.ptp(freq) == 0:
        raise DegenerateData("record is constant; it carries no flopping information")

    meta = record.meta
    eta = eta if eta is not None else meta.get("eta")
    if eta is None:
        raise PreconditionError("eta is required (argument or record meta)")
    eta = float(eta)
    if expected_alpha is None:
        expected_alpha = float(meta.get("expected_alpha", 0.0))
    n_max = cfg.n_max or reconstruction_n_max(expected_alpha)
    if omega_0_bounds is None:
        nominal = omega_0 if omega_0 is not None else meta.get("omega_0")
        if nominal is None:
            raise PreconditionError("a nominal omega_0 or omega_0_bounds is required")
        omega_0_bounds = (0.9 * nominal, 1.1 * nominal)
    gamma_max = 5.0 / float(record.control.max())
    model = _BSBLikelihood(record.control, record.shots, record.successes, n_max, eta,
                           rabi_model, omega_0_bounds, gamma_max)

    rng = _stream(cfg.seed, 0)
    outcome = maximize(model.fitness, model.k + 3, cfg, rng)
    stalled = outcome.stalled(cfg.stall_fraction, cfg.stall_tolerance)
    diagnostics = {
        "n_max": n_max,
        "eta": eta,
        "rabi_model": rabi_model,
        "omega_0_bounds": list(omega_0_bounds),
        "ga_best_loglik": outcome.best_fitness,
        "ga_history_tail": outcome.history[-5:],
        "ga_stalled": stalled,
        "ga_generations": int(outcome.history.size),
    }
    if not stalled:
        reason = ("GA best log-likelihood still improving over the final "
                  f"{cfg.stall_fraction:.0%} of generations")
        if strict:
            raise NonConvergence(reason)
        diagnostics["reason"] = reason

    logits, _, omega, a, gamma = model.decode(outcome.best)
    x0 = model.to_x(logits[0], omega[0], a[0], gamma[0])
    polish = minimize(model.nll, x0, method="Nelder-Mead", bounds=model.bounds(),
                      options={"maxfev": 400 * x0.size, "xatol": 1e-7, "fatol": 1e-9,
                               "adaptive": True})
    x_best = polish.x if polish.fun <= model.nll(x0) else x0
    x_best = _refine(model, x_best)
    _, p, omega, a, gamma = model.from_x(x_best)
    p = p / p.sum()
    loglik = -model.nll(x_best)
    q = model.signal(p, omega, a, gamma)[0]
    diagnostics["polish_improvement"] = float(loglik - outcome.best_fitness)

    estimates = {f"p_{n}": float(p[n]) for n in range(model.k)}
    estimates.update(omega_0=float(omega), fringe_amplitude=float(a),
                     tau=float(1 / gamma) if gamma > 0 else math.inf)

    ci = {}
    if cfg.n_bootstrap > 0:
        shots = record.shots

        def refit(b):
            draw = _stream(cfg.seed, 1, b).binomial(shots, q).astype(float)
            return model.from_x(_refine(model, x_best, draw, ftol=1e-10))

        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            fits = list(pool.map(refit, range(cfg.n_bootstrap)))
        boot_p = np.array([f[1] for f in fits])
        boot = {f"p_{n}": boot_p[:, n] for n in range(model.k)}
        boot["omega_0"] = np.array([f[2] for f in fits])
        boot["fringe_amplitude"] = np.array([f[3] for f in fits])
        for name, samples in boot.items():
            if name in _STABILIZED:
                ci[name] = _stabilized_ci(samples, estimates[name], *_STABILIZED[name])
            else:
                ci[name] = _percentile_ci(samples, estimates[name])
        # interval on the decay rate, mapped to tau (rate 0 means tau = inf)
        g_lo, g_hi = _percentile_ci(np.array([f[4] for f in fits]), float(gamma))
        ci["tau"] = (1 / g_hi if g_hi > 0 else math.inf, 1 / g_lo if g_lo > 0 else math.inf)
        diagnostics["n_bootstrap"] = cfg.n_bootstrap

    result = FitResult(params=estimates, ci=ci, kind="phonons", log_likelihood=loglik,
                       converged=stalled, residuals=freq - q, diagnostics=diagnostics)
    return PhononDistribution(p), result


SUPPORT_FLOOR = 1e-3


def _poisson(alpha_mag: float, n: np.ndarray) -> np.ndarray:
    r2 = alpha_mag**2
    if r2 == 0:
        return (n == 0).astype(float)
    return np.exp(-r2 + n * math.log(r2) - gammaln(n + 1))


def fit_coherent(dist: PhononDistribution, sigma=0.02, level: float = 0.99) -> FitResult:
    """Least-squares fit of a Poissonian distribution to ``dist``.

    ``sigma`` (scalar or per-``n``) is the assumed uncertainty of each
    ``p_n``.  The result carries ``chi2`` and a ``poor_fit`` diagnostic that
    is True when ``chi2`` exceeds the ``level`` quantile of a chi-square
    distribution whose degrees of freedom count the informative levels
    (``p_n`` or the fitted Poisson weight at least ``SUPPORT_FLOOR``) less
    one, i.e. when the distribution is not consistent with a displaced vacuum.
    """
    p = dist.p
    n = np.arange(p.size)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), p.shape)

    def resid(x):
        return (p - _poisson(x[0], n)) / sigma

    start = math.sqrt(max(dist.mean(), 0.0))
    fit = least_squares(resid, [start], bounds=([0.0], [np.inf]), xtol=1e-15, ftol=1e-15,
                        gtol=1e-15)
    alpha = float(fit.x[0])
    r = resid(fit.x)
    chi2 = float(r @ r)
    support = np.count_nonzero(np.maximum(p, _poisson(alpha, n)) >= SUPPORT_FLOOR)
    dof = max(1, support - 1)
    threshold = float(chi2_dist.ppf(level, dof))
    jac = fit.jac
    var = float(np.linalg.pinv(jac.T @ jac)[0, 0]) if np.any(jac) else 0.0
    err = math.sqrt(var)
    return FitResult(params={"alpha_mag": alpha},
                     ci={"alpha_mag": (max(0.0, alpha - err), alpha + err)},
                     kind="coherent", chi2=chi2, residuals=r * sigma,
                     diagnostics={"dof": dof, "chi2_threshold": threshold,
                                  "poor_fit": chi2 > threshold})
