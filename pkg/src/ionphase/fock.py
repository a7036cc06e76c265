"""Truncated harmonic-oscillator primitives.

State vectors live in the Fock basis ``|0>, ..., |n_max>``.  Besides the
analytic shortcuts (Laguerre closed forms for displaced Fock states) this
module carries brute-force oracles built from ladder-operator matrices so
each shortcut can be checked independently.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import gammaln

from .errors import TruncationError, TruncationWarning

__all__ = [
    "MotionalState",
    "PhononDistribution",
    "TrapParams",
    "annihilation",
    "choose_n_max",
    "coherent_distribution",
    "coherent_state",
    "displaced_fock_overlap",
    "displacement_matrix",
    "displacement_oracle",
    "fock_state",
    "laguerre",
    "laguerre_series",
    "position_functions",
    "thermal_distribution",
]

def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MotionalState:
    """Pure motional state of one oscillator branch.

    Parameters
    ----------
    amplitudes : array_like of complex
        Probability amplitudes ``c_n`` for ``n = 0..n_max``.
    deficit : float, optional
        Population known to be lost by truncating the basis at ``n_max``.
    """

    amplitudes: np.ndarray
    deficit: float = 0.0

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.ndim != 1:
            raise ValueError("amplitudes must be one-dimensional")
        if amps.size < 2:
            raise ValueError("n_max must be at least 1")
        if not np.all(np.isfinite(amps)):
            raise ValueError("amplitudes must be finite")
        object.__setattr__(self, "amplitudes", _readonly(amps))

    @property
    def n_max(self) -> int:
        return self.amplitudes.size - 1

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def populations(self) -> "PhononDistribution":
        p = np.abs(self.amplitudes) ** 2
        total = p.sum()
        if total > 1.0:
            # rounding only; keep the distribution inside the simplex
            p = p / total
        return PhononDistribution(p)

    def padded(self, n_max: int) -> "MotionalState":
        """Return the same state embedded in a basis truncated at ``n_max``."""
        if n_max < self.n_max:
            tail = self.amplitudes[n_max + 1:]
            if np.any(np.abs(tail) > 0):
                raise TruncationError(
                    f"cannot shrink basis to n_max={n_max}: state has weight above it")
            return MotionalState(self.amplitudes[: n_max + 1], self.deficit)
        amps = np.zeros(n_max + 1, dtype=complex)
        amps[: self.n_max + 1] = self.amplitudes
        return MotionalState(amps, self.deficit)


@dataclass(frozen=True)
class PhononDistribution:
    """Phonon-number probabilities ``p_n`` over a truncated basis."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("p must be a non-empty one-dimensional array")
        if np.any(~np.isfinite(p)):
            raise ValueError("p must be finite")
        if np.any(p < -1e-15):
            raise ValueError("probabilities must be nonnegative")
        p = np.clip(p, 0.0, None)
        if p.sum() > 1.0 + 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()!r} > 1")
        object.__setattr__(self, "p", _readonly(p))

    @property
    def n_max(self) -> int:
        return self.p.size - 1

    @property
    def deficit(self) -> float:
        """Probability mass missing from the truncated basis, ``1 - sum(p)``."""
        return max(0.0, 1.0 - float(math.fsum(self.p)))

    def mean(self) -> float:
        return float(math.fsum(np.arange(self.p.size) * self.p))

    def support(self, tol: float = 0.0) -> np.ndarray:
        """Indices ``n`` with ``p_n > tol``."""
        return np.flatnonzero(self.p > tol)


@dataclass(frozen=True)
class TrapParams:
    omega_ax: float
    eta: float
    x0: float | None = None

    def __post_init__(self):
        if not self.omega_ax > 0:
            raise ValueError("omega_ax must be positive")
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")


def choose_n_max(alpha: complex = 0.0, nbar: float = 0.0) -> int:
    """Default basis truncation for a displacement ``alpha`` on a thermal input."""
    return max(32, math.ceil(8 * (1 + abs(alpha) ** 2)), math.ceil(20 * nbar))


def annihilation(n_max: int) -> np.ndarray:
    """Matrix of the lowering operator ``a`` on ``|0>..|n_max>``."""
    return np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1)


def fock_state(n: int, n_max: int) -> MotionalState:
    if not 0 <= n <= n_max:
        raise ValueError(f"Fock index {n} outside basis 0..{n_max}")
    amps = np.zeros(n_max + 1, dtype=complex)
    amps[n] = 1.0
    return MotionalState(amps)


def laguerre(n: int, k: int, x):
    """Generalized Laguerre polynomial ``L_n^k(x)`` by upward recurrence.

    ``x`` may be a scalar or an array; the result has the same shape.
    """
    if n < 0 or k < 0:
        raise ValueError("n and k must be nonnegative")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if n == 0:
        return prev if prev.ndim else float(prev)
    cur = 1.0 + k - x
    for m in range(1, n):
        prev, cur = cur, ((2 * m + 1 + k - x) * cur - (m + k) * prev) / (m + 1)
    return cur if cur.ndim else float(cur)


def laguerre_series(n: int, k: int, x: float) -> float:
    """Explicit-series oracle for ``L_n^k(x)``, summed in exact rationals."""
    xq = Fraction(float(x))
    total = Fraction(0)
    for i in range(n + 1):
        total += Fraction((-1) ** i * math.comb(n + k, n - i), math.factorial(i)) * xq**i
    return float(total)


def coherent_state(alpha: complex, n_max: int, max_deficit: float = 1e-3) -> MotionalState:
    """Coherent state ``|alpha>`` truncated at ``n_max``.

    Amplitudes are ``exp(-|alpha|^2/2) alpha^n / sqrt(n!)``, evaluated in
    log space so large ``n`` do not overflow.  A :class:`TruncationWarning`
    is issued when more than ``1e-6`` of the population lies above
    ``n_max``; a :class:`TruncationError` when it exceeds ``max_deficit``.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    alpha = complex(alpha)
    n = np.arange(n_max + 1)
    amps = np.zeros(n_max + 1, dtype=complex)
    if alpha == 0:
        amps[0] = 1.0
        return MotionalState(amps, 0.0)
    r2 = abs(alpha) ** 2
    log_mag = -r2 / 2 + n * math.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    amps = np.exp(log_mag) * np.exp(1j * n * np.angle(alpha))
    deficit = _poisson_tail(r2, n_max)
    _check_deficit(deficit, max_deficit, f"coherent state |alpha|={abs(alpha):.3g}")
    return MotionalState(amps, deficit)


def coherent_distribution(alpha_mag: float, n_max: int) -> PhononDistribution:
    """Poissonian ``p_n = exp(-|a|^2) |a|^(2n) / n!`` truncated at ``n_max``."""
    r2 = float(alpha_mag) ** 2
    n = np.arange(n_max + 1)
    if r2 == 0:
        p = np.zeros(n_max + 1)
        p[0] = 1.0
        return PhononDistribution(p)
    p = np.exp(-r2 + n * math.log(r2) - gammaln(n + 1))
    return PhononDistribution(p)


def _poisson_tail(r2: float, n_max: int) -> float:
    from scipy.stats import poisson

    return float(poisson.sf(n_max, r2))


def _check_deficit(deficit: float, bound: float, what: str) -> None:
    if deficit > bound:
        raise TruncationError(f"{what}: truncation deficit {deficit:.3g} exceeds {bound:.3g}")
    if deficit > 1e-6:
        warnings.warn(f"{what}: truncation deficit {deficit:.3g}", TruncationWarning, stacklevel=3)


def thermal_distribution(nbar: float, n_max: int) -> PhononDistribution:
    """Geometric (thermal) distribution ``p_n = nbar^n / (1+nbar)^(n+1)``."""
    if nbar < 0:
        raise ValueError("nbar must be nonnegative")
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    p = np.zeros(n_max + 1)
    if nbar == 0:
        p[0] = 1.0
        return PhononDistribution(p)
    if nbar > n_max / 3:
        warnings.warn(f"nbar={nbar} is not small compared with n_max/3", TruncationWarning,
                      stacklevel=2)
    n = np.arange(n_max + 1)
    p = np.exp(n * math.log(nbar / (1 + nbar))) / (1 + nbar)
    return PhononDistribution(p)


def displaced_fock_overlap(n: int, beta):
    """Diagonal element ``<n|D(beta)|n> = exp(-|beta|^2/2) L_n(|beta|^2)``."""
    x = np.abs(np.asarray(beta, dtype=complex)) ** 2
    val = np.exp(-x / 2) * laguerre(n, 0, x)
    return np.asarray(val, dtype=complex) if np.ndim(val) else complex(val)


def displacement_matrix(beta: complex, n_max: int) -> np.ndarray:
    """Exact matrix elements ``<m|D(beta)|n>`` from associated Laguerre forms.

    Unlike ``expm`` of a truncated generator, every element is exact; the
    resulting block is only approximately unitary.
    """
    beta = complex(beta)
    x = abs(beta) ** 2
    dim = n_max + 1
    out = np.zeros((dim, dim), dtype=complex)
    lg = gammaln(np.arange(dim) + 1)
    for d in range(dim):
        # m = n + d below the diagonal, symmetric partner above
        for n in range(dim - d):
            m = n + d
            mag = math.exp(0.5 * (lg[n] - lg[m]) - x / 2) * laguerre(n, d, x)
            out[m, n] = mag * beta**d
            if d:
                out[n, m] = mag * (-beta.conjugate()) ** d
    return out


def _displacement_expm(beta: complex, n_max: int) -> np.ndarray:
    a = annihilation(n_max)
    # D = exp(beta a+ - beta* a) = exp(-iG) with G Hermitian
    gen = 1j * (beta * a.T - np.conj(beta) * a)
    w, v = np.linalg.eigh(gen)
    return (v * np.exp(-1j * w)) @ v.conj().T


def displacement_oracle(beta: complex, n_max: int, block: int | None = None,
                        tol: float = 1e-10) -> np.ndarray:
    """Brute-force displacement operator on ``|0>..|n_max>``.

    Builds ``exp(beta a^+ - beta^* a)`` from ladder matrices by spectral
    decomposition.  Convergence of the leading ``block`` x ``block`` corner
    (default: half the basis) is verified against a run with the basis
    doubled; a :class:`TruncationError` is raised if they differ by more
    than ``tol``.
    """
    beta = complex(beta)
    if n_max < 4 * (1 + abs(beta) ** 2):
        raise TruncationError(
            f"n_max={n_max} too small for |beta|={abs(beta):.3g}; need >= {4 * (1 + abs(beta) ** 2):.1f}")
    u = _displacement_expm(beta, n_max)
    if beta == 0:
        return u
    block = (n_max + 1) // 2 if block is None else block
    ref = _displacement_expm(beta, 2 * n_max + 1)
    err = np.max(np.abs(u[:block, :block] - ref[:block, :block]))
    if err > tol:
        raise TruncationError(f"displacement block of size {block} unconverged (err {err:.2e})")
    return u


def position_functions(eta: float, n_max: int, pad: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """``cos(eta (a + a^+))`` and ``sin(eta (a + a^+))`` on ``|0>..|n_max>``.

    Computed by spectral decomposition of the position operator in a basis
    enlarged by ``pad`` levels, then cut back, so the returned blocks are
    free of truncation edge effects.
    """
    dim = n_max + 1 + pad
    a = annihilation(dim - 1)
    w, v = np.linalg.eigh(eta * (a + a.T))
    cos = (v * np.cos(w)) @ v.T
    sin = (v * np.sin(w)) @ v.T
    k = n_max + 1
    return cos[:k, :k], sin[:k, :k]
