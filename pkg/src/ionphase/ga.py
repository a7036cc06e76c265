"""Real-coded genetic algorithm on the unit hypercube.

Tournament selection, blend crossover, Gaussian mutation with a
geometrically annealed scale, and elitism.  The fitness callable is
evaluated on the whole population at once, so vectorized objectives run
at numpy speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# blend-crossover overshoot (BLX-alpha)
BLEND = 0.25


@dataclass(frozen=True)
class GAConfig:
    """Settings of the genetic search.

    ``n_max`` fixes the Fock truncation of a phonon reconstruction (``None``
    derives it from the expected displacement); ``n_bootstrap`` is the
    number of parametric-bootstrap refits used for confidence intervals.
    """

    population: int = 96
    generations: int = 400
    mutation_scale: float = 0.05
    crossover_rate: float = 0.7
    elite_count: int = 4
    seed: int = 0
    n_max: int | None = None
    tournament_size: int = 3
    mutation_decay: float = 0.99
    n_bootstrap: int = 200
    stall_fraction: float = 0.2
    stall_tolerance: float = 0.5
    max_extensions: int = 2

    def __post_init__(self):
        if self.population < 10:
            raise ValueError("population must be at least 10")
        if not 0 <= self.elite_count < self.population:
            raise ValueError("elite_count must be in [0, population)")
        if self.generations < 1:
            raise ValueError("generations must be positive")
        if not 0 <= self.crossover_rate <= 1:
            raise ValueError("crossover_rate must lie in [0, 1]")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be positive")
        if self.max_extensions < 0:
            raise ValueError("max_extensions must be nonnegative")
        if self.n_max is not None and self.n_max < 1:
            raise ValueError("n_max must be at least 1")


@dataclass
class GAOutcome:
    best: np.ndarray
    best_fitness: float
    history: np.ndarray  # best fitness after each generation
    population: np.ndarray
    fitness: np.ndarray

    def stalled(self, fraction: float, tolerance: float) -> bool:
        """True when the best fitness improved by at most ``tolerance`` over the final ``fraction``."""
        return _stalled(self.history, fraction, tolerance)


def _stalled(history, fraction: float, tolerance: float) -> bool:
    history = np.asarray(history)
    k = max(1, int(round(fraction * history.size)))
    window = history[-k - 1:] if history.size > k else history
    return bool(window[-1] - window[0] <= tolerance)


def _reflect(x: np.ndarray) -> np.ndarray:
    # fold back into [0, 1] so mutation near a bound stays unbiased
    x = np.mod(x, 2.0)
    return np.where(x > 1.0, 2.0 - x, x)


def maximize(fitness, n_genes: int, cfg: GAConfig, rng: np.random.Generator,
             initial: np.ndarray | None = None) -> GAOutcome:
    """Maximize ``fitness(pop) -> (pop_size,)`` over genes in ``[0, 1]^n_genes``.

    ``initial`` rows, if given, replace the first members of the random
    starting population.  When the best fitness is still moving over the
    final ``stall_fraction`` of the run, the search continues for another
    ``generations // 2`` generations, at most ``max_extensions`` times.
    """
    pop = rng.random((cfg.population, n_genes))
    if initial is not None:
        initial = np.atleast_2d(initial)[: cfg.population]
        pop[: initial.shape[0]] = initial
    fit = np.asarray(fitness(pop), dtype=float)
    fit = np.where(np.isfinite(fit), fit, -np.inf)
    history: list[float] = []
    sigma = cfg.mutation_scale
    n_children = cfg.population - cfg.elite_count
    budget, extensions = cfg.generations, 0

    while True:
        if len(history) >= budget:
            if (extensions >= cfg.max_extensions
                    or _stalled(history, cfg.stall_fraction, cfg.stall_tolerance)):
                break
            budget += max(1, cfg.generations // 2)
            extensions += 1
        order = np.argsort(fit)[::-1]
        elites = pop[order[: cfg.elite_count]]

        contenders = rng.integers(0, cfg.population, size=(2 * n_children, cfg.tournament_size))
        winners = contenders[np.arange(contenders.shape[0]), np.argmax(fit[contenders], axis=1)]
        mothers, fathers = pop[winners[:n_children]], pop[winners[n_children:]]

        w = rng.uniform(-BLEND, 1 + BLEND, size=(n_children, n_genes))
        crossed = w * mothers + (1 - w) * fathers
        do_cross = rng.random(n_children) < cfg.crossover_rate
        children = np.where(do_cross[:, None], crossed, mothers)
        children = _reflect(children + sigma * rng.standard_normal(children.shape))

        pop = np.vstack([elites, children])
        child_fit = np.asarray(fitness(children), dtype=float)
        fit = np.concatenate([fit[order[: cfg.elite_count]],
                              np.where(np.isfinite(child_fit), child_fit, -np.inf)])
        history.append(float(fit.max()))
        sigma *= cfg.mutation_decay

    i = int(np.argmax(fit))
    return GAOutcome(pop[i].copy(), float(fit[i]), np.asarray(history), pop, fit)
