import numpy as np
import pytest

from ionphase.ga import GAConfig, maximize


def sphere(pop):
    return -np.sum((pop - 0.3) ** 2, axis=1)


@pytest.mark.parametrize("kwargs", [
    {"population": 5}, {"elite_count": 96}, {"generations": 0}, {"crossover_rate": 1.5},
    {"n_max": 0}, {"tournament_size": 0}, {"max_extensions": -1},
])
def test_config_invariants(kwargs):
    with pytest.raises(ValueError):
        GAConfig(**kwargs)


def test_finds_optimum_and_history_is_monotone():
    cfg = GAConfig(population=40, generations=150)
    out = maximize(sphere, 4, cfg, np.random.default_rng(0))
    np.testing.assert_allclose(out.best, 0.3, atol=0.02)
    assert np.all(np.diff(out.history) >= 0)
    assert out.stalled(0.2, 1e-3)


def test_same_seed_same_result():
    cfg = GAConfig(population=20, generations=30)
    a = maximize(sphere, 3, cfg, np.random.Generator(np.random.Philox(7)))
    b = maximize(sphere, 3, cfg, np.random.Generator(np.random.Philox(7)))
    np.testing.assert_array_equal(a.best, b.best)
    np.testing.assert_array_equal(a.history, b.history)


def test_genes_stay_in_unit_cube():
    cfg = GAConfig(population=20, generations=20, mutation_scale=0.8)
    out = maximize(lambda p: p.sum(axis=1), 3, cfg, np.random.default_rng(1))
    assert np.all((out.population >= 0) & (out.population <= 1))


def test_initial_members_are_used():
    cfg = GAConfig(population=20, generations=1, elite_count=1)
    seed = np.full(2, 0.3)
    out = maximize(sphere, 2, cfg, np.random.default_rng(0), initial=seed)
    assert out.best_fitness == pytest.approx(0.0)


def test_nonfinite_fitness_is_never_selected():
    def fit(pop):
        f = sphere(pop)
        f[pop[:, 0] > 0.5] = np.nan
        return f

    out = maximize(fit, 2, GAConfig(population=30, generations=40), np.random.default_rng(2))
    assert out.best[0] <= 0.5 and np.isfinite(out.best_fitness)


def test_search_extends_until_stalled():
    never = GAConfig(population=20, generations=10, stall_tolerance=-1.0)
    out = maximize(sphere, 2, never, np.random.default_rng(0))
    assert out.history.size == 10 + 2 * 5
    fixed = GAConfig(population=20, generations=10, stall_tolerance=-1.0, max_extensions=0)
    assert maximize(sphere, 2, fixed, np.random.default_rng(0)).history.size == 10
    easy = GAConfig(population=20, generations=10, stall_tolerance=np.inf)
    assert maximize(sphere, 2, easy, np.random.default_rng(0)).history.size == 10
