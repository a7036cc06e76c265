import math

import numpy as np
import pytest
from scipy.stats import chi2 as chi2_dist

from ionphase.errors import DegenerateData, PreconditionError
from ionphase.fock import PhononDistribution, coherent_distribution, thermal_distribution
from ionphase.ga import GAConfig
from ionphase.observables import SequenceParams, bsb_signal, sample_record
from ionphase.reconstruct import fit_coherent, reconstruct_phonons
from ionphase.reconstruct.phonons import reconstruction_n_max
from ionphase.records import MeasurementRecord

ETA = 0.25
SEQ = SequenceParams(omega_0=2 * math.pi * 80e3, fringe_amplitude=0.95, tau=300e-6)
TP = np.arange(40) * 5e-6
FAST = GAConfig(generations=200, n_bootstrap=20)


def bsb_record(dist, shots=200, seed=0, exact=False):
    q = np.asarray(bsb_signal(TP, dist, SEQ, ETA))
    meta = {"eta": ETA, "omega_0": SEQ.omega_0}
    if exact:
        return MeasurementRecord(TP, np.full(TP.size, shots), np.round(q * shots), "bsb", meta)
    return sample_record(q, TP, shots, seed, "bsb", meta)


def test_default_truncation():
    assert reconstruction_n_max(0) == 8
    assert reconstruction_n_max(1.5) == 9
    assert reconstruction_n_max(2.0) == 14


def test_noiseless_vacuum():
    # expected counts at 10^4 shots: rounding is far below the tolerance
    rec = bsb_record(coherent_distribution(0.0, 8), shots=10**4, exact=True)
    dist, res = reconstruct_phonons(rec, FAST)
    assert dist.p[0] >= 0.99
    assert res["omega_0"] == pytest.approx(SEQ.omega_0, rel=5e-3)


def test_noiseless_coherent_is_consistent():
    truth = coherent_distribution(1.2, 9)
    rec = bsb_record(truth, shots=10**4, exact=True)
    dist, res = reconstruct_phonons(rec, FAST, expected_alpha=1.2)
    assert res.converged
    np.testing.assert_allclose(dist.p, truth.p[:dist.p.size], atol=2e-3)
    assert res["omega_0"] == pytest.approx(SEQ.omega_0, rel=1e-3)
    assert res["fringe_amplitude"] == pytest.approx(0.95, rel=1e-3)


def test_coherent_round_trip_within_ci_scale():
    truth = coherent_distribution(1.5, 9)
    dist, res = reconstruct_phonons(bsb_record(truth, seed=4), GAConfig(seed=4, n_bootstrap=50),
                                    expected_alpha=1.5)
    assert np.max(np.abs(dist.p - truth.p)) <= 0.1
    assert res.converged
    for n in range(dist.p.size):
        lo, hi = res.ci[f"p_{n}"]
        assert lo <= res[f"p_{n}"] <= hi


def test_simplex_feasibility_and_seed_determinism():
    rec = bsb_record(coherent_distribution(1.0, 9), seed=2)
    a, ra = reconstruct_phonons(rec, FAST, expected_alpha=1.0)
    b, rb = reconstruct_phonons(rec, FAST, expected_alpha=1.0)
    assert np.all(a.p >= 0) and a.p.sum() == pytest.approx(1.0, abs=1e-15)
    assert a.p.tobytes() == b.p.tobytes()
    assert ra.to_json() == rb.to_json()


def test_thread_count_does_not_change_result():
    rec = bsb_record(coherent_distribution(1.0, 9), seed=5)
    a, ra = reconstruct_phonons(rec, FAST, expected_alpha=1.0, threads=1)
    b, rb = reconstruct_phonons(rec, FAST, expected_alpha=1.0, threads=3)
    assert a.p.tobytes() == b.p.tobytes() and ra.ci == rb.ci


def test_degenerate_and_precondition_errors():
    full = MeasurementRecord(TP, np.full(40, 200), np.full(40, 200), "bsb", {"eta": ETA})
    with pytest.raises(DegenerateData):
        reconstruct_phonons(full, FAST)
    few = MeasurementRecord(TP[:10], np.full(10, 200), np.arange(10), "bsb", {"eta": ETA})
    with pytest.raises(PreconditionError):
        reconstruct_phonons(few, FAST)
    thin = MeasurementRecord(TP, np.full(40, 20), np.arange(40) % 20, "bsb", {"eta": ETA})
    with pytest.raises(PreconditionError):
        reconstruct_phonons(thin, FAST)
    with pytest.raises(PreconditionError):
        reconstruct_phonons(MeasurementRecord(TP, np.full(40, 200), np.arange(40), "contrast"), FAST)
    with pytest.raises(PreconditionError):
        reconstruct_phonons(MeasurementRecord(TP, np.full(40, 200), np.arange(40), "bsb",
                                              {"eta": ETA}), FAST)


def test_fit_coherent_examples():
    exact = fit_coherent(coherent_distribution(1.2, 30))
    assert exact["alpha_mag"] == pytest.approx(1.2, abs=1e-6)
    assert not exact.diagnostics["poor_fit"]
    vac = fit_coherent(PhononDistribution(np.r_[1.0, np.zeros(8)]))
    assert vac["alpha_mag"] == pytest.approx(0.0, abs=1e-6)


def test_fit_coherent_flags_thermal_state():
    # threshold oracle: residuals of the best Poisson, computed independently on a grid
    thermal = thermal_distribution(1.0, 30)
    res = fit_coherent(thermal)
    n = np.arange(31)
    from scipy.special import gammaln
    grid = np.linspace(0.01, 3, 3000)
    models = [np.exp(-a**2 + 2 * n * np.log(a) - gammaln(n + 1)) for a in grid]
    chi2 = [np.sum(((thermal.p - m) / 0.02) ** 2) for m in models]
    best = models[int(np.argmin(chi2))]
    assert res.chi2 == pytest.approx(min(chi2), rel=1e-3)
    dof = np.count_nonzero(np.maximum(thermal.p, best) >= 1e-3) - 1
    assert res.diagnostics["chi2_threshold"] == pytest.approx(chi2_dist.ppf(0.99, dof))
    assert res.chi2 > res.diagnostics["chi2_threshold"]
    assert res.diagnostics["poor_fit"]


@pytest.mark.slow
def test_bootstrap_intervals_are_calibrated():
    # 68 % intervals must cover the truth in 68 +- 10 % of 100 synthetic trials
    truth = coherent_distribution(1.5, 9)
    q = np.asarray(bsb_signal(TP, truth, SEQ, ETA))
    targets = {"omega_0": SEQ.omega_0, "fringe_amplitude": SEQ.fringe_amplitude,
               "p_0": truth.p[0], "p_1": truth.p[1], "p_2": truth.p[2]}
    hits = dict.fromkeys(targets, 0)
    for seed in range(100):
        rec = sample_record(q, TP, 200, seed, "bsb", {"eta": ETA, "omega_0": SEQ.omega_0})
        _, res = reconstruct_phonons(rec, GAConfig(seed=seed, generations=150, n_bootstrap=100),
                                     expected_alpha=1.5, strict=False)
        for name, value in targets.items():
            lo, hi = res.ci[name]
            hits[name] += lo <= value <= hi
    for name, n in hits.items():
        assert 58 <= n <= 78, f"{name}: coverage {n}/100"
