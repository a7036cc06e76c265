import math

import numpy as np
import pytest

from ionphase.dynamics import DriveParams
from ionphase.errors import NonConvergence, PreconditionError
from ionphase.fock import thermal_distribution
from ionphase.observables import contrast_ground, contrast_readout, contrast_thermal, sample_record
from ionphase.reconstruct import fit_contrast_curve
from ionphase.reconstruct.contrast import deviance_residuals
from ionphase.records import MeasurementRecord

DELTA = 2 * math.pi * 42e3
DRIVE = DriveParams(delta_S=2 * 0.8 * DELTA / 0.25, delta=DELTA, eta=0.25)
GUESS = DriveParams(delta_S=2 * 0.7 * 1.08 * DELTA / 0.25, delta=1.08 * DELTA, eta=0.25)


def record(q, t, shots=200, seed=0, exact=False):
    if exact:
        return MeasurementRecord(t, np.full(t.size, shots), np.round(q * shots), "contrast")
    return sample_record(q, t, shots, seed)


def ground_curve(t, tau=math.inf):
    return np.asarray(contrast_readout(contrast_ground(t, DRIVE), t, tau))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_ground_detuning_round_trip(seed):
    t = np.arange(0, 60.5e-6, 1e-6)
    res = fit_contrast_curve(record(ground_curve(t, 200e-6), t, seed=seed), "ground",
                             drive_guess=GUESS)
    assert res["delta"] == pytest.approx(DELTA, rel=0.01)
    assert res["amplitude"] == pytest.approx(0.8, rel=0.05)


def test_ground_noiseless_recovery():
    t = np.arange(0, 60.5e-6, 1e-6)
    res = fit_contrast_curve(record(ground_curve(t, 200e-6), t, shots=10**12, exact=True),
                             "ground", drive_guess=GUESS)
    assert res["delta"] == pytest.approx(DELTA, rel=1e-4)
    assert res["delta_S"] == pytest.approx(DRIVE.delta_S, rel=1e-4)
    assert res["tau"] == pytest.approx(200e-6, rel=1e-4)


@pytest.mark.parametrize("seed", [0, 1])
def test_thermal_nbar_round_trip(seed):
    t = np.arange(0, 60.25e-6, 0.5e-6)
    c = contrast_thermal(t, DRIVE, thermal_distribution(20, 400), "rwa_n_dependent")
    q = np.asarray(contrast_readout(c, t))
    res = fit_contrast_curve(record(q, t, seed=seed), "rwa_n_dependent", ("nbar",), DRIVE, nbar=10.0)
    assert res["nbar"] == pytest.approx(20, rel=0.15)
    assert res.ci["nbar"][0] <= res["nbar"] <= res.ci["nbar"][1]


def test_thermal_noiseless_recovery():
    t = np.arange(0, 60.25e-6, 1e-6)
    c = contrast_thermal(t, DRIVE, thermal_distribution(3, 200), "closed")
    q = np.asarray(contrast_readout(c, t))
    res = fit_contrast_curve(record(q, t, shots=10**12, exact=True), "closed", ("nbar",), DRIVE,
                             nbar=2.0)
    assert res["nbar"] == pytest.approx(3, rel=1e-4)


def test_flat_record_does_not_converge():
    t = np.arange(0, 60.5e-6, 1e-6)
    with pytest.raises(NonConvergence):
        fit_contrast_curve(record(np.full(t.size, 0.5), t), drive_guess=GUESS)


def test_preconditions_and_arguments():
    t = np.arange(0, 10e-6, 1e-6)
    with pytest.raises(PreconditionError):
        fit_contrast_curve(record(ground_curve(t), t), drive_guess=GUESS)
    t = np.arange(0, 60.5e-6, 1e-6)
    rec = record(ground_curve(t), t)
    with pytest.raises(ValueError):
        fit_contrast_curve(rec, "ground", ("nbar",), GUESS)
    with pytest.raises(ValueError):
        fit_contrast_curve(rec, "nope", drive_guess=GUESS)
    with pytest.raises(ValueError):
        fit_contrast_curve(rec, free=("eta",), drive_guess=GUESS)
    with pytest.raises(ValueError):
        fit_contrast_curve(rec)
    bsb = MeasurementRecord(t, np.full(t.size, 200), np.full(t.size, 100), "bsb")
    with pytest.raises(PreconditionError):
        fit_contrast_curve(bsb, drive_guess=GUESS)


def test_deviance_residuals_sum_to_twice_nll_excess():
    y = np.array([0.0, 0.3, 1.0])
    p = np.array([0.1, 0.35, 0.9])
    n = np.array([200.0, 200.0, 200.0])
    r = deviance_residuals(p, y, n)
    s = y * n
    nll = -np.sum(s * np.log(p) + (n - s) * np.log1p(-p))
    with np.errstate(divide="ignore", invalid="ignore"):
        sat = -np.nansum(s * np.log(y) + (n - s) * np.log1p(-y))
    assert r @ r == pytest.approx(2 * (nll - sat))
    assert np.all(np.sign(r) == np.sign(p - y))
