import math

import numpy as np
import pytest

from ionphase.errors import RecordFormatError
from ionphase.reconstruct import FitResult


def make(**kw):
    base = dict(params={"a": 1.0, "b": math.inf}, ci={"a": (0.5, 1.5)}, kind="test", chi2=2.0,
                residuals=np.array([0.1, -0.2]), diagnostics={"n": np.int64(3), "v": np.arange(2)})
    base.update(kw)
    return FitResult(**base)


def test_json_round_trip():
    res = make()
    back = FitResult.from_json(res.to_json())
    assert back.params == res.params and back.ci == res.ci
    np.testing.assert_array_equal(back.residuals, res.residuals)
    assert back.diagnostics == {"n": 3, "v": [0, 1]}
    assert back.to_json() == res.to_json()


def test_unknown_and_missing_fields_are_rejected():
    d = make().to_dict()
    with pytest.raises(RecordFormatError):
        FitResult.from_dict({**d, "extra": 1})
    with pytest.raises(RecordFormatError):
        FitResult.from_dict({"params": {}})
    with pytest.raises(RecordFormatError):
        FitResult.from_json("{not json")


def test_interval_must_contain_estimate():
    with pytest.raises(ValueError):
        make(ci={"a": (1.2, 1.5)})
    with pytest.raises(ValueError):
        make(ci={"c": (0.0, 1.0)})


def test_non_converged_requires_reason():
    with pytest.raises(ValueError):
        make(converged=False)
    res = make(converged=False, diagnostics={"reason": "stalled"})
    assert not res.converged


def test_accessors():
    res = make()
    assert res["a"] == 1.0
    assert res.stderr("a") == pytest.approx(0.5)
