import json
import math

import pytest

from ionphase.config import PRESETS, angular, emit, load_config, load_preset, parse_config
from ionphase.errors import ConfigError

MINIMAL = {
    "schema_version": 1,
    "trap": {"eta": 0.25, "omega_ax_hz": 1.35e6},
    "drive": {"delta_hz": 42e3, "amplitude": 0.8},
    "scan": {"type": "contrast", "t_stop_us": 60.0, "t_step_us": 1.0},
    "shots": 200,
}


def text(doc):
    return json.dumps(doc, indent=2)


@pytest.mark.parametrize("name", PRESETS)
def test_presets_parse_and_emit_is_idempotent(name):
    cfg = load_preset(name)
    once = emit(cfg)
    assert emit(parse_config(once)) == once
    assert load_config(name) == cfg


def test_hz_are_converted_exactly_once():
    cfg = parse_config(MINIMAL)
    assert cfg.drive.delta == angular(42e3) == 2 * math.pi * 42e3
    assert cfg.trap.omega_ax == 2 * math.pi * 1.35e6
    assert cfg.drive.amplitude == pytest.approx(0.8)
    assert cfg["drive"]["delta_hz"] == 42e3
    assert cfg.sequence.tau == math.inf


def test_defaults_and_grid():
    cfg = parse_config(MINIMAL)
    assert cfg.model == "closed" and cfg.seed == 0 and cfg.scan_type == "contrast"
    t = cfg.grid()
    assert t.size == 61 and t[-1] == pytest.approx(60e-6)


def test_shots_zero_is_a_schema_error_with_line():
    doc = dict(MINIMAL, shots=0)
    with pytest.raises(ConfigError, match=r"cfg\.json:\d+: shots"):
        parse_config(text(doc), "cfg.json")


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError, match="extra"):
        parse_config(dict(MINIMAL, extra=1))
    with pytest.raises(ConfigError, match="trap"):
        parse_config(dict(MINIMAL, trap={"eta": 0.25, "omega_ax_hz": 1e6, "mass": 40}))


def test_error_line_points_at_offending_key():
    doc = text(dict(MINIMAL, drive={"delta_hz": -1.0, "amplitude": 0.8}))
    line = next(i for i, s in enumerate(doc.splitlines(), 1) if '"delta_hz"' in s)
    with pytest.raises(ConfigError, match=rf":{line}: drive/delta_hz"):
        parse_config(doc, "cfg.json")


@pytest.mark.parametrize("bad", [
    "{not json",
    "[]",
    text(dict(MINIMAL, schema_version=2)),
    text(dict(MINIMAL, drive={"delta_hz": 1e3})),
    text(dict(MINIMAL, drive={"delta_hz": 1e3, "amplitude": 1, "delta_S_hz": 1})),
    text(dict(MINIMAL, state={"type": "thermal"})),
    text(dict(MINIMAL, scan={"type": "bsb", "probe_step_us": 5.0})),
    text(dict(MINIMAL, fit={"ga": {"population": 5}})),
])
def test_invalid_documents(bad):
    with pytest.raises(ConfigError):
        parse_config(bad)


def test_overrides_revalidate():
    cfg = parse_config(MINIMAL)
    assert cfg.with_overrides(seed=7).seed == 7
    assert cfg.with_overrides(seed=None).seed == 0
    with pytest.raises(ConfigError):
        cfg.with_overrides(shots=-1)


def test_load_config_file_and_errors(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(text(MINIMAL))
    assert load_config(p).shots == 200
    with pytest.raises(OSError):
        load_config(tmp_path / "missing.json")
    with pytest.raises(ConfigError):
        load_preset("fig9")


def test_preset_values():
    assert load_preset("fig1b").drive.delta == angular(42e3)
    fig3 = load_preset("fig3")
    assert fig3.grid()[-1] == pytest.approx(76e-6) and fig3.grid()[1] == pytest.approx(4e-6)
    assert fig3.trap.eta == 0.25 and fig3.shots == 200
