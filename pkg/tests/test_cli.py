import json
import subprocess
import sys

import numpy as np
import pytest

from ionphase.cli import default_threads, main
from ionphase.errors import ConfigError
from ionphase.records import MeasurementRecord, read_record, write_record


def test_simulate_and_reconstruct(tmp_path, capsys):
    out = tmp_path / "d"
    assert main(["simulate", "--config", "fig1b", "--out", str(out), "--seed", "2"]) == 0
    assert main(["reconstruct", "--data", str(out), "--threads", "1"]) == 0
    fit = json.loads((out / "fit.json").read_text())
    assert "contrast" in fit["results"]
    assert json.loads((out / "dataset.json").read_text())["seed"] == 2


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema_version": 1,\n "shots": 0}\n')
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "bad.json" in capsys.readouterr().err
    assert main(["simulate", "--out", str(tmp_path / "o")]) == 2
    # unknown names are read as paths
    assert main(["simulate", "--config", "fig7"]) == 4


def test_io_error_exit_code(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == 4
    assert main(["reconstruct", "--data", str(tmp_path / "none")]) == 4
    out = tmp_path / "d"
    main(["simulate", "--config", "fig1b", "--out", str(out)])
    (out / "record_000.csv").write_text("control,shots\n")
    assert main(["reconstruct", "--data", str(out)]) == 4


def test_nonconvergence_exit_code(tmp_path):
    out = tmp_path / "d"
    main(["simulate", "--config", "fig1b", "--out", str(out)])
    rec = read_record(out / "record_000")
    flat = MeasurementRecord(rec.control, rec.shots, np.full(len(rec), 100), "contrast", rec.meta)
    write_record(flat, out / "record_000")
    assert main(["reconstruct", "--data", str(out)]) == 3


def test_threads_environment(monkeypatch):
    monkeypatch.setenv("IONPHASE_THREADS", "3")
    assert default_threads() == 3
    monkeypatch.setenv("IONPHASE_THREADS", "zero")
    with pytest.raises(ConfigError):
        default_threads()
    monkeypatch.delenv("IONPHASE_THREADS")
    assert default_threads() >= 1


def test_thread_count_does_not_change_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d, n in ((a, "1"), (b, "4")):
        assert main(["simulate", "--config", "fig3", "--out", str(d), "--threads", n]) == 0
        assert main(["reconstruct", "--data", str(d), "--threads", n]) == 0
    for name in ("dataset.json", "truth.csv", "fit.json", "trajectory.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_bad_arguments_exit_through_argparse():
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--threads", "0"])
    assert exc.value.code == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ionphase", "simulate", "--config", "fig1b",
                           "--out", str(tmp_path / "d")], capture_output=True, text=True)
    assert proc.returncode == 0 and "wrote dataset" in proc.stdout
