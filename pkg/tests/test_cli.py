"""Command-line behaviour: outputs, determinism, exit codes and fault injection."""
import csv
import json
import subprocess
import sys
import time
from pathlib import Path

import pytest

from logsob_lab import acceptance
from logsob_lab.cli import load_scenario, main
from logsob_lab.errors import ConfigError
from logsob_lab.functionals import CSV_HEADER
from logsob_lab.reports import HOPFLAX_HEADER, TRANSPORT_HEADER

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _header(path):
    with open(path) as fh:
        return next(csv.reader(fh))


def test_run_writes_all_outputs(tmp_path):
    out = tmp_path / "o"
    assert main(["run", str(CONFIGS / "flat_equality.ini"), "--out", str(out)]) == 0
    assert _header(out / "deficits.csv") == CSV_HEADER
    assert _header(out / "hopflax.csv") == HOPFLAX_HEADER
    assert _header(out / "transport.csv") == TRANSPORT_HEADER
    summary = json.loads((out / "summary.json").read_text())
    assert summary["pass"] and summary["failures"] == []
    consts = json.loads((out / "constants.json").read_text())
    assert consts["chain"]["pass"]
    with open(out / "deficits.csv") as fh:
        main_rows = [r for r in csv.DictReader(fh) if r["name"] == "main"]
    assert [r["resolution"] for r in main_rows] == ["65", "129", "257"]
    defs = [float(r["deficit"]) for r in main_rows]
    assert all(0 <= d <= 1e-2 for d in defs) and defs[0] > defs[1] > defs[2]


def test_constants_only_scenario(tmp_path):
    assert main(["run", str(CONFIGS / "constants.ini"), "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["suites"] == {"constants": {"criterion": "constant chain", "pass": True}}
    assert not (tmp_path / "deficits.csv").exists()


def test_outputs_are_byte_identical(tmp_path, monkeypatch):
    cfg = str(CONFIGS / "flat_equality.ini")
    assert main(["run", cfg, "--out", str(tmp_path / "a")]) == 0
    monkeypatch.setenv("LOGSOB_LAB_OUT", str(tmp_path / "b"))
    assert main(["run", cfg, "--workers", "2"]) == 0
    for name in ("deficits.csv", "hopflax.csv", "transport.csv", "constants.json",
                 "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_changes_transport_only(tmp_path):
    cfg = str(CONFIGS / "flat_equality.ini")
    main(["transport", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["transport", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a" / "transport.csv").read_bytes() != \
        (tmp_path / "b" / "transport.csv").read_bytes()


@pytest.mark.parametrize("name", ["sphere.ini", "catenoid.ini", "cylinder_gaussian.ini"])
def test_example_configs_pass(tmp_path, name):
    assert main(["run", str(CONFIGS / name), "--out", str(tmp_path)]) == 0


def test_missing_generator_name(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[scenario]\nname = x\n\n[generator]\nresolution = 33\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "bad.ini:4" in err and "[generator]" in err and "'name'" in err


def test_config_errors_name_the_field(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[generator]\nname = flat_chart\nradius = 2\n")
    with pytest.raises(ConfigError, match="c.ini:3.*radius"):
        load_scenario(cfg)
    with pytest.raises(ConfigError, match="unknown generator"):
        load_scenario(cfg, ["generator.name=torus"])
    with pytest.raises(ConfigError, match="seed"):
        load_scenario(None, ["scenario.seed=abc"])
    with pytest.raises(ConfigError, match="family"):
        load_scenario(None, ["field.family=nope"])


def test_usage_errors_exit_2(tmp_path):
    assert main(["bogus"]) == 2
    assert main(["run", str(tmp_path / "missing.ini")]) == 2
    assert main(["deficit", "--set", "oops", "--out", str(tmp_path)]) == 2
    assert main(["deficit", "--workers", "0", "--out", str(tmp_path)]) == 2
    assert main(["--help"]) == 0


def test_figures_are_rendered(tmp_path):
    pytest.importorskip("matplotlib")
    out = tmp_path / "f"
    rc = main(["run", str(CONFIGS / "flat_equality.ini"), "--out", str(out), "--figures"])
    assert rc == 0
    for name in ("deficits.png", "hopflax.png", "transport_flat-equality_1d.png"):
        assert (out / name).stat().st_size > 0


def test_quick_suite_and_fault_injection(tmp_path, capsys):
    t0 = time.perf_counter()
    assert main(["suite", "quick", "--out", str(tmp_path / "ok")]) == 0
    assert time.perf_counter() - t0 <= 30.0
    rc = main(["suite", "quick", "--inject-fault", "sign-flip", "--out", str(tmp_path / "bad")])
    assert rc == 1
    text = capsys.readouterr().out
    assert "[FAIL] criterion  4 equality-case anchor" in text
    summary = json.loads((tmp_path / "bad" / "summary.json").read_text())
    assert summary["failures"] == ["equality-case anchor"]
    assert not acceptance.FAULTS


def test_sign_flip_fails_the_acceptance_battery(tmp_path, capsys):
    rc = main(["suite", "acceptance", "--inject-fault", "sign-flip", "--out", str(tmp_path)])
    assert rc == 1
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert "non-negativity battery" in summary["failures"]
    assert "non-negativity battery" in capsys.readouterr().out
    assert not acceptance.FAULTS


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "logsob_lab", "constants", "--out",
                           str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "[PASS] constants" in proc.stdout
