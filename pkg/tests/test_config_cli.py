import json
import subprocess
import sys

import pytest

from dirac_eq.cli import main
from dirac_eq.config import EXPERIMENTS, ConfigError, ExperimentConfig, default_config, load_config
from dirac_eq.fieldio import read_field
from dirac_eq.report import ExperimentResult, emit_report, file_digest

SMALL_ENSEMBLE = """
[grid]
n = 32
L = 32
[sampler]
kernel_radius = 1.5
seed = 77
[experiment]
times = 0, 4
M = 300
spot_checks = 2
write_projections = true
"""


@pytest.mark.parametrize("exp", EXPERIMENTS)
def test_defaults_validate_and_roundtrip(exp):
    cfg = default_config(exp).validate()
    again = ExperimentConfig.from_string(cfg.to_ini(), exp)
    assert again == cfg and again.digest() == cfg.digest()


def test_time_ranges_and_overrides():
    cfg = ExperimentConfig.from_string("[experiment]\ntimes = 1:3:0.5, 10\n", "decay")
    assert cfg.get("experiment", "times") == (1.0, 1.5, 2.0, 2.5, 3.0, 10.0)
    assert cfg.replace(sampler__seed=5).seed == 5
    with pytest.raises(ConfigError):
        cfg.replace(grid__nn=3)


@pytest.mark.parametrize("text, key", [
    ("[grid]\nnn = 4\n", "grid.nn"),
    ("[nope]\na = 1\n", "[nope]"),
    ("[grid]\nn = 7\n", "grid"),
    ("[physics]\nm = -1\n", "physics.m"),
    ("[experiment]\nseminorm_radii = 40\n", "experiment.seminorm_radii"),
])
def test_invalid_configs_name_the_key(text, key):
    with pytest.raises(ConfigError, match=key.replace("[", r"\[").replace("]", r"\]")):
        ExperimentConfig.from_string(text, "verify").validate()


def test_cli_rejects_bad_config(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("[experiment]\nseminorm_radii = 40\n")
    assert main(["verify", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "experiment.seminorm_radii" in capsys.readouterr().err
    p.write_text("[grid]\nnn = 4\n")
    assert main(["verify", "--config", str(p)]) == 2
    assert main(["verify", "--config", str(tmp_path / "missing.ini")]) == 2
    big = tmp_path / "big.ini"
    big.write_text("[experiment]\ntimes = 40\n")
    assert main(["rooms", "--config", str(big)]) == 2


def test_print_config(capsys):
    assert main(["decay", "--print-config", "--seed", "12"]) == 0
    text = capsys.readouterr().out
    cfg = ExperimentConfig.from_string(text, "decay")
    assert cfg.seed == 12 and cfg.grid.n == 128


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "dirac_eq", "covariance", "--print-config"],
                         capture_output=True, text=True, check=True).stdout
    assert "kind = gaussian_spectral" in out


def test_verify_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["verify", "--out", str(a), "--dump-fields"]) == 0
    assert main(["verify", "--out", str(b)]) == 0
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
    man = json.loads((a / "manifest.json").read_text())
    assert man["passed"] and man["config_sha256"] == default_config("verify").digest()
    for entry in man["files"]:
        assert file_digest(a / entry["path"]) == entry["sha256"]
    dumps = sorted((a / "fields").glob("*.bin"))
    assert dumps and read_field(dumps[0]).grid.n == 64
    assert load_config(a / "config.ini", "verify") == default_config("verify")


def test_small_ensemble_run(tmp_path, capsys):
    cfg = tmp_path / "e.ini"
    cfg.write_text(SMALL_ENSEMBLE)
    out = tmp_path / "e"
    status = main(["ensemble", "--config", str(cfg), "--out", str(out), "--threads", "1"])
    assert status in (0, 1)
    summary = json.loads((out / "summary.json").read_text())
    names = {c["name"] for c in summary["checks"]}
    assert "adjoint_vs_forward" in names
    lines = (out / "projections.csv").read_text().splitlines()
    assert lines[0] == "sample_id,t,phi_id,value" and len(lines) == 1 + 300 * 2
    assert "experiment ensemble" in capsys.readouterr().out


def test_empty_report_warns(tmp_path):
    with pytest.warns(RuntimeWarning, match="empty"):
        files = emit_report(ExperimentResult("nothing"), tmp_path)
    data = json.loads((tmp_path / "summary.json").read_text())
    assert data["checks"] == [] and data["passed"] is True
    assert {p.name for p in files} == {"summary.json", "report.txt"}
