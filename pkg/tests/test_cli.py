import csv
import json

import pytest

from flathilbert.battery import CHECKS
from flathilbert.cli import main


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = main(["run-all", "--out", str(out), "--format", "both"])
    return code, out


def test_default_run_passes_with_every_report(full_run):
    code, out = full_run
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert [c["name"] for c in summary["checks"]] == list(CHECKS)
    assert len(summary["checks"]) == 13
    for name in CHECKS:
        report = json.loads((out / f"{name}.json").read_text())
        assert report["pass"] is True
        assert "runtime_ms" not in report


def test_mass_table_rows(full_run):
    _, out = full_run
    rows = list(csv.reader((out / "masses.csv").open()))
    assert rows[3] == ["2", "17/64", "15/64", "15/64", "17/64"]


def test_kernel_profile_shows_flat_plateaus(full_run):
    _, out = full_run
    rows = list(csv.DictReader((out / "kernel.csv").open()))
    flat = [r for r in rows if r["region"] == "Flat"]
    assert {int(r["band"]) for r in flat} >= {-1, 0, 1, 2, 3}
    assert all(float(r["dK"]) == 0 for r in flat)
    for r in flat:
        assert float(r["K"]) == 16.0 ** int(r["band"])


def test_energy_profile_grows_affinely(full_run):
    _, out = full_run
    rows = list(csv.DictReader((out / "energy_backward_hat.csv").open()))
    sums = [float(r["partial_sum"]) for r in rows]
    incs = [float(r["increment"]) for r in rows[1:]]
    assert all(b > a for a, b in zip(sums, sums[1:]))
    assert max(incs) / min(incs) < 3


def test_reports_are_reproducible(tmp_path, full_run):
    _, first = full_run
    names = ["verify-eta", "a2-scan", "reversal", "energy-backward-hat"]
    for name in names:
        assert main([name, "--out", str(tmp_path)]) == 0
        assert (tmp_path / f"{name}.json").read_bytes() == (first / f"{name}.json").read_bytes()


def test_small_base_is_rejected_unless_forced(capsys):
    assert main(["run-all", "--n-param", "8"]) == 2
    assert "allow-unsafe-params" in capsys.readouterr().err
    assert main(["certify-flatness", "--n-param", "8", "--allow-unsafe-params", "--depth", "5"]) == 1
    assert "first failing check: certify-flatness" in capsys.readouterr().err


def test_low_depth_run_widens_tolerances(tmp_path):
    assert main(["run-all", "--depth", "4", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "test-forward.json").read_text())
    assert report["bound_proxy"]["ratio_tol"] == 20.0
    assert any("low-depth" in note for note in report["notes"])


def test_depth_cap_from_environment(monkeypatch, capsys):
    monkeypatch.setenv("CE_MAX_DEPTH", "6")
    assert main(["build-measures", "--depth", "8"]) == 2
    assert "CE_MAX_DEPTH" in capsys.readouterr().err


def test_build_measures_writes_measure_files(tmp_path):
    assert main(["build-measures", "--depth", "6", "--sigma-gens", "4", "--out", str(tmp_path)]) == 0
    omega = json.loads((tmp_path / "omega_hat.json").read_text())
    assert len(omega["pieces"]) == 64
    assert len(json.loads((tmp_path / "sigma_dot.json").read_text())["atoms"]) == 15


def test_transform_eval_prints_exact_zero_at_centers(capsys):
    assert main(["transform-eval", "--measure", "omega-hat", "--points", "1/32,1/2,7/16"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert [r["value"] for r in rows] == ["0/1", "0/1", "0/1"]
    assert all(r["exact"] == "True" for r in rows)


def test_kernel_profile_to_stdout(capsys):
    assert main(["kernel-profile", "--from", "0.5", "--to", "2", "--per-decade", "10"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert rows and all(r["region"] == "Flat" and float(r["K"]) == 1 for r in rows)
