import csv
import json

import pytest

import qbcharge.sweep as sweep
from qbcharge.cli import main
from qbcharge.collision import ProtocolConfig
from qbcharge.manifest import ENV_OUTPUT_ROOT, ENV_THREADS, parse_manifest_text
from qbcharge.sweep import (INDEX_NAME, SUMMARY_NAME, convergence_report, emit_plot_scripts,
                            fit_index, run_sweep)
from qbcharge.transmon import TransmonSpec

SINGLE = "[sweep]\ng = 4e-3\n[protocol]\nn_collisions = 10\n"
SMALL_GRID = """
[sweep]
g = 4e-3, 8e-3
q = 0.25, 0.5
[protocol]
n_collisions = 60
record_every = 5
"""


def csv_payloads(path):
    return {p.name: p.read_bytes() for p in sorted(path.glob("*.csv"))}


def test_single_point_csv(tmp_path):
    summary = run_sweep(parse_manifest_text(SINGLE), tmp_path, workers=1)
    assert summary["completed"] == 1 and not summary["failed"]
    files = list(tmp_path.glob("traj_*.csv"))
    assert len(files) == 1
    rows = list(csv.DictReader(files[0].open()))
    assert len(rows) == 11 and rows[0]["n"] == "0"
    assert b"\r\n" not in files[0].read_bytes()
    assert summary["validity_checks"] > 0 and summary["wall_time_s"] >= 0


def test_index_records_defaults(tmp_path):
    run_sweep(parse_manifest_text(SINGLE), tmp_path, workers=1)
    index = json.loads((tmp_path / INDEX_NAME).read_text())
    assert index["manifest"]["transmon"]["battery_levels"] == 15
    assert index["manifest"]["transmon"]["charge_cutoff"] == 35
    assert index["product_size"] == 1 and index["points"][0]["status"] == "ok"
    assert (tmp_path / SUMMARY_NAME).is_file()


def test_determinism_across_runs_and_workers(tmp_path):
    m = parse_manifest_text(SMALL_GRID)
    run_sweep(m, tmp_path / "a", workers=1)
    run_sweep(m, tmp_path / "b", workers=1)
    run_sweep(m, tmp_path / "c", workers=2)
    a = csv_payloads(tmp_path / "a")
    assert len(a) == 4 + 2  # four trajectories, two density tables
    assert a == csv_payloads(tmp_path / "b") == csv_payloads(tmp_path / "c")
    assert (tmp_path / "a" / INDEX_NAME).read_bytes() == (tmp_path / "c" / INDEX_NAME).read_bytes()


def test_density_table(tmp_path):
    run_sweep(parse_manifest_text(SMALL_GRID), tmp_path, workers=1)
    index = json.loads((tmp_path / INDEX_NAME).read_text())
    assert len(index["densities"]) == 2
    rows = list(csv.DictReader((tmp_path / index["densities"][0]["file"]).open()))
    assert list(rows[0]) == ["n", "q", "delta_E_over_Ef"]
    assert len(rows) == 13 * 2
    assert {float(r["q"]) for r in rows} == {0.25, 0.5}


def test_failure_isolation(tmp_path, monkeypatch):
    real = sweep.run_protocol

    def flaky(config: ProtocolConfig):
        if config.coupling_g == 8e-3 and config.ancilla.q == 0.25:
            raise FloatingPointError("injected")
        return real(config)

    monkeypatch.setattr(sweep, "run_protocol", flaky)
    m = parse_manifest_text(SMALL_GRID)
    summary = run_sweep(m, tmp_path / "bad", workers=1)
    assert summary["completed"] == 3
    assert len(summary["failed"]) == 1 and "injected" in summary["failed"][0]["error"]
    monkeypatch.setattr(sweep, "run_protocol", real)
    run_sweep(m, tmp_path / "good", workers=1)
    bad, good = csv_payloads(tmp_path / "bad"), csv_payloads(tmp_path / "good")
    failed = summary["failed"][0]["file"]
    assert failed not in bad
    for name, payload in bad.items():
        if name.startswith("traj_"):
            assert payload == good[name]


def test_convergence_examples():
    spec = TransmonSpec()
    r = convergence_report(spec, ProtocolConfig(4e-3, tau=1.0, n_collisions=1000),
                           variants=[(35, 20)])
    assert r["rows"][0]["max_deviation"] <= 1e-3 and not r["flagged"]
    r = convergence_report(TransmonSpec(battery_levels=9),
                           ProtocolConfig(5e-2, tau=2.83, n_collisions=300), variants=[(35, 15)])
    assert r["rows"][0]["max_deviation"] > 1e-3 and r["flagged"]
    r = convergence_report(spec, ProtocolConfig(4e-3, n_collisions=10), variants=[(45, 15)])
    assert r["rows"][0]["bound_level_shift"] <= 1e-8


def test_default_convergence_variants():
    r = convergence_report(TransmonSpec(), ProtocolConfig(4e-3, n_collisions=20))
    assert [(x["charge_cutoff"], x["battery_levels"]) for x in r["rows"]] == [
        (35, 20), (35, 30), (45, 15), (70, 15)]


def test_plot_scripts(tmp_path):
    run_sweep(parse_manifest_text(SINGLE), tmp_path / "one", workers=1)
    scripts = emit_plot_scripts(tmp_path / "one" / INDEX_NAME)
    assert len(scripts) == 1
    text = scripts[0].read_text()
    compile(text, str(scripts[0]), "exec")
    assert "efficiency" in text and "delta_E_over_Ef" in text

    run_sweep(parse_manifest_text(SMALL_GRID), tmp_path / "grid", workers=1)
    scripts = emit_plot_scripts(tmp_path / "grid" / INDEX_NAME)
    heat = [s for s in scripts if "density" in s.name]
    assert len(scripts) == 6 and len(heat) == 2
    assert "pcolormesh" in heat[0].read_text()


def test_plot_scripts_edge_cases(tmp_path):
    (tmp_path / INDEX_NAME).write_text(json.dumps({"points": [], "densities": []}))
    with pytest.warns(RuntimeWarning, match="no trajectories"):
        assert emit_plot_scripts(tmp_path / INDEX_NAME) == []
    run_sweep(parse_manifest_text(SINGLE), tmp_path / "x", workers=1)
    next((tmp_path / "x").glob("traj_*.csv")).unlink()
    with pytest.raises(FileNotFoundError):
        emit_plot_scripts(tmp_path / "x" / INDEX_NAME)


def test_fit_index(tmp_path):
    text = "[sweep]\ng = 1e-2, 2e-2, 3e-2\nq = 0.05, 0.25, 0.5\n[protocol]\nn_collisions = 3000\n"
    run_sweep(parse_manifest_text(text), tmp_path, workers=1)
    fits = fit_index(tmp_path / INDEX_NAME)
    assert len(fits["damped_cosine"]) == 9 and not fits["errors"]
    law = fits["frequency_power_law"]["tau=1,c=1"]
    assert law["params"]["coupling_exponent"] == pytest.approx(1.0, abs=0.05)
    assert law["params"]["population_exponent"] == pytest.approx(0.5, abs=0.05)
    damping = fits["damping_power_law"]["tau=1,c=1"]
    assert set(damping["per_coupling"]) == {"0.01", "0.02", "0.03"}
    assert json.loads((tmp_path / "fits.json").read_text())["frequency_power_law"]


# command line -------------------------------------------------------------

@pytest.fixture
def manifest_file(tmp_path, monkeypatch):
    monkeypatch.setenv(ENV_OUTPUT_ROOT, str(tmp_path / "out"))
    monkeypatch.setenv(ENV_THREADS, "1")
    path = tmp_path / "m.ini"
    path.write_text(SINGLE)
    return path


def test_cli_verbs(manifest_file, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["spectrum", str(manifest_file)]) == 0
    assert (out / "spectrum.csv").is_file() and (out / "dispersion.csv").is_file()
    assert main(["run", str(manifest_file), "n_collisions=2000", "--show"]) == 0
    assert "[sweep]" in capsys.readouterr().out
    assert main(["fit", str(manifest_file)]) == 0
    assert (out / "fits.json").is_file()
    assert main(["plots", str(manifest_file)]) == 0
    assert list((out / "plots").glob("plot_*.py"))
    assert main(["converge", str(manifest_file)]) == 0
    assert json.loads((out / "convergence.json").read_text())["rows"]


def test_cli_errors(manifest_file, tmp_path, capsys):
    assert main(["run", str(manifest_file), "q=0.25,0.5"]) == 2
    assert main(["sweep", str(manifest_file), "bogus=1"]) == 2
    assert "unknown key" in capsys.readouterr().err
    assert main(["fit", str(manifest_file), "--index", str(tmp_path / "none.json")]) == 2
    with pytest.raises(SystemExit):
        main(["teleport", str(manifest_file)])


def test_cli_sweep_exit_status_on_failure(manifest_file, monkeypatch):
    def broken(config):
        raise RuntimeError("boom")

    monkeypatch.setattr(sweep, "run_protocol", broken)
    assert main(["sweep", str(manifest_file)]) == 1
