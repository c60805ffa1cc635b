from __future__ import annotations

import json
import math
from pathlib import Path

import pytest

from leakywire.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, OUT_DIR_ENV, SCHEMAS, main
from leakywire.kernels import PSI1


def write_config(path: Path, **overrides) -> Path:
    config = {
        "curve": {"family": "straight_line"},
        "alpha": 0.0,
        "discretization": {"half_length": 5.0, "num_points": 128},
    }
    config.update(overrides)
    path.write_text(json.dumps(config), encoding="utf-8")
    return path


def read_json(path: Path):
    return json.loads(path.read_text(encoding="utf-8"))


def test_schema_files_are_written(tmp_path):
    assert main(["schema", "--out", str(tmp_path)]) == EXIT_OK

    for name in SCHEMAS:
        assert (tmp_path / f"{name}.schema.json").is_file()
    schema = read_json(tmp_path / "run_config.schema.json")
    assert "curve" in schema["properties"]


def test_threshold(tmp_path):
    config = write_config(tmp_path / "run.json", alpha=[0.0, PSI1 / (2 * math.pi)])
    out = tmp_path / "out"
    assert main(["threshold", "--config", str(config), "--out", str(out)]) == EXIT_OK

    records = read_json(out / "threshold.json")
    assert [r["alpha"] for r in records] == [0.0, PSI1 / (2 * math.pi)]
    assert records[0]["xi_alpha"] == pytest.approx(-1.26095, abs=1e-5)
    assert records[1]["xi_alpha"] == pytest.approx(-4.0, rel=1e-14)
    assert records[1]["kappa_alpha"] == pytest.approx(2.0, rel=1e-14)


def test_out_dir_from_environment(tmp_path, monkeypatch):
    config = write_config(tmp_path / "run.json")
    monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path / "from-env"))
    assert main(["threshold", "--config", str(config)]) == EXIT_OK
    assert (tmp_path / "from-env" / "threshold.json").is_file()


def test_csv_only_format_skips_json(tmp_path):
    config = write_config(tmp_path / "run.json")
    out = tmp_path / "out"
    assert main(["threshold", "--config", str(config), "--out", str(out), "--format", "csv"]) == EXIT_OK
    assert not (out / "threshold.json").exists()


@pytest.mark.parametrize(
    "overrides",
    [
        {"discretization": {"half_length": 5.0, "num_points": 1000}},
        {"alpha": "strong"},
        {"curve": {"family": "helix"}},
        {"curve": {"family": "planar_bump", "amplitude": 0.0, "width": 1.0}},
        {"trace": {"kappas": [-1.0]}},
    ],
)
def test_invalid_config_exits_with_config_code(tmp_path, overrides):
    config = write_config(tmp_path / "run.json", **overrides)
    assert main(["threshold", "--config", str(config), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert main(["threshold", "--config", str(tmp_path / "absent.json")]) == EXIT_CONFIG


def test_malformed_config_file(tmp_path):
    config = tmp_path / "run.json"
    config.write_text("{\"curve\": ", encoding="utf-8")
    assert main(["threshold", "--config", str(config), "--out", str(tmp_path)]) == EXIT_CONFIG


@pytest.mark.parametrize("workers", ["two", "0"])
def test_invalid_workers_exit_with_config_code(tmp_path, workers):
    config = write_config(tmp_path / "run.json")
    with pytest.raises(SystemExit) as exc_info:
        main(["threshold", "--config", str(config), "--workers", workers])
    assert exc_info.value.code == EXIT_CONFIG


def test_default_output_directory(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(OUT_DIR_ENV, raising=False)
    config = write_config(tmp_path / "run.json")
    assert "output" not in read_json(config)

    assert main(["threshold", "--config", str(config), "--workers", "auto"]) == EXIT_OK
    assert (tmp_path / "leakywire-out" / "threshold.json").is_file()


def test_spectrum_straight_line_is_empty_and_reproducible(tmp_path):
    config = write_config(tmp_path / "run.json")
    first, second = tmp_path / "first", tmp_path / "second"
    assert main(["spectrum", "--config", str(config), "--out", str(first)]) == EXIT_OK
    assert main(["spectrum", "--config", str(config), "--out", str(second)]) == EXIT_OK

    records = read_json(first / "spectrum.json")
    assert records[0]["curve"] == "straight_line"
    assert records[0]["states"] == []
    assert (first / "spectrum.json").read_bytes() == (second / "spectrum.json").read_bytes()


def test_verify_lemma(tmp_path):
    config = write_config(tmp_path / "run.json", verify={"lemma": {"kappas": [1.0], "distances": [0.0, 1.0]}})
    out = tmp_path / "out"
    assert main(["verify", "--suite", "lemma", "--config", str(config), "--out", str(out)]) == EXIT_OK

    record = read_json(out / "verify_lemma.json")
    assert record["suite"] == "lemma"
    assert record["passed"]
    assert len(record["details"]["cases"]) == 2


@pytest.mark.parametrize("suite", ["positivity", "lower_bound"])
def test_verify_straight_line_suites_pass(tmp_path, suite):
    config = write_config(tmp_path / "run.json", discretization={"half_length": 10.0, "num_points": 256})
    out = tmp_path / "out"
    assert main(["verify", "--suite", suite, "--config", str(config), "--out", str(out)]) == EXIT_OK
    assert read_json(out / f"verify_{suite}.json")["passed"]


def test_verify_positivity_reports_b(tmp_path):
    config = write_config(tmp_path / "run.json", discretization={"half_length": 10.0, "num_points": 256})
    out = tmp_path / "out"
    assert main(["verify", "--suite", "positivity", "--config", str(config), "--out", str(out)]) == EXIT_OK

    details = read_json(out / "verify_positivity.json")["details"]
    assert details["b_min_entries"] == [0.0] * 6
    assert details["b_min_eigenvalues"] == pytest.approx([0.0] * 6, abs=1e-15)
    assert details["b_nonnegative"] and details["b_semidefinite"]
    assert details["b_tolerance"] == 1e-10


def test_verify_boundary_without_bound_state_fails(tmp_path):
    config = write_config(tmp_path / "run.json")
    out = tmp_path / "out"
    assert main(["verify", "--suite", "boundary", "--config", str(config), "--out", str(out)]) == EXIT_NUMERICAL

    record = read_json(out / "verify_boundary.json")
    assert not record["passed"]
    assert record["details"]["reason"] == "no bound state to verify"


def test_trace_straight_line(tmp_path):
    config = write_config(tmp_path / "run.json", trace={"kappas": [2.0], "cutoff_terms": False})
    out = tmp_path / "out"
    assert main(["trace", "--config", str(config), "--out", str(out), "--workers", "2"]) == EXIT_OK

    (record,) = read_json(out / "trace.json")
    assert record["verdict"]
    assert len(record["entries"]) == 7
    assert all(entry["cutoff"] is None for entry in record["entries"])
    assert record["cancellation_residual"] == {"minus": 0.0, "plus": 0.0}


def test_spectrum_csv_output(tmp_path):
    config = write_config(tmp_path / "run.json")
    out = tmp_path / "out"
    assert main(["spectrum", "--config", str(config), "--out", str(out), "--format", "both"]) == EXIT_OK

    assert (out / "spectrum.json").is_file()
    curve_rows = (out / "curve.csv").read_text(encoding="utf-8").splitlines()
    assert curve_rows[0] == "s,x,y,z,gamma"
    assert len(curve_rows) == 1 + 128
    symbol_rows = (out / "symbol_alpha0.csv").read_text(encoding="utf-8").splitlines()
    assert symbol_rows[0] == "p,t"
    assert len(symbol_rows) == 1 + 128


@pytest.mark.slow
def test_verify_boundary_with_default_settings(tmp_path):
    config = tmp_path / "run.json"
    config.write_text(
        json.dumps({"curve": {"family": "circular_arc_joint", "bend_angle": math.pi / 3, "radius": 1.0}}),
        encoding="utf-8",
    )
    out = tmp_path / "out"
    assert main(["verify", "--suite", "boundary", "--config", str(config), "--out", str(out)]) != EXIT_CONFIG

    details = read_json(out / "verify_boundary.json")["details"]
    assert len(details["radii"]) == 10
    assert details["radii"][-1] == pytest.approx(6.0 * 40.0 / 1024)
    assert details["direction_spread"] < 1e-2
