"""End-to-end command-line tests: argument/config handling, exit codes,
output files, and byte-identical reruns under a fixed seed."""

import json
import os

import numpy as np
import pytest

from pdclone.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from pdclone.data import load_dataset


@pytest.fixture
def outdir(tmp_path, monkeypatch):
    d = tmp_path / "out"
    d.mkdir()
    monkeypatch.setenv("PDCLONE_OUT_DIR", str(d))
    return d


def run(argv):
    return main([str(a) for a in argv])


@pytest.fixture
def dataset_csv(outdir):
    assert run(["simulate", "--model", "scenario1", "--seed", "11"]) == EXIT_OK
    return outdir / "scenario1_seed11.csv"


class TestSimulate:
    def test_writes_csv_and_provenance(self, outdir, dataset_csv):
        assert dataset_csv.exists()
        ds = load_dataset(dataset_csv)
        assert ds.times.size == 121
        sidecar = json.loads(
            (outdir / "scenario1_seed11.csv.provenance.json").read_text()
        )
        assert sidecar["seed"] == 11

    def test_byte_identical_rerun(self, outdir, dataset_csv):
        first = dataset_csv.read_bytes()
        assert run(["simulate", "--model", "scenario1", "--seed", "11"]) == EXIT_OK
        assert dataset_csv.read_bytes() == first

    def test_unknown_model_rejected(self, outdir, capsys):
        with pytest.raises(SystemExit):
            run(["simulate", "--model", "nope", "--seed", "1"])


class TestFitPdc:
    def fit(self, dataset_csv, seed=0, extra=()):
        return run([
            "fit-pdc", "--model", "scenario1", "--data", dataset_csv,
            "-k", "2", "-M", "80", "--rcess", "0.9", "--seed", seed, *extra,
        ])

    def test_end_to_end(self, outdir, dataset_csv, capsys):
        assert self.fit(dataset_csv) == EXIT_OK
        out = capsys.readouterr().out
        assert "PDC k=2" in out
        summary = outdir / "fit_pdc_scenario1_k2_summary.csv"
        trace = outdir / "fit_pdc_scenario1_k2_trace.csv"
        assert summary.exists() and trace.exists()
        header = trace.read_text().splitlines()[0]
        assert header.split(",")[:2] == ["r", "phi"]

    def test_byte_identical_rerun(self, outdir, dataset_csv):
        assert self.fit(dataset_csv, seed=5) == EXIT_OK
        summary = outdir / "fit_pdc_scenario1_k2_summary.csv"
        first = summary.read_bytes()
        assert self.fit(dataset_csv, seed=5) == EXIT_OK
        assert summary.read_bytes() == first

    def test_seed_changes_output(self, outdir, dataset_csv):
        summary = outdir / "fit_pdc_scenario1_k2_summary.csv"
        assert self.fit(dataset_csv, seed=1) == EXIT_OK
        first = summary.read_bytes()
        assert self.fit(dataset_csv, seed=2) == EXIT_OK
        assert summary.read_bytes() != first


class TestFitDc:
    def test_end_to_end(self, outdir, dataset_csv, capsys):
        code = run([
            "fit-dc", "--model", "scenario1", "--data", dataset_csv,
            "-k", "2", "--iterations", "1000", "--seed", "0",
        ])
        assert code == EXIT_OK
        assert (outdir / "fit_dc_scenario1_k2_summary.csv").exists()


class TestMetrics:
    def test_truth_metrics(self, outdir, dataset_csv, capsys):
        code = run([
            "metrics", "--model", "scenario1", "--data", dataset_csv,
            "--params", "2,1,7,-10,1,3",
        ])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "rmse" in out.lower()


class TestConfigHandling:
    def test_unknown_key_exits_2(self, outdir, dataset_csv, tmp_path, capsys):
        cfg = tmp_path / "bad.toml"
        cfg.write_text("[pdc]\nparticless = 100\n")
        code = run([
            "fit-pdc", "--model", "scenario1", "--data", dataset_csv,
            "--config", cfg, "--seed", "0",
        ])
        assert code == EXIT_CONFIG
        assert "particless" in capsys.readouterr().err

    def test_unknown_section_exits_2(self, outdir, dataset_csv, tmp_path):
        cfg = tmp_path / "bad2.toml"
        cfg.write_text("[sampler]\nm = 3\n")
        code = run([
            "fit-pdc", "--model", "scenario1", "--data", dataset_csv,
            "--config", cfg, "--seed", "0",
        ])
        assert code == EXIT_CONFIG

    def test_missing_config_file_exits_2(self, outdir, dataset_csv):
        code = run([
            "fit-pdc", "--model", "scenario1", "--data", dataset_csv,
            "--config", "/nonexistent/x.toml", "--seed", "0",
        ])
        assert code == EXIT_CONFIG

    def test_flag_overrides_config(self, outdir, dataset_csv, tmp_path,
                                    capsys):
        cfg = tmp_path / "ok.toml"
        cfg.write_text("[pdc]\nparticles = 40\nrcess = 0.9\n")
        code = run([
            "fit-pdc", "--model", "scenario1", "--data", dataset_csv,
            "--config", cfg, "-k", "2", "-M", "60", "--seed", "0",
        ])
        assert code == EXIT_OK
        assert "M=60" in capsys.readouterr().out

    def test_config_value_used(self, outdir, dataset_csv, tmp_path, capsys):
        cfg = tmp_path / "ok2.toml"
        cfg.write_text("[pdc]\nparticles = 40\nrcess = 0.9\n")
        code = run([
            "fit-pdc", "--model", "scenario1", "--data", dataset_csv,
            "--config", cfg, "-k", "2", "--seed", "0",
        ])
        assert code == EXIT_OK
        assert "M=40" in capsys.readouterr().out


class TestNumericalFailureExit:
    def test_schedule_error_exits_3(self, outdir, dataset_csv, tmp_path,
                                    capsys):
        cfg = tmp_path / "tight.toml"
        cfg.write_text("[pdc]\nmax_steps = 2\n")
        code = run([
            "fit-pdc", "--model", "scenario1", "--data", dataset_csv,
            "--config", cfg, "-k", "2", "-M", "60", "--seed", "0",
        ])
        assert code == EXIT_NUMERICAL
        assert "numerical failure" in capsys.readouterr().err


class TestLadderAndBenchmark:
    def test_ladder_csv(self, outdir, dataset_csv, capsys):
        cfg = outdir / "sched.toml"
        cfg.write_text("[pdc]\nrcess = 0.9\n")
        code = run([
            "ladder", "--model", "scenario1", "--data", dataset_csv,
            "--k-sequence", "1,2", "-M", "60", "--config", cfg,
            "--seed", "0",
        ])
        assert code == EXIT_OK
        files = list(outdir.glob("ladder_*.csv"))
        assert files
        header = files[0].read_text().splitlines()[0]
        assert header.startswith("k,")
        assert "lambda_S" in header

    def test_benchmark_csv(self, outdir, dataset_csv):
        cfg = outdir / "sched.toml"
        cfg.write_text("[pdc]\nrcess = 0.9\n")
        code = run([
            "benchmark", "--model", "scenario1", "--data", dataset_csv,
            "--k-grid", "1", "-M", "40", "--config", cfg, "--seed", "0",
        ])
        assert code == EXIT_OK
        files = list(outdir.glob("benchmark_*.csv"))
        assert files
        body = files[0].read_text()
        assert "pdc" in body and "dc" in body
