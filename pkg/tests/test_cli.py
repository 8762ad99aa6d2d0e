"""Pipeline orchestration: config handling, determinism, provenance, exit codes."""

import json
import os

import numpy as np
import pytest

from catomo import read_batch, read_grid
from catomo.cli import (
    EXIT_CONFIG,
    EXIT_IO,
    ExperimentConfig,
    config_sha,
    load_config,
    main,
    save_config,
)

TINY = dict(n=2000, replicates=2, seed=11, betas=(0.1,), grid_size=41, workers=1)


def tiny_config(tmp_path, **overrides):
    opts = dict(TINY)
    opts.update(overrides)
    cfg = ExperimentConfig(output_dir=str(tmp_path / "out"), **opts)
    path = str(tmp_path / "exp.ini")
    save_config(cfg, path)
    return cfg, path


def read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg, path = tiny_config(tmp_path, betas=(0.05, 0.1), eta=0.63)
        assert load_config(path) == cfg

    def test_invalid_eta_names_field(self, tmp_path):
        _, path = tiny_config(tmp_path)
        text = open(path).read().replace("eta = 0.45", "eta = 1.2")
        open(path, "w").write(text)
        with pytest.raises(Exception) as err:
            load_config(path)
        assert "noise.eta" in str(err.value)
        assert path in str(err.value)  # line-precise location

    def test_invalid_eta_exit_code(self, tmp_path):
        _, path = tiny_config(tmp_path)
        text = open(path).read().replace("eta = 0.45", "eta = 1.2")
        open(path, "w").write(text)
        assert main(["sample", "--config", path]) == EXIT_CONFIG

    def test_missing_config_is_io_error(self, tmp_path):
        assert main(["sample", "--config", str(tmp_path / "nope.ini")]) == EXIT_IO

    def test_preset_and_overrides(self, tmp_path):
        _, path = tiny_config(tmp_path)
        from catomo.cli import _build_parser, _resolve_config
        args = _build_parser().parse_args(
            ["sample", "--config", path, "--preset", "desk", "--seed", "99", "--exact"])
        cfg = _resolve_config(args)
        assert cfg.n == 500_000 and cfg.replicates == 5 and cfg.grid_size == 101
        assert cfg.seed == 99 and cfg.path == "exact"


class TestSample:
    def test_writes_replicates_and_is_idempotent(self, tmp_path):
        cfg, path = tiny_config(tmp_path)
        assert main(["sample", "--config", path]) == 0
        batch_dir = os.path.join(cfg.output_dir, "batches")
        files = sorted(os.listdir(batch_dir))
        assert files == ["batch_r00.qb", "batch_r01.qb"]
        first = [read_bytes(os.path.join(batch_dir, f)) for f in files]
        assert main(["sample", "--config", path]) == 0
        second = [read_bytes(os.path.join(batch_dir, f)) for f in files]
        assert first == second

    def test_output_dir_created(self, tmp_path):
        cfg, path = tiny_config(tmp_path)
        assert not os.path.exists(cfg.output_dir)
        assert main(["sample", "--config", path]) == 0
        assert os.path.isdir(cfg.output_dir)

    def test_batches_carry_config_hash(self, tmp_path):
        cfg, path = tiny_config(tmp_path)
        main(["sample", "--config", path])
        batch = read_batch(os.path.join(cfg.output_dir, "batches", "batch_r00.qb"))
        assert batch.source_sha256 == config_sha(cfg)
        assert batch.n == cfg.n and batch.replicate == 0

    def test_replicates_distinct(self, tmp_path):
        cfg, path = tiny_config(tmp_path)
        main(["sample", "--config", path])
        b0 = read_batch(os.path.join(cfg.output_dir, "batches", "batch_r00.qb"))
        b1 = read_batch(os.path.join(cfg.output_dir, "batches", "batch_r01.qb"))
        assert not np.array_equal(b0.x, b1.x)


class TestReconstruct:
    def test_grid_counting_contract(self, tmp_path):
        cfg, path = tiny_config(tmp_path)
        main(["sample", "--config", path])
        assert main(["reconstruct", "--config", path]) == 0
        gdir = os.path.join(cfg.output_dir, "grids", "beta_0.1")
        files = sorted(os.listdir(gdir))
        assert files == ["grid_avg.wg", "grid_r00.wg", "grid_r01.wg"]

    def test_average_is_nodewise_mean(self, tmp_path):
        cfg, path = tiny_config(tmp_path)
        main(["sample", "--config", path])
        main(["reconstruct", "--config", path])
        gdir = os.path.join(cfg.output_dir, "grids", "beta_0.1")
        g0 = read_grid(os.path.join(gdir, "grid_r00.wg"))
        g1 = read_grid(os.path.join(gdir, "grid_r01.wg"))
        avg = read_grid(os.path.join(gdir, "grid_avg.wg"))
        np.testing.assert_array_equal(avg.values, (g0.values + g1.values) / 2.0)

    def test_provenance_mismatch_refused(self, tmp_path):
        cfg, path = tiny_config(tmp_path)
        main(["sample", "--config", path])
        text = open(path).read().replace("eta = 0.45", "eta = 0.9")
        open(path, "w").write(text)
        assert main(["reconstruct", "--config", path]) == EXIT_CONFIG

    def test_missing_batches_refused(self, tmp_path):
        _, path = tiny_config(tmp_path)
        assert main(["reconstruct", "--config", path]) == EXIT_CONFIG

    def test_exact_path_selector(self, tmp_path):
        cfg, path = tiny_config(tmp_path, n=500, grid_size=21)
        main(["sample", "--config", path])
        assert main(["reconstruct", "--config", path, "--exact"]) == 0
        grid = read_grid(os.path.join(cfg.output_dir, "grids", "beta_0.1", "grid_r00.wg"))
        assert grid.meta["method"] == "exact"


class TestAnalyze:
    @pytest.fixture
    def pipeline(self, tmp_path):
        cfg, path = tiny_config(tmp_path)
        main(["sample", "--config", path])
        main(["reconstruct", "--config", path])
        return cfg, path

    def test_reports_written(self, pipeline):
        cfg, path = pipeline
        assert main(["analyze", "--config", path]) == 0
        adir = os.path.join(cfg.output_dir, "analysis", "beta_0.1")
        report = json.load(open(os.path.join(adir, "error_report.json")))
        witness = json.load(open(os.path.join(adir, "witness_stats.json")))
        assert report["m"] == 2
        assert report["delta_bound"] == pytest.approx(
            report["term_variance"] + report["term_tail"] + report["term_bias"], rel=1e-15)
        assert report["delta_numeric"] > 0
        assert len(report["per_replicate_errors"]) == 2
        assert report["config_sha256"] == config_sha(cfg)
        assert len(witness["means"]) == 2
        assert witness["pure_ref"] == 0.5

    def test_byte_deterministic(self, pipeline):
        cfg, path = pipeline
        main(["analyze", "--config", path])
        adir = os.path.join(cfg.output_dir, "analysis", "beta_0.1")
        first = {f: read_bytes(os.path.join(adir, f)) for f in os.listdir(adir)}
        main(["analyze", "--config", path])
        second = {f: read_bytes(os.path.join(adir, f)) for f in os.listdir(adir)}
        assert first == second

    def test_fewer_grids_than_declared_refused(self, pipeline):
        cfg, path = pipeline
        os.remove(os.path.join(cfg.output_dir, "grids", "beta_0.1", "grid_r01.wg"))
        assert main(["analyze", "--config", path]) == EXIT_CONFIG

    def test_foreign_grid_refused(self, pipeline):
        cfg, path = pipeline
        gdir = os.path.join(cfg.output_dir, "grids", "beta_0.1")
        grid = read_grid(os.path.join(gdir, "grid_r00.wg"))
        grid.meta["source_sha256"] = "0" * 64
        from catomo import write_grid
        write_grid(grid, os.path.join(gdir, "grid_r01.wg"))
        assert main(["analyze", "--config", path]) == EXIT_CONFIG


class TestSweepAndTable:
    def test_sweep_csv_contract(self, tmp_path):
        # bound-only sweep at the full-protocol n (no batches needed)
        cfg = ExperimentConfig(output_dir=str(tmp_path / "out"))
        path = str(tmp_path / "paper.ini")
        save_config(cfg, path)
        assert main(["sweep-beta", "--config", path, "--points", "20"]) == 0
        csv_path = os.path.join(cfg.output_dir, "sweep_eta0.45.csv")
        lines = open(csv_path).read().strip().split("\n")
        assert lines[0] == "beta,delta,av,sd,separated"
        assert len(lines) == 21
        deltas = np.array([float(row.split(",")[1]) for row in lines[1:]])
        interior = int(np.argmin(deltas))
        assert 0 < interior < deltas.size - 1

    def test_sweep_terms_csv(self, tmp_path):
        cfg = ExperimentConfig(output_dir=str(tmp_path / "out"))
        path = str(tmp_path / "paper.ini")
        save_config(cfg, path)
        main(["sweep-beta", "--config", path, "--points", "5"])
        lines = open(os.path.join(cfg.output_dir, "sweep_terms_eta0.45.csv")).read().strip().split("\n")
        assert lines[0] == "beta,delta,term_var,term_tail,term_bias"
        row = [float(tok) for tok in lines[1].split(",")]
        assert row[1] == pytest.approx(row[2] + row[3] + row[4], rel=1e-12)

    def test_numerical_failure_exit_code(self, tmp_path):
        # beta extremely close to 1/4 passes validation but overflows the bound
        cfg, path = tiny_config(tmp_path, betas=(0.2499999,))
        from catomo.cli import EXIT_NUMERIC
        assert main(["table1", "--config", path]) == EXIT_NUMERIC

    def test_sweep_includes_witness_after_analysis(self, tmp_path):
        cfg, path = tiny_config(tmp_path)
        main(["sample", "--config", path])
        main(["reconstruct", "--config", path])
        main(["analyze", "--config", path])
        main(["sweep-beta", "--config", path])
        csv_path = os.path.join(cfg.output_dir, "sweep_eta0.45.csv")
        rows = [line.split(",") for line in open(csv_path).read().strip().split("\n")[1:]]
        with_witness = [row for row in rows if row[2] != ""]
        assert len(with_witness) == 1  # exactly the analyzed beta = 0.1
        assert with_witness[0][4] in ("true", "false")

    def test_table1_bounds(self, tmp_path, capsys):
        cfg = ExperimentConfig(output_dir=str(tmp_path / "out"))
        path = str(tmp_path / "paper.ini")
        save_config(cfg, path)
        assert main(["table1", "--config", path]) == 0
        out = capsys.readouterr().out
        assert "2.392" in out and "26.07" in out
        assert "-" in out  # numeric column empty without analysis artifacts

    def test_table1_fills_numeric_after_analysis(self, tmp_path, capsys):
        cfg, path = tiny_config(tmp_path)
        main(["sample", "--config", path])
        main(["reconstruct", "--config", path])
        main(["analyze", "--config", path])
        capsys.readouterr()
        assert main(["table1", "--config", path]) == 0
        out = capsys.readouterr().out
        report = json.load(open(os.path.join(cfg.output_dir, "analysis", "beta_0.1",
                                             "error_report.json")))
        assert f"{report['delta_numeric']:.4g}" in out


class TestWorkers:
    def test_parallel_sampling_matches_serial(self, tmp_path):
        cfg, path = tiny_config(tmp_path, n=400)
        main(["sample", "--config", path])
        serial = read_bytes(os.path.join(cfg.output_dir, "batches", "batch_r00.qb"))
        cfg2 = ExperimentConfig(output_dir=str(tmp_path / "out2"), **{**TINY, "n": 400, "workers": 2})
        path2 = str(tmp_path / "exp2.ini")
        save_config(cfg2, path2)
        main(["sample", "--config", path2])
        parallel = read_bytes(os.path.join(cfg2.output_dir, "batches", "batch_r00.qb"))
        assert serial == parallel
