"""Experiment pipeline: sample -> reconstruct -> analyze, plus bound tables and sweeps.

Subcommands
    sample      generate M reproducible quadrature batches
    reconstruct build per-replicate Wigner grids and their average, per beta
    analyze     L2 errors vs. the closed-form bound + witness statistics
    sweep-beta  bound curve Delta(beta) as CSV (witness columns when available)
    table1      two-row bound/numeric comparison table

Configuration is a diff-able `key = value` INI file with one section per
stage; every output embeds the SHA-256 of its inputs, identical configs
reproduce outputs byte for byte, and mixed-provenance inputs are refused.
Exit codes: 0 success, 2 configuration/validation, 3 I/O, 4 numerical.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .analysis import (
    ErrorReport,
    delta_terms,
    l2_error,
    mean_square_error,
    sweep_beta,
    sweep_terms_csv,
    witness_mean_from_grid,
    witness_stats,
)
from .estimator import (
    ReconstructionParams,
    mean_grid,
    optimal_bandwidth,
    read_grid,
    reconstruct_exact,
    reconstruct_fast,
    write_grid,
)
from .sampling import _atomic_bytes, generate_batch, read_batch, write_batch
from .states import CatState, NoiseModel

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

DEFAULT_ALPHA1 = 3.0 / math.sqrt(2.0)

PRESETS = {
    "desk": {"n": 500_000, "replicates": 5, "grid_size": 101},
    "paper": {"n": 16_000_000, "replicates": 10, "grid_size": 201},
}


class ConfigError(Exception):
    """Invalid configuration or provenance; message names the offending field."""


@dataclass(frozen=True)
class ExperimentConfig:
    alpha1: float = DEFAULT_ALPHA1
    alpha2: float = 0.0
    eta: float = 0.45
    n: int = 16_000_000
    replicates: int = 10
    seed: int = 7
    betas: tuple[float, ...] = (0.05, 0.1)
    grid_size: int = 201
    path: str = "fast"
    output_dir: str = "catomo-out"
    workers: int = 1

    @property
    def state(self) -> CatState:
        return CatState(self.alpha1, self.alpha2)

    @property
    def noise(self) -> NoiseModel:
        return NoiseModel(self.eta)


def _validate(cfg: ExperimentConfig, source: str | None = None) -> ExperimentConfig:
    def bad(section, key, msg):
        loc = f" ({_line_of(source, section, key)})" if source else ""
        raise ConfigError(f"{section}.{key}{loc}: {msg}")

    if not (math.isfinite(cfg.alpha1) and math.isfinite(cfg.alpha2)):
        bad("state", "alpha1", "amplitude must be finite")
    if not (0.0 < cfg.eta <= 1.0):
        bad("noise", "eta", f"efficiency must lie in (0, 1], got {cfg.eta}")
    if cfg.n < 1:
        bad("sampling", "n", "need at least one sample")
    if cfg.replicates < 1:
        bad("sampling", "replicates", "need at least one replicate")
    for beta in cfg.betas:
        if not (0.0 < beta < 0.25):
            bad("reconstruction", "betas", f"beta must lie in (0, 1/4), got {beta}")
    if cfg.grid_size < 3 or cfg.grid_size % 2 == 0:
        bad("reconstruction", "grid_size", "grid size must be an odd integer >= 3")
    if cfg.path not in ("fast", "exact"):
        bad("reconstruction", "path", f"path must be 'fast' or 'exact', got {cfg.path!r}")
    if cfg.workers < 1:
        bad("run", "workers", "workers must be >= 1")
    return cfg


def _line_of(path: str | None, section: str, key: str) -> str:
    """Best-effort line locator for config diagnostics."""
    if not path or not os.path.exists(path):
        return "no file"
    current = None
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.strip()
                if line.startswith("[") and line.endswith("]"):
                    current = line[1:-1].strip().lower()
                elif "=" in line and current == section.lower():
                    if line.split("=", 1)[0].strip().lower() == key.lower():
                        return f"{path}:{lineno}"
    except OSError:
        pass
    return path


def _physics_text(cfg: ExperimentConfig) -> str:
    """The sections that determine results (the [run] section does not)."""
    return (
        "[state]\n"
        f"alpha1 = {cfg.alpha1!r}\n"
        f"alpha2 = {cfg.alpha2!r}\n"
        "\n[noise]\n"
        f"eta = {cfg.eta!r}\n"
        "\n[sampling]\n"
        f"n = {cfg.n}\n"
        f"replicates = {cfg.replicates}\n"
        f"seed = {cfg.seed}\n"
        "\n[reconstruction]\n"
        f"betas = {', '.join(repr(b) for b in cfg.betas)}\n"
        f"grid_size = {cfg.grid_size}\n"
        f"path = {cfg.path}\n"
    )


def config_text(cfg: ExperimentConfig) -> str:
    """Canonical serialized form (round-trips through load_config losslessly)."""
    return (
        _physics_text(cfg)
        + "\n[run]\n"
        f"output_dir = {cfg.output_dir}\n"
        f"workers = {cfg.workers}\n"
    )


def save_config(cfg: ExperimentConfig, path: str) -> None:
    _atomic_bytes(path, config_text(cfg).encode("utf-8"))


def load_config(path: str) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    def get(section, key, cast, default):
        if not parser.has_option(section, key):
            return default
        raw = parser.get(section, key)
        try:
            return cast(raw)
        except ValueError as exc:
            raise ConfigError(
                f"{section}.{key} ({_line_of(path, section, key)}): cannot parse {raw!r}"
            ) from exc

    def parse_betas(raw: str) -> tuple[float, ...]:
        return tuple(float(tok) for tok in raw.replace(",", " ").split())

    cfg = ExperimentConfig(
        alpha1=get("state", "alpha1", float, DEFAULT_ALPHA1),
        alpha2=get("state", "alpha2", float, 0.0),
        eta=get("noise", "eta", float, 0.45),
        n=get("sampling", "n", int, 16_000_000),
        replicates=get("sampling", "replicates", int, 10),
        seed=get("sampling", "seed", int, 7),
        betas=get("reconstruction", "betas", parse_betas, (0.05, 0.1)),
        grid_size=get("reconstruction", "grid_size", int, 201),
        path=get("reconstruction", "path", str, "fast"),
        output_dir=get("run", "output_dir", str, "catomo-out"),
        workers=get("run", "workers", int, 1),
    )
    return _validate(cfg, source=path)


def config_sha(cfg: ExperimentConfig) -> str:
    """Provenance hash over the result-determining configuration."""
    return hashlib.sha256(_physics_text(cfg).encode("utf-8")).hexdigest()


def file_sha(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# pipeline stages
# ---------------------------------------------------------------------------

def _batch_path(cfg: ExperimentConfig, rep: int) -> str:
    return os.path.join(cfg.output_dir, "batches", f"batch_r{rep:02d}.qb")


def _grid_dir(cfg: ExperimentConfig, beta: float) -> str:
    return os.path.join(cfg.output_dir, "grids", f"beta_{beta:g}")


def _analysis_dir(cfg: ExperimentConfig, beta: float) -> str:
    return os.path.join(cfg.output_dir, "analysis", f"beta_{beta:g}")


def _sample_one(cfg: ExperimentConfig, rep: int, source: str) -> str:
    batch = generate_batch(cfg.state, cfg.noise, cfg.n, cfg.seed, replicate=rep)
    batch.source_sha256 = source
    path = _batch_path(cfg, rep)
    write_batch(batch, path)
    return path


def cmd_sample(cfg: ExperimentConfig) -> int:
    os.makedirs(os.path.join(cfg.output_dir, "batches"), exist_ok=True)
    source = config_sha(cfg)
    reps = range(cfg.replicates)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            paths = list(pool.map(_sample_one, [cfg] * cfg.replicates, reps, [source] * cfg.replicates))
    else:
        paths = [_sample_one(cfg, rep, source) for rep in reps]
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK


def _reconstruct_one(cfg: ExperimentConfig, beta: float, rep: int) -> str:
    path = _batch_path(cfg, rep)
    if not os.path.exists(path):
        raise ConfigError(f"missing batch file {path}; run `sample` first")
    batch = read_batch(path)
    if not (math.isclose(batch.noise.eta, cfg.eta, rel_tol=0, abs_tol=0)
            and batch.state.alpha1 == cfg.alpha1 and batch.state.alpha2 == cfg.alpha2
            and batch.n == cfg.n):
        raise ConfigError(
            f"provenance mismatch: {path} holds (alpha=({batch.state.alpha1}, {batch.state.alpha2}), "
            f"eta={batch.noise.eta}, n={batch.n}) but the config declares "
            f"(alpha=({cfg.alpha1}, {cfg.alpha2}), eta={cfg.eta}, n={cfg.n})"
        )
    batch.source_sha256 = file_sha(path)
    params = ReconstructionParams.for_experiment(cfg.n, beta, cfg.noise, grid_size=cfg.grid_size)
    grid = reconstruct_fast(batch, params) if cfg.path == "fast" else reconstruct_exact(batch, params)
    out = os.path.join(_grid_dir(cfg, beta), f"grid_r{batch.replicate:02d}.wg")
    write_grid(grid, out)
    return out


def cmd_reconstruct(cfg: ExperimentConfig) -> int:
    for beta in cfg.betas:
        os.makedirs(_grid_dir(cfg, beta), exist_ok=True)
        reps = range(cfg.replicates)
        if cfg.workers > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                paths = list(pool.map(_reconstruct_one, [cfg] * cfg.replicates, [beta] * cfg.replicates, reps))
        else:
            paths = [_reconstruct_one(cfg, beta, rep) for rep in reps]
        grids = [read_grid(p) for p in paths]
        avg = mean_grid(grids)
        avg_path = os.path.join(_grid_dir(cfg, beta), "grid_avg.wg")
        write_grid(avg, avg_path)
        for path in paths + [avg_path]:
            print(f"wrote {path}")
    return EXIT_OK


def _load_replicate_grids(cfg: ExperimentConfig, beta: float):
    gdir = _grid_dir(cfg, beta)
    paths = [os.path.join(gdir, f"grid_r{rep:02d}.wg") for rep in range(cfg.replicates)]
    missing = [p for p in paths if not os.path.exists(p)]
    if missing:
        raise ConfigError(
            f"found {cfg.replicates - len(missing)} grids for beta={beta:g} but the config "
            f"declares {cfg.replicates} replicates (first missing: {missing[0]})"
        )
    batch_shas = set()
    for rep in range(cfg.replicates):
        bpath = _batch_path(cfg, rep)
        if os.path.exists(bpath):
            batch_shas.add(file_sha(bpath))
    grids = []
    for path in paths:
        grid = read_grid(path)
        meta = grid.meta
        if not (meta.get("eta") == cfg.eta and meta.get("alpha1") == cfg.alpha1
                and meta.get("n") == cfg.n and meta.get("beta") == beta):
            raise ConfigError(f"provenance mismatch: {path} was built under different parameters")
        if batch_shas and meta.get("source_sha256") not in batch_shas:
            raise ConfigError(f"provenance mismatch: {path} does not descend from the current batches")
        grids.append((path, grid))
    return grids


def _analyze_beta(cfg: ExperimentConfig, beta: float) -> dict:
    grids = _load_replicate_grids(cfg, beta)
    state = cfg.state
    errors = [l2_error(grid, state) for _, grid in grids]
    tv, tt, tb = delta_terms(cfg.n, beta, cfg.eta, state)
    means = [witness_mean_from_grid(grid, state) for _, grid in grids]
    stats = witness_stats(means, state)
    r, _ = optimal_bandwidth(cfg.n, beta, cfg.noise.gamma)
    core = ErrorReport(
        delta_numeric=mean_square_error(errors),
        delta_bound=tv + tt + tb,
        term_variance=tv,
        term_tail=tt,
        term_bias=tb,
        m=cfg.replicates,
        params={
            "alpha1": cfg.alpha1, "alpha2": cfg.alpha2, "eta": cfg.eta,
            "beta": beta, "n": cfg.n, "r": r, "h": 1.0 / r,
            "grid_size": cfg.grid_size, "path": cfg.path, "seed": cfg.seed,
        },
    )
    report = core.as_dict()
    report.update({
        "per_replicate_errors": errors,
        "config_sha256": config_sha(cfg),
        "grid_sha256": [file_sha(p) for p, _ in grids],
    })
    adir = _analysis_dir(cfg, beta)
    os.makedirs(adir, exist_ok=True)
    _atomic_bytes(os.path.join(adir, "error_report.json"),
                  json.dumps(report, sort_keys=True, indent=2).encode("utf-8"))
    _atomic_bytes(os.path.join(adir, "witness_stats.json"),
                  json.dumps(stats.as_dict(), sort_keys=True, indent=2).encode("utf-8"))
    return {"beta": beta, "report": report, "witness": stats}


def _format_table(rows) -> str:
    lines = [f"{'beta':>6}  {'Delta_numeric':>14}  {'Delta_bound':>12}"]
    for row in rows:
        numeric = row.get("delta_numeric")
        numeric_s = f"{numeric:.4g}" if numeric is not None else "-"
        lines.append(f"{row['beta']:>6g}  {numeric_s:>14}  {row['delta_bound']:>12.4g}")
    return "\n".join(lines)


def cmd_analyze(cfg: ExperimentConfig) -> int:
    rows = []
    for beta in cfg.betas:
        result = _analyze_beta(cfg, beta)
        report, stats = result["report"], result["witness"]
        rows.append({"beta": beta, "delta_numeric": report["delta_numeric"],
                     "delta_bound": report["delta_bound"]})
        print(f"beta={beta:g}: Delta_numeric={report['delta_numeric']:.6g} "
              f"Delta_bound={report['delta_bound']:.6g}")
        print(f"  witness: av={stats.av:.6g} sd={stats.sd:.6g} "
              f"separated={str(stats.separated).lower()} "
              f"(pure {stats.pure_ref:.6g}, incoherent {stats.incoherent_ref:.6g})")
    print(_format_table(rows))
    return EXIT_OK


def cmd_sweep_beta(cfg: ExperimentConfig, points: int = 23) -> int:
    betas = np.linspace(0.02, 0.24, points)
    rows = sweep_beta(cfg.n, cfg.eta, cfg.state, betas)
    lines = ["beta,delta,av,sd,separated"]
    for row in rows:
        av = sd = separated = ""
        wpath = os.path.join(_analysis_dir(cfg, row["beta"]), "witness_stats.json")
        if os.path.exists(wpath):
            with open(wpath, "r", encoding="utf-8") as fh:
                stats = json.load(fh)
            av = f"{stats['av']:.17g}"
            sd = f"{stats['sd']:.17g}"
            separated = str(stats["separated"]).lower()
        lines.append(f"{row['beta']:.17g},{row['delta']:.17g},{av},{sd},{separated}")
    os.makedirs(cfg.output_dir, exist_ok=True)
    out = os.path.join(cfg.output_dir, f"sweep_eta{cfg.eta:g}.csv")
    _atomic_bytes(out, ("\n".join(lines) + "\n").encode("utf-8"))
    terms_out = os.path.join(cfg.output_dir, f"sweep_terms_eta{cfg.eta:g}.csv")
    _atomic_bytes(terms_out, sweep_terms_csv(rows).encode("utf-8"))
    print(f"wrote {out}")
    print(f"wrote {terms_out}")
    return EXIT_OK


def cmd_table1(cfg: ExperimentConfig) -> int:
    rows = []
    for beta in cfg.betas:
        tv, tt, tb = delta_terms(cfg.n, beta, cfg.eta, cfg.state)
        numeric = None
        rpath = os.path.join(_analysis_dir(cfg, beta), "error_report.json")
        if os.path.exists(rpath):
            with open(rpath, "r", encoding="utf-8") as fh:
                numeric = json.load(fh)["delta_numeric"]
        rows.append({"beta": beta, "delta_numeric": numeric, "delta_bound": tv + tt + tb})
    print(_format_table(rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment config file (INI)")
    common.add_argument("--preset", choices=sorted(PRESETS), help="named scale preset")
    common.add_argument("--workers", type=int, metavar="N", help="parallel worker count")
    common.add_argument("--seed", type=int, metavar="S", help="override the master seed")
    common.add_argument("--output-dir", metavar="DIR", help="override the output directory")
    route = common.add_mutually_exclusive_group()
    route.add_argument("--fast", dest="path", action="store_const", const="fast",
                       help="binned reconstruction path (default)")
    route.add_argument("--exact", dest="path", action="store_const", const="exact",
                       help="direct per-sample reconstruction path")

    parser = argparse.ArgumentParser(prog="catomo", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sample", parents=[common], help="generate quadrature batches")
    sub.add_parser("reconstruct", parents=[common], help="reconstruct Wigner grids")
    sub.add_parser("analyze", parents=[common], help="errors, bounds and witness statistics")
    sweep = sub.add_parser("sweep-beta", parents=[common], help="bound curve over beta as CSV")
    sweep.add_argument("--points", type=int, default=23, help="number of sweep points")
    sub.add_parser("table1", parents=[common], help="bound/numeric comparison table")
    return parser


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.preset:
        cfg = replace(cfg, **PRESETS[args.preset])
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    if args.output_dir is not None:
        cfg = replace(cfg, output_dir=args.output_dir)
    if args.path is not None:
        cfg = replace(cfg, path=args.path)
    return _validate(cfg, source=args.config)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _resolve_config(args)
        if args.command == "sample":
            return cmd_sample(cfg)
        if args.command == "reconstruct":
            return cmd_reconstruct(cfg)
        if args.command == "analyze":
            return cmd_analyze(cfg)
        if args.command == "sweep-beta":
            return cmd_sweep_beta(cfg, points=args.points)
        if args.command == "table1":
            return cmd_table1(cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OverflowError, FloatingPointError, RuntimeError, ValueError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
