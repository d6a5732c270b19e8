"""Command-line frontend: build-matrix | propagate | ipsa | vars | mc | bench.

Every subcommand reads one YAML run-config, writes CSVs and a manifest.json
under --out-dir, and is deterministic given (config, seed) apart from
wall-clock fields. Exit codes: 0 success, 1 runtime error, 2 config error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .bench import Thresholds, assert_complexity, run_sweep
from .config import RunConfig
from .distributions import scenario_matrix
from .engine import (
    load_matrix,
    matrix_from_model,
    matrix_manifest,
    propagate_many,
    save_matrix,
)
from .errors import ConfigError, VupropError
from .grid import make_grid
from .ipsa import (
    deviation_statistic_matrix,
    output_matrix,
    reference_curve,
    summarize,
    to_deviations,
)
from .mc import McConfig, mc_propagate_many
from .variogram import integrated_variogram, local_square_deviation


def _write_heatmap(path, col_labels, row_labels, values):
    """First row: column labels (locations); first column: row labels (bin
    centers); body: probabilities."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + [repr(float(v)) for v in col_labels])
        for label, row in zip(row_labels, values):
            writer.writerow([repr(float(label))] + [repr(float(v)) for v in row])


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def _grid_hash(spec) -> str:
    blob = json.dumps(
        [[d.name, d.lower, d.upper, d.count, d.role] for d in spec.dims]
    ).encode()
    return hashlib.sha256(blob).hexdigest()


def _manifest(out_dir: Path, cfg: RunConfig, command: str, extra: dict, t0: float):
    manifest = {
        "command": command,
        "version": __version__,
        "config": cfg.raw,
        "seed": cfg.seed,
        "elapsed_s": time.perf_counter() - t0,
    }
    manifest.update(extra)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)


def cmd_build_matrix(cfg: RunConfig, out_dir: Path, args) -> dict:
    model = cfg.model()
    grid = make_grid(cfg.grid_spec())
    matrix = matrix_from_model(model, grid, cfg.output()["k"])
    sidecar = out_dir / "model_matrix.vupm"
    save_matrix(sidecar, matrix)
    return {
        "sidecar": sidecar.name,
        "matrix": matrix_manifest(matrix, {"grid_hash": _grid_hash(grid.spec),
                                           "model_hash": model.digest}),
    }


def _load_or_build(cfg: RunConfig, grid, model, k, matrix_path):
    if matrix_path is None:
        return matrix_from_model(model, grid, k), "built"
    matrix = load_matrix(matrix_path, grid=grid, model_name=model.name)
    manifest_path = Path(matrix_path).with_suffix(".json")
    if manifest_path.exists():
        with open(manifest_path) as fh:
            recorded = json.load(fh)
        recorded_hash = recorded.get("matrix", {}).get("grid_hash")
        if recorded_hash and recorded_hash != _grid_hash(grid.spec):
            raise VupropError(
                f"{matrix_path}: sidecar was built on a different grid than the config"
            )
    return matrix, "loaded"


def cmd_propagate(cfg: RunConfig, out_dir: Path, args) -> dict:
    model = cfg.model()
    grid = make_grid(cfg.grid_spec())
    scenario = cfg.scenario()
    matrix, source = _load_or_build(cfg, grid, model, cfg.output()["k"], args.matrix)
    P = scenario_matrix(grid, scenario)
    out = propagate_many(matrix, P)
    _write_heatmap(out_dir / "output_matrix.csv", out.locations,
                   out.binning.centers, out.values)
    return {"matrix_source": source, "K": out.binning.K, "L": out.n_locations}


def cmd_ipsa(cfg: RunConfig, out_dir: Path, args) -> dict:
    model = cfg.model()
    grid = make_grid(cfg.grid_spec())
    scenario = cfg.scenario()
    opts = cfg.output()
    x_dim = next(d for d in grid.spec.dims if d.role == "x")
    if scenario.sigma_ell < x_dim.step / 10:
        print(
            f"warning: sigma_ell = {scenario.sigma_ell} is below a tenth of the "
            f"grid step {x_dim.step}; columns degenerate toward deltas",
            file=sys.stderr,
        )
    if opts["deviation_reference"] == "alpha-matched":
        ipsa = deviation_statistic_matrix(model, grid, scenario, opts["k"])
    else:
        out = output_matrix(model, grid, scenario, opts["k"],
                            shared_matrix=opts["shared_matrix"])
        y_ref = reference_curve(model, scenario.locations)
        _write_heatmap(out_dir / "output_matrix.csv", out.locations,
                       out.binning.centers, out.values)
        ipsa = to_deviations(out, y_ref)
    _write_heatmap(out_dir / "ipsa_matrix.csv", ipsa.locations,
                   ipsa.delta_centers, ipsa.values)
    summary = summarize(ipsa, opts["level"], scenario.location_weights())
    _write_rows(
        out_dir / "summary.csv",
        ["ell", "mean", "var", "argmax", "ci_lo", "ci_hi"],
        zip(summary.locations, summary.mean, summary.variance, summary.argmax,
            summary.ci_lower, summary.ci_upper),
    )
    _write_rows(out_dir / "global_marginal.csv", ["delta_y", "probability"],
                zip(summary.global_axis, summary.global_marginal))
    return {"K": ipsa.values.shape[0], "L": ipsa.n_locations,
            "reference": opts["deviation_reference"]}


def cmd_vars(cfg: RunConfig, out_dir: Path, args) -> dict:
    model = cfg.model()
    grid = make_grid(cfg.grid_spec())
    scenario = cfg.scenario()
    opts = cfg.vars()
    if args.scales:
        try:
            scales = [float(s) for s in args.scales.split(",")]
        except ValueError:
            raise ConfigError(f"--scales: not a comma-separated float list: {args.scales!r}")
    else:
        scales = opts["scales"]
    x_dim = next(d for d in grid.spec.dims if d.role == "x")
    ell_grid = make_grid(cfg.grid_spec().__class__((x_dim,)))
    extent = x_dim.upper - x_dim.lower
    alpha_ref = [0.0] * (model.arity - 1)
    results = {}
    gamma_rows = []
    for frac in scales:
        res = integrated_variogram(model, ell_grid, frac * extent,
                                   opts["v_count"], alpha_ref)
        results[f"scale_{frac}"] = {"V": res.V, "Gamma": res.Gamma,
                                    "expectation": res.expectation}
        gamma_rows.extend(zip(res.v_grid, res.gamma))
    _write_rows(out_dir / "gamma.csv", ["v", "gamma"], sorted(set(gamma_rows)))
    dev_grid = _deviation_grid(grid, scenario)
    _write_rows(
        out_dir / "delta_sq.csv", ["ell", "delta_sq"],
        ((ell, local_square_deviation(model, float(ell), scenario, dev_grid))
         for ell in scenario.locations),
    )
    return {"integrated": results}


def _deviation_grid(grid, scenario):
    """(x, alpha) grid in deviation coordinates, +-4 sigma_ell in x."""
    from .grid import Dim, GridSpec

    dims = []
    for d in grid.spec.dims:
        if d.role == "x":
            half = 4 * scenario.sigma_ell
            dims.append(Dim(d.name, -half, half, d.count, "x"))
        else:
            dims.append(d)
    return make_grid(GridSpec(tuple(dims)))


def cmd_mc(cfg: RunConfig, out_dir: Path, args) -> dict:
    model = cfg.model()
    grid = make_grid(cfg.grid_spec())
    scenario = cfg.scenario()
    opts = cfg.mc()
    k = cfg.output()["k"]
    if args.fixed_binning_from:
        binning = _binning_from_csv(args.fixed_binning_from)
    else:
        binning = matrix_from_model(model, grid, k).binning
    mc_cfg = McConfig(opts["n_samples"], k, cfg.seed, binning,
                      sort=opts["sort"] or args.mc_sort)
    out = mc_propagate_many(model, scenario, mc_cfg, grid)
    _write_heatmap(out_dir / "mc_matrix.csv", out.locations,
                   out.binning.centers, out.values)
    return {"n_samples": opts["n_samples"], "K": out.binning.K, "L": out.n_locations}


def _binning_from_csv(path):
    from .engine import OutputBinning

    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    centers = np.array([float(r[0]) for r in rows[1:]])
    if centers.size < 2:
        raise VupropError(f"{path}: need at least two bin centers to infer a binning")
    width = centers[1] - centers[0]
    return OutputBinning(centers.size, float(centers[0] - width / 2),
                         float(centers[-1] + width / 2))


def cmd_bench(cfg: RunConfig, out_dir: Path, args) -> dict:
    model = cfg.model()
    opts = cfg.bench()
    scenario = cfg.scenario()
    n_values = [int(n) for n in args.n.split(",")] if args.n else opts["n_values"]
    l_values = [int(l) for l in args.l_values.split(",")] if args.l_values else opts["l_values"]
    k = args.k or opts["k"]
    reps = args.reps or opts["reps"]
    result = run_sweep(model, cfg.grid_spec(), n_values, l_values, scenario,
                       k, reps, args.seed if args.seed is not None else cfg.seed)
    _write_rows(
        out_dir / "bench.csv",
        ["method", "N", "L", "reps", "median_s", "min_s", "max_s", "breakdown_json"],
        ((r.method, r.N, r.L, r.repetitions, r.median_s, r.min_s, r.max_s,
          json.dumps(r.breakdown)) for r in result.rows),
    )
    report = assert_complexity(result, Thresholds(**opts["thresholds"]))
    for line in report.lines():
        print(line)
    return {"complexity_checks": {k: {"passed": ok, "detail": d}
                                  for k, (ok, d) in report.checks.items()}}


_COMMANDS = {
    "build-matrix": cmd_build_matrix,
    "propagate": cmd_propagate,
    "ipsa": cmd_ipsa,
    "vars": cmd_vars,
    "mc": cmd_mc,
    "bench": cmd_bench,
}


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vuprop",
        description="Propagate input probability distributions through "
                    "discretized models and analyze input-probability sensitivity.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run-config path")
        p.add_argument("--out-dir", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="task-pool size hint (current backend is serial)")
    sub.choices["propagate"].add_argument("--matrix", help="model-matrix sidecar to reuse")
    sub.choices["vars"].add_argument("--scales", help="comma-separated domain fractions")
    sub.choices["mc"].add_argument("--fixed-binning-from",
                                   help="CSV whose bin centers fix the output binning")
    sub.choices["mc"].add_argument("--mc-sort", action="store_true",
                                   help="sort samples before binning")
    bench = sub.choices["bench"]
    bench.add_argument("--n", help="comma-separated grid sizes")
    bench.add_argument("--l-values", help="comma-separated location counts")
    bench.add_argument("--k", type=int, help="output bin count")
    bench.add_argument("--reps", type=int, help="timing repetitions")
    bench.add_argument("--seed", type=int, help="override config seed")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config)
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        extra = _COMMANDS[args.command](cfg, out_dir, args)
        _manifest(out_dir, cfg, args.command, extra, t0)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except VupropError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
