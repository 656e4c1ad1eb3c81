"""Command-line entry points.

Subcommands: sweep, redundancy, loo, rmt, hessian, report.  Exit code 0
on success, 2 on configuration or data errors, 3 on numeric failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import hessian, linalg, network, report, rmt, sweep, train
from .data import load_csv
from .exceptions import ConfigError, DataError, NumericError
from .loo import loo_linear


def _load_json(path, what: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{what} file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{what} is not valid JSON: {e}") from None


def _cmd_sweep(args) -> int:
    cfg = sweep.SweepConfig.from_json(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
        if cfg.workers < 1:
            raise ConfigError("workers must be at least 1")
    if args.seed is not None:
        cfg.seeds = (args.seed,)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "config.json", "w") as fh:
        fh.write(cfg.to_json() + "\n")
    records = sweep.width_sweep(cfg, out_dir / "records.jsonl")
    print(f"wrote {len(records)} new records to {out_dir / 'records.jsonl'}")
    return 0


def _cmd_redundancy(args) -> int:
    raw = _load_json(args.config, "config") if args.config else {}
    known = {"n", "d_base", "betas", "feature_grid", "noise_sd", "seed", "n_test"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if args.seed is not None:
        raw["seed"] = args.seed
    records = sweep.redundancy_sweep(**raw)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "redundancy.jsonl", "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    paths = report.write_redundancy_outputs(records, out_dir)
    print(f"wrote {len(records)} records and {', '.join(p.name for p in paths)}")
    return 0


def _cmd_loo(args) -> int:
    if not args.config:
        raise ConfigError("loo needs --config with the dataset description")
    raw = _load_json(args.config, "config")
    known = {"train_path", "d", "lam", "mode", "bias_column"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        path = raw["train_path"]
        d = raw["d"]
    except KeyError as e:
        raise ConfigError(f"config misses key {e}") from None
    ds = load_csv(path, d, "regression", 1)
    x = ds.x
    if raw.get("bias_column", False):
        x = np.hstack([x, np.ones((ds.n, 1))])
    rep = loo_linear(x, ds.targets[:, 0], raw.get("lam", 0.0), raw.get("mode", "asymptotic"))
    out_dir = Path(args.out)
    out = report.save_json(rep.to_dict(), out_dir / "loo.json")
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "loo.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "leverage", "residual"])
        for i, (a, r) in enumerate(zip(rep.leverages, rep.residuals)):
            writer.writerow([i, repr(float(a)), repr(float(r))])
    print(f"loo1={rep.loo1:.6g} loo2={rep.loo2:.6g} train_mse={rep.train_mse:.6g}")
    print(f"wrote {out} and loo.csv")
    return 0


def _cmd_rmt(args) -> int:
    raw = _load_json(args.config, "config") if args.config else {}
    known = {"distribution", "fit_n", "fit_trials", "check_gamma", "check_n", "check_trials"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    dist = raw.get("distribution", "gaussian")
    seed = args.seed if args.seed is not None else 0
    c = rmt.fit_edge_constant(
        dist, raw.get("fit_n", 600), raw.get("fit_trials", 5), seed
    )
    check_n = raw.get("check_n", 2000)
    gamma = raw.get("check_gamma", 0.25)
    m = int(round(gamma * check_n))
    check = rmt.edge_check(dist, m, check_n, raw.get("check_trials", 10), seed + 1, c)
    payload = {"distribution": dist, "fitted_c": c, "check": check.to_dict()}
    out_dir = Path(args.out)
    out = report.save_json(payload, out_dir / "rmt.json")
    grid_n = raw.get("fit_n", 600)
    grid = [
        rmt.edge_check(dist, max(1, int(round(g * grid_n))), grid_n,
                       raw.get("fit_trials", 5), seed + 2 + k, c)
        for k, g in enumerate(rmt.FIT_GAMMAS)
    ]
    report.write_edge_csv(grid, out_dir / "rmt.csv")
    print(
        f"fitted c={c:.4f}; edges at gamma={gamma}: "
        f"min {check.lambda_min_mean:.4f} (predicted {check.predicted_min:.4f}), "
        f"max {check.lambda_max_mean:.4f} (predicted {check.predicted_max:.4f})"
    )
    print(f"wrote {out} and rmt.csv")
    return 0


def _cmd_hessian(args) -> int:
    if not args.config:
        raise ConfigError("hessian needs --config with the model description")
    raw = _load_json(args.config, "config")
    known = {
        "dataset",
        "width",
        "loss",
        "activation",
        "bias",
        "epochs",
        "lr0",
        "decay",
        "batch_size",
        "seed",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "dataset" not in raw:
        raise ConfigError("config misses required key 'dataset'")
    train_ds, _ = sweep.load_datasets(raw["dataset"])
    width = tuple(raw.get("width", [8]))
    loss = raw.get("loss", "mse")
    spec = network.MlpSpec(
        train_ds.d, width, train_ds.k_out, raw.get("activation", "relu"), raw.get("bias", True)
    )
    seed = args.seed if args.seed is not None else raw.get("seed", 0)
    epochs = raw.get("epochs", 0)
    if epochs > 0:
        schedule = train.SgdSchedule(
            epochs, raw.get("lr0", 0.5), raw.get("decay", 0.75), raw.get("batch_size", 32)
        )
        model = train.sgd_train(spec, train_ds, loss, schedule, seed)
        if model.status == "diverged_nan":
            raise NumericError("training diverged; no Hessian to dump")
        params = model.params
    else:
        params = network.init_params(spec, seed)
    parts = hessian.assemble(params, train_ds.x, train_ds.loss_targets(loss), loss)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    hessian.save_matrix(out_dir / "hessian_total.bin", parts.total)
    hessian.save_matrix(out_dir / "hessian_outer.bin", parts.outer)
    hessian.save_matrix(out_dir / "hessian_func.bin", parts.func)
    eigs, _ = linalg.sym_eig(parts.total)
    summary = linalg.summarize_spectrum(eigs)
    report.save_json(summary.to_dict(), out_dir / "spectrum.json")
    print(
        f"p={parts.p} rank={summary.rank} "
        f"lambda_max={summary.lambda_max} lambda_r={summary.lambda_min_nonzero}"
    )
    print(f"wrote hessian_total.bin, hessian_outer.bin, hessian_func.bin, spectrum.json")
    return 0


def _cmd_report(args) -> int:
    written = report.emit_report(
        args.records, args.kind, args.out, log_scale=args.log, smooth=args.smooth
    )
    print(f"wrote {', '.join(p.name for p in written)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hessdd",
        description="Hessian-spectrum double-descent experiments for small MLPs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument(
            "--config", required=config_required, help="JSON configuration file"
        )
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed override")

    p = sub.add_parser("sweep", help="width sweep: train, assemble, bound, record")
    common(p, config_required=True)
    p.add_argument("--workers", type=int, default=None, help="worker thread count")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("redundancy", help="redundant-feature least-squares sweep")
    common(p)
    p.set_defaults(fn=_cmd_redundancy)

    p = sub.add_parser("loo", help="leave-one-out estimates for a linear model on CSV data")
    common(p, config_required=True)
    p.set_defaults(fn=_cmd_loo)

    p = sub.add_parser("rmt", help="spectral edge constant fit and check")
    common(p)
    p.set_defaults(fn=_cmd_rmt)

    p = sub.add_parser("hessian", help="one-off Hessian dump for a single model")
    common(p, config_required=True)
    p.set_defaults(fn=_cmd_hessian)

    p = sub.add_parser("report", help="aggregate sweep records into CSV and SVG")
    p.add_argument("records", help="records.jsonl produced by sweep")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--kind", choices=("csv", "svg", "both"), default="both")
    p.add_argument("--log", action="store_true", help="log-scale y axes")
    p.add_argument(
        "--smooth",
        action="store_true",
        help="moving average over three successive model sizes (default off)",
    )
    p.set_defaults(fn=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, DataError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
