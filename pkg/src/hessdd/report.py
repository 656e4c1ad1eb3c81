"""Aggregated curves and figures from sweep records.

Records are grouped by config index (one x-point per model size), seeds
are collapsed to mean and sample standard deviation, and diverged runs
are counted but excluded from every aggregate.  The CSV column schema is
frozen; tests pin it against a golden header file.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .exceptions import DataError

BASE_COLUMNS = [
    "config_index",
    "width",
    "p",
    "n",
    "k_out",
    "loss",
    "n_seeds",
    "n_diverged",
    "train_loss_mean",
    "train_loss_sd",
    "test_loss_mean",
    "test_loss_sd",
    "test_accuracy_mean",
    "lambda_r_mean",
    "lambda_r_sd",
    "spectral_norm_mean",
    "spectral_norm_sd",
    "rank_mean",
    "rank_deficit_mean",
    "lower_bound_mean",
    "lower_bound_sd",
    "n_bound_divergent",
    "func_over_outer_mean",
    "rho_mean",
]


def _mean_sd(values) -> tuple[float | None, float | None]:
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    mean = float(np.mean(vals))
    sd = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return mean, sd


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def capture_fractions(records: list[dict]) -> list[str]:
    fracs: set[str] = set()
    for rec in records:
        if rec.get("trace_capture"):
            fracs.update(rec["trace_capture"].keys())
    return sorted(fracs, key=float)


def aggregate(records: list[dict]) -> list[dict]:
    """One aggregated row per config index; diverged runs excluded."""
    if not records:
        raise DataError("no records to aggregate")
    by_cfg: dict[int, list[dict]] = {}
    for rec in records:
        by_cfg.setdefault(rec["config_index"], []).append(rec)
    fracs = capture_fractions(records)
    rows = []
    for ci in sorted(by_cfg):
        group = by_cfg[ci]
        ok = [r for r in group if r["status"] != "diverged_nan"]
        first = group[0]
        row: dict = {
            "config_index": ci,
            "width": "x".join(str(w) for w in first["width"]),
            "p": first["p"],
            "n": first["n"],
            "k_out": first["k_out"],
            "loss": first["loss"],
            "n_seeds": len(group),
            "n_diverged": len(group) - len(ok),
        }
        row["train_loss_mean"], row["train_loss_sd"] = _mean_sd(
            [r["train_loss"] for r in ok]
        )
        row["test_loss_mean"], row["test_loss_sd"] = _mean_sd(
            [r["test_loss"] for r in ok]
        )
        row["test_accuracy_mean"], _ = _mean_sd([r["test_accuracy"] for r in ok])
        row["lambda_r_mean"], row["lambda_r_sd"] = _mean_sd(
            [r["spectrum"]["lambda_min_nonzero"] for r in ok if r["spectrum"]]
        )
        row["spectral_norm_mean"], row["spectral_norm_sd"] = _mean_sd(
            [r["spectral_norm"] for r in ok]
        )
        row["rank_mean"], _ = _mean_sd(
            [r["spectrum"]["rank"] for r in ok if r["spectrum"]]
        )
        row["rank_deficit_mean"], _ = _mean_sd(
            [r["rank_law"]["deficit"] for r in ok if r["rank_law"]]
        )
        bounds = [r["bound"] for r in ok if r["bound"]]
        row["lower_bound_mean"], row["lower_bound_sd"] = _mean_sd(
            [b["lower_bound"] for b in bounds]
        )
        row["n_bound_divergent"] = sum(1 for b in bounds if b["divergent"])
        row["func_over_outer_mean"], _ = _mean_sd(
            [r["assumptions"]["func_over_outer_fro"] for r in ok if r["assumptions"]]
        )
        row["rho_mean"], _ = _mean_sd(
            [r["assumptions"]["rho"] for r in ok if r["assumptions"]]
        )
        for q in fracs:
            vals = [
                r["trace_capture"][q]
                for r in ok
                if r["trace_capture"] and q in r["trace_capture"]
            ]
            row[f"capture_{q}_mean"], _ = _mean_sd(vals)
        rows.append(row)
    return rows


def csv_columns(records: list[dict]) -> list[str]:
    return BASE_COLUMNS + [f"capture_{q}_mean" for q in capture_fractions(records)]


def write_csv(records: list[dict], path) -> Path:
    columns = csv_columns(records)
    rows = aggregate(records)
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])
    return path


def smooth3(values: list) -> list:
    """Moving average over three successive model sizes; None passes through."""
    out = []
    for i in range(len(values)):
        window = [
            v
            for v in values[max(0, i - 1) : i + 2]
            if v is not None and np.isfinite(v)
        ]
        out.append(float(np.mean(window)) if window else None)
    return out


def _band_plot(ax, xs, means, sds, label, color):
    pts = [(x, m, s) for x, m, s in zip(xs, means, sds) if m is not None]
    if not pts:
        return
    x = np.array([p[0] for p in pts], dtype=float)
    m = np.array([p[1] for p in pts], dtype=float)
    s = np.array([0.0 if p[2] is None else p[2] for p in pts], dtype=float)
    ax.plot(x, m, marker="o", ms=3, lw=1.2, color=color, label=label)
    ax.fill_between(x, m - s, m + s, alpha=0.2, color=color, lw=0)


def write_plots(
    records: list[dict], out_dir, log_scale: bool = False, smooth: bool = False
) -> list[Path]:
    """Emit the standard figure set as SVG files; returns the written paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = aggregate(records)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    xs = [row["p"] for row in rows]
    n = rows[0]["n"]
    k = rows[0]["k_out"]

    def series(key):
        vals = [row.get(key) for row in rows]
        return smooth3(vals) if smooth else vals

    def new_fig(ylabel, title):
        fig, ax = plt.subplots(figsize=(5.2, 3.6), dpi=100)
        ax.set_xlabel("parameter count p")
        ax.set_ylabel(ylabel)
        ax.set_title(title, fontsize=10)
        if log_scale:
            ax.set_yscale("log")
        return fig, ax

    def finish(fig, ax, name, thresholds=()):
        for value, lbl in thresholds:
            ax.axvline(value, color="gray", ls=":", lw=1)
            ax.annotate(
                lbl,
                (value, 0.96),
                xycoords=("data", "axes fraction"),
                fontsize=8,
                ha="right",
                rotation=90,
                color="gray",
            )
        if ax.get_legend_handles_labels()[0]:
            ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / name
        fig.savefig(path)
        plt.close(fig)
        return path

    written = []
    marks = [(k * n, "p = Kn"), (n, "p = n")] if k > 1 else [(n, "p = n")]

    fig, ax = new_fig("loss", "train and test loss vs model size")
    _band_plot(ax, xs, series("test_loss_mean"), series("test_loss_sd"), "test", "C0")
    _band_plot(ax, xs, series("train_loss_mean"), series("train_loss_sd"), "train", "C1")
    written.append(finish(fig, ax, "loss.svg", marks))

    fig, ax = new_fig("min non-zero eigenvalue", "smallest retained Hessian eigenvalue")
    _band_plot(ax, xs, series("lambda_r_mean"), series("lambda_r_sd"), "lambda_r", "C2")
    written.append(finish(fig, ax, "lambda_r.svg", marks))

    fig, ax = new_fig("loss", "population-risk lower bound against test loss")
    _band_plot(ax, xs, series("test_loss_mean"), series("test_loss_sd"), "test", "C0")
    _band_plot(
        ax, xs, series("lower_bound_mean"), series("lower_bound_sd"), "lower bound", "C3"
    )
    written.append(finish(fig, ax, "bound.svg", marks))

    fig, ax = new_fig("% of inverse trace", "share of inverse trace in smallest eigenvalues")
    for i, q in enumerate(capture_fractions(records)):
        _band_plot(
            ax,
            xs,
            series(f"capture_{q}_mean"),
            [None] * len(xs),
            f"smallest {float(q):.1%}",
            f"C{i}",
        )
    written.append(finish(fig, ax, "trace_capture.svg", marks))

    fig, ax = new_fig("spectral norm", "Hessian spectral norm vs model size")
    _band_plot(
        ax, xs, series("spectral_norm_mean"), series("spectral_norm_sd"), "|H|", "C4"
    )
    written.append(finish(fig, ax, "spectral_norm.svg", marks))
    return written


def emit_report(
    records_path,
    kind: str,
    out_dir,
    log_scale: bool = False,
    smooth: bool = False,
) -> list[Path]:
    """Render sweep records to aggregated CSV and/or SVG figures."""
    from .sweep import read_records

    if kind not in ("csv", "svg", "both"):
        raise DataError(f"unknown report kind {kind!r}")
    records = read_records(records_path)
    if not records:
        raise DataError(f"records file is empty: {records_path}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if kind in ("csv", "both"):
        written.append(write_csv(records, out_dir / "aggregate.csv"))
    if kind in ("svg", "both"):
        written.extend(write_plots(records, out_dir, log_scale, smooth))
    return written


# ---------------------------------------------------------------------------
# redundancy sweep rendering


def write_redundancy_outputs(records: list[dict], out_dir) -> list[Path]:
    """CSV and SVG for the redundant-feature prefix sweep."""
    if not records:
        raise DataError("no redundancy records to render")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "redundancy.csv"
    columns = ["beta", "n_features", "rank", "train_mse", "test_mse"]
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for rec in records:
            writer.writerow([_fmt(rec[c]) for c in columns])

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.2, 3.6), dpi=100)
    betas = sorted({rec["beta"] for rec in records})
    for i, beta in enumerate(betas):
        pts = [r for r in records if r["beta"] == beta]
        ax.plot(
            [r["n_features"] for r in pts],
            [r["test_mse"] for r in pts],
            marker="o",
            ms=3,
            lw=1.2,
            color=f"C{i}",
            label=f"beta={beta}",
        )
    ax.set_yscale("log")
    ax.set_xlabel("leading design columns")
    ax.set_ylabel("test mse")
    ax.set_title("redundant features move the interpolation spike", fontsize=10)
    ax.legend(fontsize=8)
    fig.tight_layout()
    svg_path = out_dir / "redundancy.svg"
    fig.savefig(svg_path)
    plt.close(fig)
    return [csv_path, svg_path]


def write_edge_csv(checks, path) -> Path:
    """CSV of spectral-edge checks over an aspect-ratio grid."""
    columns = [
        "gamma",
        "m",
        "n",
        "lambda_min_mean",
        "lambda_min_sd",
        "lambda_max_mean",
        "lambda_max_sd",
        "predicted_min",
        "predicted_max",
        "c",
    ]
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for ec in checks:
            d = ec.to_dict()
            writer.writerow([_fmt(d[c]) for c in columns])
    return path


def save_json(obj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")
    return path
