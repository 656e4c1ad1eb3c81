"""Width sweeps over the interpolation threshold, with JSONL records.

One record per (model size, seed): train, assemble the exact Hessian,
eigendecompose, evaluate bounds and diagnostics, append one JSON line.
Records are written in configuration order regardless of worker completion
order, reruns skip (config_index, seed) pairs already on disk, and records
are byte-stable across runs except for the wall_time field.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import hessian, linalg, network, risk, train
from .data import Dataset, gen_classification, gen_redundant_regression, load_csv
from .exceptions import CollapseError, ConfigError

DEFAULT_TRACE_FRACTIONS = (0.005, 0.01, 0.02, 0.05, 0.1)


@dataclass
class SweepConfig:
    """Fully explicit sweep description; every knob lives in the JSON config."""

    dataset: dict
    widths: list[tuple[int, ...]]
    loss: str = "mse"
    activation: str = "relu"
    bias: bool = True
    epochs: int = 2000
    lr0: float = 0.5
    decay: float = 0.75
    batch_size: int = 32
    seeds: tuple[int, ...] = (0, 1, 2)
    tau: float = risk.DEFAULT_TAU
    zero_tol_rel: float = linalg.DEFAULT_ZERO_TOL_REL
    assumption_zero_tol: float | None = None
    param_cap: int = hessian.DEFAULT_PARAM_CAP
    bound_lambda: float = 0.0
    trace_fractions: tuple[float, ...] = DEFAULT_TRACE_FRACTIONS
    init: str = "fanin_uniform"
    workers: int = 1

    def __post_init__(self):
        if not self.widths:
            raise ConfigError("width grid is empty")
        self.widths = [tuple(int(w) for w in ws) for ws in self.widths]
        self.seeds = tuple(int(s) for s in self.seeds)
        self.trace_fractions = tuple(float(q) for q in self.trace_fractions)
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.loss not in ("mse", "cross_entropy"):
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.init != "fanin_uniform":
            raise ConfigError(f"unknown init scheme {self.init!r}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.assumption_zero_tol is not None and not 0.0 <= self.assumption_zero_tol < 1.0:
            raise ConfigError(f"assumption_zero_tol out of range: {self.assumption_zero_tol}")

    @classmethod
    def from_json(cls, path) -> "SweepConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from None
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"dataset", "widths"} - set(raw)
        if missing:
            raise ConfigError(f"config misses required keys: {sorted(missing)}")
        try:
            return cls(**raw)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    def to_json(self) -> str:
        out = dict(
            dataset=self.dataset,
            widths=[list(w) for w in self.widths],
            loss=self.loss,
            activation=self.activation,
            bias=self.bias,
            epochs=self.epochs,
            lr0=self.lr0,
            decay=self.decay,
            batch_size=self.batch_size,
            seeds=list(self.seeds),
            tau=self.tau,
            zero_tol_rel=self.zero_tol_rel,
            assumption_zero_tol=self.assumption_zero_tol,
            param_cap=self.param_cap,
            bound_lambda=self.bound_lambda,
            trace_fractions=list(self.trace_fractions),
            init=self.init,
            workers=self.workers,
        )
        return json.dumps(out, indent=1)


def load_datasets(cfg_dataset: dict) -> tuple[Dataset, Dataset]:
    """Materialize (train, eval) datasets from the config's dataset block."""
    d = dict(cfg_dataset)
    dtype = d.pop("type", None)
    if dtype == "classification":
        try:
            n = d.pop("n")
            dim = d.pop("d")
            k = d.pop("classes")
        except KeyError as e:
            raise ConfigError(f"dataset block misses key {e}") from None
        noise = d.pop("noise_rate", 0.0)
        sep = d.pop("separation", 3.0)
        seed = d.pop("seed", 0)
        n_test = d.pop("n_test", 512)
        if d:
            raise ConfigError(f"unknown dataset keys: {sorted(d)}")
        train_ds = gen_classification(n, dim, k, noise, seed=seed, separation=sep)
        # evaluation set from the same distribution, disjoint stream
        test_ds = gen_classification(n_test, dim, k, noise, seed=seed + 1, separation=sep)
        return train_ds, test_ds
    if dtype == "csv":
        try:
            train_path = d.pop("train_path")
            test_path = d.pop("test_path")
            dim = d.pop("d")
            task = d.pop("task")
            k = d.pop("k_out")
        except KeyError as e:
            raise ConfigError(f"dataset block misses key {e}") from None
        if d:
            raise ConfigError(f"unknown dataset keys: {sorted(d)}")
        return (
            load_csv(train_path, dim, task, k),
            load_csv(test_path, dim, task, k),
        )
    raise ConfigError(f"unknown dataset type {dtype!r}")


def _model_seed(config_index: int, seed: int) -> int:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(config_index,))
    return int(ss.generate_state(1, np.uint64)[0])


def _per_sample_losses(params, ds: Dataset, kind: str) -> np.ndarray:
    from . import losses as losses_mod

    f = network.batch_forward(params, ds.x)
    y = ds.loss_targets(kind)
    return np.array(
        [
            losses_mod.value(kind, f[i], y[i] if kind == "mse" else int(y[i]))
            for i in range(ds.n)
        ]
    )


def run_model(
    cfg: SweepConfig, train_ds: Dataset, test_ds: Dataset, config_index: int, seed: int
) -> dict:
    """Train and analyze one (width, seed) cell; returns the record dict."""
    t0 = time.time()
    width = cfg.widths[config_index]
    spec = network.MlpSpec(
        train_ds.d, width, train_ds.k_out, cfg.activation, cfg.bias
    )
    schedule = train.SgdSchedule(cfg.epochs, cfg.lr0, cfg.decay, cfg.batch_size)
    model = train.sgd_train(spec, train_ds, cfg.loss, schedule, _model_seed(config_index, seed))
    record = {
        "config_index": config_index,
        "width": list(width),
        "seed": seed,
        "p": spec.param_count,
        "n": train_ds.n,
        "k_out": train_ds.k_out,
        "loss": cfg.loss,
        "status": model.status,
        "epochs_run": model.epochs_run,
        "train_loss": None,
        "train_accuracy": model.train_accuracy,
        "test_loss": None,
        "test_loss_se": None,
        "test_accuracy": None,
        "spectral_norm": None,
        "spectrum": None,
        "bound": None,
        "assumptions": None,
        "rank_law": None,
        "trace_capture": None,
    }
    if model.status == "diverged_nan":
        record["wall_time"] = time.time() - t0
        return record
    record["train_loss"] = model.train_loss

    per_losses = _per_sample_losses(model.params, test_ds, cfg.loss)
    record["test_loss"] = float(np.mean(per_losses))
    record["test_loss_se"] = float(np.std(per_losses, ddof=1) / np.sqrt(test_ds.n))
    if test_ds.task == "classification":
        pred = np.argmax(network.batch_forward(model.params, test_ds.x), axis=1)
        record["test_accuracy"] = float(np.mean(pred == test_ds.targets))

    y_train = train_ds.loss_targets(cfg.loss)
    parts = hessian.assemble(model.params, train_ds.x, y_train, cfg.loss, cfg.param_cap)
    eigs, _ = linalg.sym_eig(parts.total)
    summary = linalg.summarize_spectrum(eigs, cfg.zero_tol_rel)
    record["spectral_norm"] = float(np.max(np.abs(eigs)))
    record["spectrum"] = summary.to_dict()
    record["rank_law"] = hessian.rank_law_check(
        parts.outer, cfg.loss, train_ds.n, train_ds.k_out, cfg.zero_tol_rel
    ).to_dict()
    record["trace_capture"] = {
        str(q): v for q, v in risk.trace_capture(summary, cfg.trace_fractions).items()
    }

    inputs = risk.estimate_bound_inputs(
        model.params,
        test_ds,
        cfg.loss,
        summary,
        train_ds.n,
        tau=cfg.tau,
        zero_tol_rel=cfg.zero_tol_rel,
        param_cap=cfg.param_cap,
    )
    lb = risk.lower_bound(inputs, model.train_loss)
    try:
        c_grad = hessian.grad_covariance(
            model.params, test_ds.x, test_ds.loss_targets(cfg.loss), cfg.loss, cfg.param_cap
        )
        comp = risk.complexity_term(parts.total, c_grad, cfg.bound_lambda, cfg.zero_tol_rel)
    except CollapseError:
        comp = None
    upper = None
    if cfg.bound_lambda > 0:
        upper = risk.upper_bound_complexity(parts.total, inputs, cfg.bound_lambda)
    record["bound"] = {
        "complexity_term": comp,
        "lower_bound_complexity": lb.complexity,
        "upper_bound_complexity": upper,
        "lower_bound": lb.value,
        "divergent": lb.divergent,
        "inv_lambda_r": lb.inv_lambda_r,
        "one_sample_train_loss_proxy": lb.train_term,
        "measured_test_loss": record["test_loss"],
        "bound_lambda": cfg.bound_lambda,
        **inputs.to_dict(),
    }
    assumption_tol = (
        cfg.assumption_zero_tol if cfg.assumption_zero_tol is not None else cfg.zero_tol_rel
    )
    record["assumptions"] = train.assumption_report(
        model, train_ds, assumption_tol, cfg.param_cap
    ).to_dict()
    record["wall_time"] = time.time() - t0
    return record


def existing_keys(path: Path) -> set[tuple[int, int]]:
    keys = set()
    if path.exists():
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                keys.add((rec["config_index"], rec["seed"]))
    return keys


def width_sweep(cfg: SweepConfig, out_path) -> list[dict]:
    """Run all (width, seed) jobs, appending JSONL records in config order.

    Cells already present in the output file are skipped, so an
    interrupted sweep resumes to the same final record set.
    """
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    train_ds, test_ds = load_datasets(cfg.dataset)
    done = existing_keys(out_path)
    jobs = [
        (ci, seed)
        for ci in range(len(cfg.widths))
        for seed in cfg.seeds
        if (ci, seed) not in done
    ]
    records: list[dict] = []
    if cfg.workers == 1:
        for ci, seed in jobs:
            records.append(run_model(cfg, train_ds, test_ds, ci, seed))
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            futs = [pool.submit(run_model, cfg, train_ds, test_ds, ci, seed) for ci, seed in jobs]
            records = [f.result() for f in futs]  # config order, not completion order
    with open(out_path, "a") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return records


def read_records(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"records file not found: {path}")
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def record_content_hash(records: list[dict]) -> str:
    """Order-insensitive digest of records with wall_time stripped."""
    import hashlib

    stripped = sorted(
        json.dumps({k: v for k, v in rec.items() if k != "wall_time"}, sort_keys=True)
        for rec in records
    )
    return hashlib.sha256("\n".join(stripped).encode()).hexdigest()


# ---------------------------------------------------------------------------
# redundant-feature prefix sweep (ordinary least squares)


def redundancy_sweep(
    n: int = 100,
    d_base: int = 450,
    betas=(0, 1, 2, 3),
    feature_grid=tuple(range(25, 451, 25)),
    noise_sd: float = 0.5,
    seed: int = 0,
    n_test: int = 500,
) -> list[dict]:
    """Min-norm OLS test error versus number of leading design columns.

    For each beta the design interleaves each of the d_base base features
    with beta redundant companions, so the interpolation spike moves from
    n columns to n * (beta + 1) columns.  Losses are plain mean squared
    errors.
    """
    if not feature_grid:
        raise ConfigError("feature grid is empty")
    if not betas:
        raise ConfigError("beta list is empty")
    narrowest = d_base * (min(betas) + 1)
    if max(feature_grid) > narrowest:
        raise ConfigError(
            f"feature grid reaches {max(feature_grid)} but the beta="
            f"{min(betas)} design has only {narrowest} columns"
        )
    records = []
    for beta in betas:
        design = gen_redundant_regression(
            n + n_test, d_base, beta, noise_sd=noise_sd, seed=seed + beta
        )
        x_train, x_test = design.x[:n], design.x[n:]
        y_train, y_test = design.targets[:n], design.targets[n:]
        for j in feature_grid:
            xj = x_train[:, :j]
            theta, _, rank, _ = np.linalg.lstsq(xj, y_train, rcond=None)
            r_train = y_train - xj @ theta
            r_test = y_test - x_test[:, :j] @ theta
            records.append(
                {
                    "beta": int(beta),
                    "n_features": int(j),
                    "rank": int(rank),
                    "train_mse": float(np.mean(r_train**2)),
                    "test_mse": float(np.mean(r_test**2)),
                }
            )
    return records
