"""Synthetic dataset generators and CSV round-trip with provenance sidecars.

Classification data is a Gaussian cluster mixture with a controllable
center separation; label noise resamples a fraction of labels uniformly
over all classes, the original one included.  Regression designs for the
redundancy experiment interleave each base feature with its redundant
companions (linear combinations of base features seen so far), so a prefix
of j columns spans exactly ceil(j / (beta + 1)) base directions.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DataError


@dataclass
class Dataset:
    """Feature matrix plus targets; task is "classification" or "regression"; k_out is the class count or target width K."""

    x: np.ndarray
    targets: np.ndarray
    task: str
    k_out: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim != 2:
            raise DataError("features must be a 2-d array")
        if self.task == "classification":
            self.targets = np.asarray(self.targets, dtype=np.intp).ravel()
            if self.targets.shape[0] != self.x.shape[0]:
                raise DataError("targets length does not match feature rows")
            if self.k_out < 2:
                raise DataError("classification needs at least 2 classes")
            bad = (self.targets < 0) | (self.targets >= self.k_out)
            if np.any(bad):
                row = int(np.argmax(bad))
                raise DataError(
                    f"class index {self.targets[row]} out of range at row {row}"
                )
        elif self.task == "regression":
            self.targets = np.asarray(self.targets, dtype=np.float64)
            if self.targets.ndim == 1:
                self.targets = self.targets[:, None]
            if self.targets.shape[0] != self.x.shape[0]:
                raise DataError("targets length does not match feature rows")
            if self.targets.shape[1] != self.k_out:
                raise DataError("target width does not match declared output dim")
        else:
            raise DataError(f"unknown task {self.task!r}")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.x[idx], self.targets[idx], self.task, self.k_out,
                       dict(self.provenance))

    def onehot_targets(self) -> np.ndarray:
        """One-hot float targets for squared-loss training on class labels."""
        if self.task != "classification":
            return self.targets
        out = np.zeros((self.n, self.k_out))
        out[np.arange(self.n), self.targets] = 1.0
        return out

    def loss_targets(self, kind: str):
        """Targets in the shape the given loss kind consumes."""
        if kind == "cross_entropy":
            if self.task != "classification":
                raise DataError("cross_entropy needs classification targets")
            return self.targets
        return self.onehot_targets() if self.task == "classification" else self.targets


def gen_classification(
    n: int,
    d: int,
    k_out: int,
    noise_rate: float = 0.0,
    seed: int = 0,
    separation: float = 3.0,
) -> Dataset:
    """Gaussian cluster mixture with resample label noise.

    Cluster centers are random unit directions scaled by `separation`;
    points are centers plus standard normal noise.  With probability
    noise_rate a label is redrawn uniformly over all k_out (so at
    noise_rate = 1 labels carry no information about the features).
    """
    if n < 1 or d < 1 or k_out < 2:
        raise DataError("need n >= 1, d >= 1, k_out >= 2")
    if not 0.0 <= noise_rate <= 1.0:
        raise DataError(f"noise_rate out of [0, 1]: {noise_rate}")
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(k_out, d))
    centers *= separation / np.linalg.norm(centers, axis=1, keepdims=True)
    labels = rng.integers(0, k_out, size=n)
    x = centers[labels] + rng.normal(size=(n, d))
    noisy = labels.copy()
    flip = rng.random(n) < noise_rate
    noisy[flip] = rng.integers(0, k_out, size=int(np.sum(flip)))
    return Dataset(
        x,
        noisy,
        "classification",
        k_out,
        provenance={
            "generator": "gen_classification",
            "n": n,
            "d": d,
            "k_out": k_out,
            "noise_rate": noise_rate,
            "separation": separation,
            "seed": seed,
            "clean_labels": labels.tolist(),
        },
    )


@dataclass
class RedundantDesign:
    """Regression design whose columns come in groups of (1 + beta) per base feature."""

    x: np.ndarray
    targets: np.ndarray
    base_dim: int
    beta: int
    n: int
    provenance: dict = field(default_factory=dict)


def gen_redundant_regression(
    n: int,
    base_dim: int,
    beta: int,
    noise_sd: float = 0.5,
    seed: int = 0,
) -> RedundantDesign:
    """Planted linear regression with beta redundant companions per base feature.

    Column order interleaves: base_1, its beta companions, base_2, its
    companions, and so on.  Companion g,b is a random linear combination of
    base features 1..g, so the first j columns span exactly
    min(ceil(j / (beta + 1)), n) directions and the interpolation threshold
    of a column-prefix regression moves from n to n * (beta + 1).
    """
    if beta < 0:
        raise DataError("beta must be non-negative")
    rng = np.random.default_rng(seed)
    base = rng.normal(size=(n, base_dim))
    w = rng.normal(size=base_dim)
    y = base @ w + noise_sd * rng.normal(size=n)
    cols = []
    for g in range(base_dim):
        cols.append(base[:, g])
        for _ in range(beta):
            coef = rng.normal(size=g + 1)
            cols.append(base[:, : g + 1] @ coef)
    x = np.column_stack(cols) if cols else np.zeros((n, 0))
    return RedundantDesign(
        x=x,
        targets=y,
        base_dim=base_dim,
        beta=beta,
        n=n,
        provenance={
            "generator": "gen_redundant_regression",
            "n": n,
            "base_dim": base_dim,
            "beta": beta,
            "noise_sd": noise_sd,
            "seed": seed,
        },
    )


# ---------------------------------------------------------------------------
# CSV with provenance sidecar


def _header(d: int, task: str, k: int) -> list[str]:
    xs = [f"x{i}" for i in range(d)]
    if task == "classification":
        return xs + ["y"]
    return xs + [f"y{i}" for i in range(k)]


def save_csv(ds: Dataset, path) -> None:
    """Write a dataset as CSV plus a JSON provenance sidecar.

    Floats are written with shortest round-trip repr, so load_csv recovers
    them bit-exactly.
    """
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_header(ds.d, ds.task, ds.k_out))
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.x[i]]
            if ds.task == "classification":
                row.append(str(int(ds.targets[i])))
            else:
                row.extend(repr(float(v)) for v in ds.targets[i])
            writer.writerow(row)
    sidecar = {
        "task": ds.task,
        "d": ds.d,
        "n": ds.n,
        "k_out": ds.k_out,
        "provenance": ds.provenance,
    }
    with open(path.with_suffix(path.suffix + ".meta.json"), "w") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)


def load_csv(path, d: int, task: str, k_out: int) -> Dataset:
    """Read a dataset written by save_csv (or matching its schema).

    The header must be x0..x{d-1},y for classification or
    x0..x{d-1},y0..y{K-1} for regression.  Errors cite the offending row
    and column.
    """
    path = Path(path)
    expected = _header(d, task, k_out)
    rows_x, rows_y = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if header != expected:
            raise DataError(
                f"{path}: header mismatch; expected {expected}, found {header}"
            )
        for rownum, row in enumerate(reader, start=2):
            if len(row) != len(expected):
                raise DataError(
                    f"{path}: row {rownum} has {len(row)} fields, expected {len(expected)}"
                )
            vals = []
            for colnum, cell in enumerate(row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric value {cell!r} at row {rownum}, "
                        f"column {expected[colnum]}"
                    ) from None
            rows_x.append(vals[:d])
            if task == "classification":
                label = vals[d]
                if label != int(label) or not 0 <= label < k_out:
                    raise DataError(
                        f"{path}: bad class label {row[d]!r} at row {rownum}"
                    )
                rows_y.append(int(label))
            else:
                rows_y.append(vals[d:])
    provenance = {}
    sidecar = path.with_suffix(path.suffix + ".meta.json")
    if sidecar.exists():
        with open(sidecar) as fh:
            provenance = json.load(fh).get("provenance", {})
    x = np.asarray(rows_x, dtype=np.float64).reshape(len(rows_x), d)
    return Dataset(x, np.asarray(rows_y), task, k_out, provenance)
