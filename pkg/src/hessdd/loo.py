"""Hat-matrix leave-one-out estimators for least squares and for networks.

For least squares the leave-one-out squared error has the closed form
(1/n) sum ((y_i - x_i^T theta) / (1 - A_ii))^2 with A the hat matrix; the
first-order influence estimate keeps only one power of the leverage
correction.  The same machinery applies to an interpolating scalar-output
network through its Jacobian features: rows z_i = d f(x_i) / d theta at
the trained point form the design, and the ridge hat matrix is computed in
sample space as (Z Z^T + lam I)^-1 Z Z^T, which the push-through identity
makes equal to Z (Z^T Z + lam I)^-1 Z^T at any lam > 0.

Reported errors are plain squared residuals (no 1/2 factor), the usual
convention for leave-one-out curves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hessian, network
from .data import Dataset
from .exceptions import LeverageError

LEVERAGE_CEILING = 1.0 - 1e-12


@dataclass
class HatMatrix:
    """Symmetric hat matrix with its regularizer and construction route."""

    a: np.ndarray
    lam: float
    source: str
    rank_deficient: bool = False

    @property
    def leverages(self) -> np.ndarray:
        return np.diag(self.a).copy()

    @property
    def n(self) -> int:
        return self.a.shape[0]


def hat_matrix(design: np.ndarray, lam: float = 0.0) -> HatMatrix:
    """Hat matrix of a design with rows as samples.

    lam = 0 gives the orthogonal projector onto the column space (via SVD,
    so column-rank deficiency is handled by the pseudo-inverse and only
    flagged).  lam > 0 gives the ridge smoother through the sample-space
    push-through form, which stays cheap when columns outnumber rows.
    """
    x = np.asarray(design, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("design must be 2-d")
    n, q = x.shape
    if lam < 0:
        raise ValueError("lam must be non-negative")
    if lam == 0.0:
        u, s, _ = np.linalg.svd(x, full_matrices=False)
        tol = max(n, q) * np.finfo(np.float64).eps * (s[0] if s.size else 0.0)
        r = int(np.sum(s > tol))
        a = u[:, :r] @ u[:, :r].T
        return HatMatrix(a=a, lam=0.0, source="ols", rank_deficient=r < min(n, q))
    gram = x @ x.T
    a = np.linalg.solve(gram + lam * np.eye(n), gram)
    return HatMatrix(a=0.5 * (a + a.T), lam=lam, source="ridge_pushthrough")


def loo_ols_exact(x: np.ndarray, y: np.ndarray) -> float:
    """Exact leave-one-out mean squared error of least squares.

    Uses the closed form (1/n) sum (r_i / (1 - A_ii))^2 at the full-data
    solution; identical to refitting n times when the leverages stay away
    from 1.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    theta, *_ = np.linalg.lstsq(x, y, rcond=None)
    r = y - x @ theta
    hat = hat_matrix(x, 0.0)
    lev = hat.leverages
    _check_leverages(lev)
    return float(np.mean((r / (1.0 - lev)) ** 2))


def brute_force_loo(x: np.ndarray, y: np.ndarray, lam: float = 0.0) -> float:
    """Reference oracle: refit with each sample held out and average the
    squared prediction errors.  lam > 0 refits ridge with the same lam
    (sum-of-squares objective, penalty lam * ||theta||^2)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    n, q = x.shape
    errs = np.zeros(n)
    for i in range(n):
        keep = np.arange(n) != i
        xi, yi = x[keep], y[keep]
        if lam == 0.0:
            theta, *_ = np.linalg.lstsq(xi, yi, rcond=None)
        else:
            theta = np.linalg.solve(xi.T @ xi + lam * np.eye(q), xi.T @ yi)
        errs[i] = (y[i] - x[i] @ theta) ** 2
    return float(np.mean(errs))


def _check_leverages(lev: np.ndarray):
    over = np.where(lev >= LEVERAGE_CEILING)[0]
    if over.size:
        i = int(over[0])
        raise LeverageError(i, float(lev[i]))


@dataclass(frozen=True)
class LooReport:
    """First- and second-order leave-one-out estimates plus per-sample pieces."""

    loo1: float
    loo2: float
    train_mse: float
    leverages: np.ndarray
    residuals: np.ndarray
    lam: float
    mode: str

    def to_dict(self) -> dict:
        return {
            "loo1": self.loo1,
            "loo2": self.loo2,
            "train_mse": self.train_mse,
            "lam": self.lam,
            "mode": self.mode,
        }


def loo_influence(
    hat: HatMatrix, residuals: np.ndarray, order: int = 2, mode: str = "asymptotic"
) -> float:
    """Influence-function leave-one-out estimate from a hat matrix.

    order 1: (1/n) sum r_i^2 + (1/n) sum r_i^2 A_ii / (1 - A_ii)
    order 2: (1/n) sum (r_i / (1 - A_ii))^2

    mode "asymptotic" evaluates those closed forms directly; mode "exact"
    recomputes each held-out residual by a rank-one downdate of the
    smoother, r_i / (1 - A_ii) evaluated per sample from the downdated
    prediction.  For least squares the two coincide to roundoff; both are
    exposed because the closed forms are derived through an n-vs-(n-1)
    approximation that the downdate route does not use.
    """
    r = np.asarray(residuals, dtype=np.float64).ravel()
    lev = hat.leverages
    if r.shape[0] != lev.shape[0]:
        raise ValueError("residuals and hat matrix disagree on n")
    _check_leverages(lev)
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if mode not in ("asymptotic", "exact"):
        raise ValueError("mode must be 'asymptotic' or 'exact'")
    if mode == "exact":
        # held-out residual via downdate: with smoother prediction
        # yhat = A y, dropping sample i rescales its own contribution so
        # r_i^(-i) = r_i / (1 - A_ii); recompute elementwise rather than
        # through the aggregated closed form
        held_out = np.array([r[i] / (1.0 - lev[i]) for i in range(r.size)])
        if order == 2:
            return float(np.mean(held_out**2))
        return float(np.mean(r**2) + np.mean(r * held_out * lev))
    if order == 2:
        return float(np.mean((r / (1.0 - lev)) ** 2))
    return float(np.mean(r**2) + np.mean(r**2 * lev / (1.0 - lev)))


def loo_linear(
    x: np.ndarray, y: np.ndarray, lam: float = 0.0, mode: str = "asymptotic"
) -> LooReport:
    """Leave-one-out report for a linear model on raw features.

    lam = 0 fits min-norm least squares; lam > 0 fits ridge with penalty
    lam * ||theta||^2 on the sum-of-squares objective.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if lam == 0.0:
        theta, *_ = np.linalg.lstsq(x, y, rcond=None)
    else:
        q = x.shape[1]
        theta = np.linalg.solve(x.T @ x + lam * np.eye(q), x.T @ y)
    r = y - x @ theta
    hat = hat_matrix(x, lam)
    return LooReport(
        loo1=loo_influence(hat, r, order=1, mode=mode),
        loo2=loo_influence(hat, r, order=2, mode=mode),
        train_mse=float(np.mean(r**2)),
        leverages=hat.leverages,
        residuals=r,
        lam=lam,
        mode=mode,
    )


def loo_nn(
    model, ds: Dataset, lam: float = 0.0, order: int = 2, mode: str = "asymptotic"
) -> LooReport:
    """Leave-one-out estimate for a scalar-output network at its trained point.

    The design is the n x p matrix of per-sample network Jacobians; for a
    depth-1 linear network this is exactly the (bias-augmented) data matrix
    and the estimate reduces to least-squares leave-one-out.  Only K = 1
    squared loss is supported.
    """
    params = model.params if hasattr(model, "params") else model
    if params.spec.output_dim != 1:
        raise ValueError("network leave-one-out supports a single output only")
    z = hessian.jacobian_stack(params, ds.x).T  # (n, p)
    f = network.batch_forward(params, ds.x)[:, 0]
    y = np.asarray(ds.loss_targets("mse"), dtype=np.float64).ravel()
    r = y - f
    hat = hat_matrix(z, lam)
    loo1 = loo_influence(hat, r, order=1, mode=mode)
    loo2 = loo_influence(hat, r, order=2, mode=mode)
    return LooReport(
        loo1=loo1,
        loo2=loo2,
        train_mse=float(np.mean(r**2)),
        leverages=hat.leverages,
        residuals=r,
        lam=lam,
        mode=mode,
    )
