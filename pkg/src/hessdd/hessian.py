"""Exact loss-Hessian assembly, split into outer and functional parts.

For mean loss L(theta) = (1/n) sum_i loss(f(x_i; theta), y_i) the Hessian
decomposes as

    H_loss = H_outer + H_func
    H_outer = (1/n) sum_i J_i  d2loss/df2|_i  J_i^T
    H_func  = (1/n) sum_i sum_k [dloss/df|_i]_k  d2 f_k / dtheta^2 |_i

with J_i the (p, K) parameter Jacobian of the network at x_i.  H_outer is
PSD whenever the output-space loss Hessian is, and its rank follows
min(p, K n) for mse and min(p, (K-1) n) for cross-entropy on generic data.
H_func carries the network curvature weighted by output-space residuals
and washes out as residuals go to zero.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import linalg, losses, network
from .exceptions import CapacityError, NumericError

DEFAULT_PARAM_CAP = 4000

# residual threshold below which a sample's functional term is skipped
FUNC_TERM_SKIP = 1e-14


class _PairwiseSum:
    """Fixed-order pairwise accumulator (binary-counter merge tree).

    Summation order depends only on the number of pushed terms, so
    accumulation is deterministic and keeps roundoff near log2(n) adds.
    """

    def __init__(self):
        self._levels: list[tuple[int, np.ndarray]] = []
        self._count = 0

    def push(self, term: np.ndarray):
        level = 0
        while self._levels and self._levels[-1][0] == level:
            _, other = self._levels.pop()
            term = other + term
            level += 1
        self._levels.append((level, term))
        self._count += 1

    def total(self) -> np.ndarray:
        if not self._levels:
            raise ValueError("no terms accumulated")
        out = self._levels[0][1]
        for _, term in self._levels[1:]:
            out = term + out
        return out.copy()


@dataclass
class HessianParts:
    """Assembled Hessian pieces at a fixed parameter point."""

    outer: np.ndarray
    func: np.ndarray
    n: int
    kind: str

    @property
    def total(self) -> np.ndarray:
        return self.outer + self.func

    @property
    def p(self) -> int:
        return self.outer.shape[0]


def _check_inputs(params: network.MlpParams, x: np.ndarray, param_cap: int):
    if params.p > param_cap:
        raise CapacityError(
            f"dense Hessian assembly capped at p <= {param_cap}, got p = {params.p}; "
            "raise param_cap explicitly to override"
        )
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.spec.input_dim:
        raise ValueError(f"inputs must have shape (n, {params.spec.input_dim})")
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite values in inputs")
    if not np.all(np.isfinite(params.theta)):
        raise NumericError("non-finite values in parameters")
    return x


def assemble(
    params: network.MlpParams,
    x: np.ndarray,
    y,
    kind: str,
    param_cap: int = DEFAULT_PARAM_CAP,
) -> HessianParts:
    """Assemble the exact mean-loss Hessian split into outer and functional parts.

    Per-sample terms are accumulated with a fixed-order pairwise tree.
    Samples whose output-space gradient norm is at or below 1e-14 skip the
    functional term; their curvature contribution is below roundoff anyway.
    """
    x = _check_inputs(params, x, param_cap)
    n = x.shape[0]
    f = network.batch_forward(params, x)
    if not np.all(np.isfinite(f)):
        raise NumericError("non-finite network outputs during assembly")
    outer_acc, func_acc = _PairwiseSum(), _PairwiseSum()
    p = params.p
    for i in range(n):
        jac = network.jacobian(params, x[i])
        yi = y[i] if kind == "mse" else int(np.asarray(y)[i])
        lh = losses.hess_f(kind, f[i], yi)
        outer_acc.push(jac @ lh @ jac.T)
        g = losses.grad_f(kind, f[i], yi)
        if float(np.linalg.norm(g)) > FUNC_TERM_SKIP:
            func_acc.push(network.weighted_second_jacobian(params, x[i], g))
        else:
            func_acc.push(np.zeros((p, p)))
    outer = outer_acc.total() / n
    func = func_acc.total() / n
    if not (np.all(np.isfinite(outer)) and np.all(np.isfinite(func))):
        raise NumericError("non-finite values in assembled Hessian")
    return HessianParts(outer=outer, func=func, n=n, kind=kind)


def gradient_stack(params: network.MlpParams, x: np.ndarray, y, kind: str) -> np.ndarray:
    """Per-sample loss gradients as columns, shape (p, m).

    Each column chains the parameter Jacobian with the output-space loss
    gradient: g_i = J_i grad_f(f_i, y_i).
    """
    x = np.asarray(x, dtype=np.float64)
    m = x.shape[0]
    f = network.batch_forward(params, x)
    cols = np.empty((params.p, m))
    for i in range(m):
        yi = y[i] if kind == "mse" else int(np.asarray(y)[i])
        cols[:, i] = network.jacobian(params, x[i]) @ losses.grad_f(kind, f[i], yi)
    return cols


def grad_covariance(
    params: network.MlpParams, x: np.ndarray, y, kind: str, param_cap: int = DEFAULT_PARAM_CAP
) -> np.ndarray:
    """Uncentered covariance of per-sample loss gradients, (1/m) sum g g^T."""
    x = _check_inputs(params, x, param_cap)
    g = gradient_stack(params, x, y, kind)
    c = g @ g.T / x.shape[0]
    return 0.5 * (c + c.T)


def jac_covariance(
    params: network.MlpParams, x: np.ndarray, param_cap: int = DEFAULT_PARAM_CAP
) -> np.ndarray:
    """Covariance of network Jacobian columns, (1/n) sum_i J_i J_i^T.

    Computed as (1/n) Z Z^T with Z the (p, K n) matrix of stacked
    per-sample Jacobian columns; the per-sample accumulation route is kept
    in the tests as an independent path.
    """
    x = _check_inputs(params, x, param_cap)
    z = jacobian_stack(params, x)
    c = z @ z.T / x.shape[0]
    return 0.5 * (c + c.T)


def jacobian_stack(params: network.MlpParams, x: np.ndarray) -> np.ndarray:
    """All per-sample Jacobian columns side by side, shape (p, K * n)."""
    x = np.asarray(x, dtype=np.float64)
    return np.concatenate([network.jacobian(params, x[i]) for i in range(x.shape[0])], axis=1)


@dataclass(frozen=True)
class RankLawReport:
    measured_rank: int
    predicted_rank: int
    p: int
    n: int
    k_out: int
    kind: str

    @property
    def deficit(self) -> int:
        return self.predicted_rank - self.measured_rank

    def to_dict(self) -> dict:
        return {
            "measured_rank": self.measured_rank,
            "predicted_rank": self.predicted_rank,
            "deficit": self.deficit,
        }


def rank_law_check(
    outer: np.ndarray,
    kind: str,
    n: int,
    k_out: int,
    zero_tol_rel: float = linalg.DEFAULT_ZERO_TOL_REL,
) -> RankLawReport:
    """Measured rank of the outer Hessian against min(p, K n) or min(p, (K-1) n).

    Cross-entropy loses one direction per sample because the output-space
    Hessian diag(p) - p p^T annihilates the all-ones vector.
    """
    summary = linalg.spectrum_of(outer, zero_tol_rel)
    p = outer.shape[0]
    per_sample = k_out if kind == "mse" else k_out - 1
    predicted = min(p, per_sample * n)
    return RankLawReport(
        measured_rank=summary.rank,
        predicted_rank=predicted,
        p=p,
        n=n,
        k_out=k_out,
        kind=kind,
    )


# ---------------------------------------------------------------------------
# binary matrix dump: 16-byte header (magic "HDD1", u32 dim, 8 reserved),
# then row-major float64 little-endian entries

MAGIC = b"HDD1"
_HEADER = struct.Struct("<4sI8x")


def save_matrix(path, a: np.ndarray):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("only square matrices are dumped")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, a.shape[0]))
        fh.write(a.astype("<f8", copy=False).tobytes(order="C"))


def load_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ValueError("truncated matrix file header")
        magic, dim = _HEADER.unpack(header)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != dim * dim:
        raise ValueError(f"expected {dim * dim} entries, found {data.size}")
    return data.reshape(dim, dim).astype(np.float64)
