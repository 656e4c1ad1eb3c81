"""Population-risk complexity term and its spectral lower/upper bounds.

The central quantity is the influence-function correction to the training
loss: a trace of the regularized inverse loss Hessian against the
uncentered covariance of loss gradients, scaled by 1/(n + 1).  The lower
bound replaces the gradient covariance by its weakest useful direction
(smallest non-zero eigenvalue of the Jacobian covariance over evaluation
samples whose output-space residual energy clears a threshold tau), the
upper bound by its strongest one.  The lower bound's 1/lambda_r dependence
on the smallest non-zero Hessian eigenvalue is what diverges at the
interpolation threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hessian, linalg, losses, network
from .data import Dataset
from .exceptions import CollapseError

DEFAULT_TAU = 1e-3


def _min_positive(eigenvalues) -> float | None:
    pos = eigenvalues[eigenvalues > 0]
    return float(np.min(pos)) if pos.size else None


def complexity_term(
    h_loss: np.ndarray,
    c_grad: np.ndarray,
    lam: float = 0.0,
    zero_tol_rel: float = linalg.DEFAULT_ZERO_TOL_REL,
) -> float:
    """Tr((H + lam I)^-1 C) computed in H's eigenbasis.

    With lam > 0 every eigendirection contributes (v^T C v) / (lambda + lam).
    With lam = 0 the inverse acts on H's non-zero eigenspace only
    (pseudo-inverse route); a fully collapsed H is an error then.
    """
    w, v = linalg.sym_eig(h_loss)
    c_grad = linalg.check_symmetric(c_grad, "gradient covariance")
    quad = np.einsum("ij,ij->j", v, c_grad @ v)
    if lam > 0:
        return float(np.sum(quad / (w + lam)))
    if lam < 0:
        raise ValueError("regularizer must be non-negative")
    radius = max(abs(w[0]), abs(w[-1]))
    keep = np.abs(w) > zero_tol_rel * radius
    if not np.any(keep):
        raise CollapseError("Hessian spectrum is fully collapsed and lam = 0")
    return float(np.sum(quad[keep] / w[keep]))


@dataclass(frozen=True)
class BoundInputs:
    """Filtered evaluation-side quantities feeding the spectral bounds.

    sigma2_min/sigma2_max bracket the residual energies that survive the
    tau filter; alpha is the surviving fraction; lambda_min_cjac and
    lambda_max_cjac are the extreme non-zero eigenvalues of the Jacobian
    covariance over the surviving samples; lambda_r_hess is the smallest
    non-zero eigenvalue of the training-set loss Hessian; n is the
    training-set size.
    """

    sigma2_min: float
    sigma2_max: float
    alpha: float
    lambda_min_cjac: float | None
    lambda_max_cjac: float | None
    lambda_r_hess: float | None
    lambda_r_raw: float | None
    n: int
    tau: float
    kept: int

    def to_dict(self) -> dict:
        return {
            "sigma2_min": self.sigma2_min,
            "sigma2_max": self.sigma2_max,
            "alpha": self.alpha,
            "lambda_min_cjac": self.lambda_min_cjac,
            "lambda_max_cjac": self.lambda_max_cjac,
            "lambda_r_hess": self.lambda_r_hess,
            "lambda_r_raw": self.lambda_r_raw,
            "n": self.n,
            "tau": self.tau,
            "kept": self.kept,
        }


def estimate_bound_inputs(
    params: network.MlpParams,
    eval_ds: Dataset,
    kind: str,
    hess_spectrum: linalg.SpectrumSummary,
    n_train: int,
    tau: float = DEFAULT_TAU,
    zero_tol_rel: float = linalg.DEFAULT_ZERO_TOL_REL,
    param_cap: int = hessian.DEFAULT_PARAM_CAP,
) -> BoundInputs:
    """Residual-filtered evaluation statistics for the bounds.

    Evaluation samples with output-space residual energy below tau are
    dropped; the Jacobian covariance is taken over the survivors.  With no
    survivors alpha is 0 and the bounds degenerate gracefully.
    """
    if tau < 0:
        raise ValueError("tau must be non-negative")
    f = network.batch_forward(params, eval_ds.x)
    y = eval_ds.loss_targets(kind)
    energies = np.array(
        [
            losses.residual_energy(kind, f[i], y[i] if kind == "mse" else int(y[i]))
            for i in range(eval_ds.n)
        ]
    )
    keep = energies >= tau
    kept = int(np.sum(keep))
    alpha = kept / eval_ds.n
    if kept == 0:
        return BoundInputs(
            sigma2_min=0.0,
            sigma2_max=0.0,
            alpha=0.0,
            lambda_min_cjac=None,
            lambda_max_cjac=None,
            lambda_r_hess=hess_spectrum.lambda_min_nonzero,
            lambda_r_raw=_min_positive(hess_spectrum.eigenvalues),
            n=n_train,
            tau=tau,
            kept=0,
        )
    cjac = hessian.jac_covariance(params, eval_ds.x[keep], param_cap)
    cj = linalg.spectrum_of(cjac, zero_tol_rel)
    return BoundInputs(
        sigma2_min=float(np.min(energies[keep])),
        sigma2_max=float(np.max(energies[keep])),
        alpha=alpha,
        lambda_min_cjac=cj.lambda_min_nonzero,
        lambda_max_cjac=cj.lambda_max,
        lambda_r_hess=hess_spectrum.lambda_min_nonzero,
        lambda_r_raw=_min_positive(hess_spectrum.eigenvalues),
        n=n_train,
        tau=tau,
        kept=kept,
    )


@dataclass(frozen=True)
class LowerBound:
    """train_term + complexity / (n + 1); divergent when lambda_r is gone.

    Divergence is a flag, never an IEEE infinity: value is None then, and
    inv_lambda_r carries 1/lambda_r for the raw smallest positive
    eigenvalue when one exists below the zero threshold.
    """

    value: float | None
    complexity: float | None
    divergent: bool
    train_term: float
    inv_lambda_r: float | None = None

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "complexity": self.complexity,
            "divergent": self.divergent,
            "train_term": self.train_term,
            "inv_lambda_r": self.inv_lambda_r,
        }


def lower_bound_complexity(inputs: BoundInputs, lam: float = 0.0) -> float | None:
    """sigma2_min * alpha * lambda_min(C_jac) / (lambda_r + lam); None if divergent."""
    if inputs.alpha == 0.0:
        return 0.0
    if inputs.lambda_min_cjac is None:
        return 0.0
    denom = (inputs.lambda_r_hess or 0.0) + lam
    if denom <= 0.0:
        return None
    return inputs.sigma2_min * inputs.alpha * inputs.lambda_min_cjac / denom


def lower_bound(inputs: BoundInputs, train_term: float) -> LowerBound:
    """Population-risk lower bound from filtered evaluation statistics.

    train_term is the measured training loss standing in for the
    one-sample-out training loss.
    """
    if inputs.alpha == 0.0:
        return LowerBound(value=train_term, complexity=0.0, divergent=False, train_term=train_term)
    comp = lower_bound_complexity(inputs, lam=0.0)
    if comp is None:
        inv = 1.0 / inputs.lambda_r_raw if inputs.lambda_r_raw else None
        return LowerBound(
            value=None,
            complexity=None,
            divergent=True,
            train_term=train_term,
            inv_lambda_r=inv,
        )
    return LowerBound(
        value=train_term + comp / (inputs.n + 1),
        complexity=comp,
        divergent=False,
        train_term=train_term,
    )


def upper_bound_complexity(
    h_loss: np.ndarray, inputs: BoundInputs, lam: float
) -> float:
    """sigma2_max * alpha * Tr((H + lam I)^-1) * lambda_max(C_jac); needs lam > 0."""
    if not lam > 0:
        raise ValueError("upper bound needs a positive regularizer")
    if inputs.alpha == 0.0 or inputs.lambda_max_cjac is None:
        return 0.0
    w, _ = linalg.sym_eig(h_loss)
    inv_trace = float(np.sum(1.0 / (w + lam)))
    return inputs.sigma2_max * inputs.alpha * inv_trace * inputs.lambda_max_cjac


def trace_capture(
    summary: linalg.SpectrumSummary, fractions
) -> dict[float, float]:
    """Percent of the inverse-trace carried by the smallest non-zero eigenvalues.

    For each fraction q the ceil(q * rank) smallest retained eigenvalues
    contribute sum(1/lambda) relative to the full inverse trace, in
    percent.  Near the interpolation threshold a tiny q captures most of
    the sum; on a flat spectrum the capture equals q.
    """
    out: dict[float, float] = {}
    w = summary.eigenvalues
    kept = np.abs(w[np.abs(w) > summary.zero_tol])
    kept_sorted = np.sort(kept)  # ascending: smallest magnitudes first
    total = summary.inverse_trace
    for q in fractions:
        if not 0 < q <= 1:
            raise ValueError(f"fraction out of (0, 1]: {q}")
        if summary.rank == 0 or total == 0.0:
            out[float(q)] = 0.0
            continue
        take = int(np.ceil(q * summary.rank))
        out[float(q)] = 100.0 * float(np.sum(1.0 / kept_sorted[:take])) / total
    return out
