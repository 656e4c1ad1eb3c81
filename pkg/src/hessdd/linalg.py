"""Dense symmetric eigen-analysis and spectrum summaries.

Everything downstream (Hessian decompositions, risk bounds, leave-one-out
hat matrices) reduces to symmetric eigenproblems, so the conventions are
fixed here once: eigenvalues are reported in descending order, and "zero"
means magnitude at or below a relative threshold tied to the spectral
radius.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import CollapseError

# Relative cut below which an eigenvalue counts as zero.  Rank, the smallest
# non-zero eigenvalue, and inverse-trace sums all key off this.
DEFAULT_ZERO_TOL_REL = 1e-10


def check_symmetric(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Validate a dense symmetric matrix and return it symmetrized.

    Accepts any square array with finite entries; returns float64
    0.5 * (A + A.T) so tiny asymmetries from accumulation order cannot
    leak into eigensolves.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return 0.5 * (a + a.T)


def sym_eig(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full eigendecomposition of a symmetric matrix.

    Returns (eigenvalues, eigenvectors) with eigenvalues descending and
    eigenvectors in matching columns, so a == V @ diag(w) @ V.T up to
    roundoff.
    """
    a = check_symmetric(a)
    w, v = np.linalg.eigh(a)
    order = np.argsort(w)[::-1]
    return w[order], v[:, order]


@dataclass(frozen=True)
class SpectrumSummary:
    """Descending spectrum of a symmetric matrix plus derived scalars.

    Eigenvalues with |lambda| <= zero_tol are treated as exact zeros and
    excluded from rank, lambda_min_nonzero, condition_number, nuclear_norm
    and inverse_trace.  lambda_min_nonzero is the smallest retained
    positive eigenvalue when any exist, otherwise the smallest retained
    magnitude.  trace is the plain matrix trace over all eigenvalues.
    """

    eigenvalues: np.ndarray
    zero_tol: float
    rank: int
    lambda_max: float | None
    lambda_min_nonzero: float | None
    trace: float
    nuclear_norm: float
    condition_number: float | None
    inverse_trace: float

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "zero_tol": self.zero_tol,
            "lambda_max": self.lambda_max,
            "lambda_min_nonzero": self.lambda_min_nonzero,
            "trace": self.trace,
            "nuclear_norm": self.nuclear_norm,
            "condition_number": self.condition_number,
            "inverse_trace": self.inverse_trace,
        }


def summarize_spectrum(
    eigenvalues: np.ndarray, zero_tol_rel: float = DEFAULT_ZERO_TOL_REL
) -> SpectrumSummary:
    """Summarize a (descending or unordered) eigenvalue array.

    The zero threshold is relative to the spectral radius:
    zero_tol = zero_tol_rel * max(|lambda_1|, |lambda_p|).  A rank-0
    summary (every eigenvalue under the threshold) is valid and models a
    fully collapsed spectrum; lambda_min_nonzero and condition_number are
    then absent.
    """
    w = np.asarray(eigenvalues, dtype=np.float64).ravel()
    if w.size == 0:
        raise ValueError("empty spectrum")
    if not np.all(np.isfinite(w)):
        raise ValueError("spectrum contains non-finite entries")
    if not (0.0 <= zero_tol_rel < 1.0):
        raise ValueError(f"zero_tol_rel out of range: {zero_tol_rel}")
    w = np.sort(w)[::-1]
    radius = max(abs(w[0]), abs(w[-1]))
    zero_tol = zero_tol_rel * radius
    kept = w[np.abs(w) > zero_tol]
    rank = int(kept.size)
    trace = float(np.sum(w))
    if rank == 0:
        return SpectrumSummary(
            eigenvalues=w,
            zero_tol=float(zero_tol),
            rank=0,
            lambda_max=None,
            lambda_min_nonzero=None,
            trace=trace,
            nuclear_norm=0.0,
            condition_number=None,
            inverse_trace=0.0,
        )
    magnitudes = np.abs(kept)
    positive = kept[kept > 0]
    lam_min_nz = float(np.min(positive)) if positive.size else float(np.min(magnitudes))
    lam_max = float(np.max(magnitudes))
    return SpectrumSummary(
        eigenvalues=w,
        zero_tol=float(zero_tol),
        rank=rank,
        lambda_max=lam_max,
        lambda_min_nonzero=lam_min_nz,
        trace=trace,
        nuclear_norm=float(np.sum(magnitudes)),
        condition_number=lam_max / lam_min_nz,
        inverse_trace=float(np.sum(1.0 / magnitudes)),
    )


def spectrum_of(a: np.ndarray, zero_tol_rel: float = DEFAULT_ZERO_TOL_REL) -> SpectrumSummary:
    """Convenience: eigendecompose a symmetric matrix and summarize."""
    w, _ = sym_eig(a)
    return summarize_spectrum(w, zero_tol_rel)


def pinv_apply(
    a: np.ndarray, v: np.ndarray, zero_tol_rel: float = DEFAULT_ZERO_TOL_REL
) -> np.ndarray:
    """Apply the Moore-Penrose pseudo-inverse of a symmetric matrix to v.

    Components along eigenvalues under the relative zero threshold are
    dropped rather than amplified.
    """
    w, vec = sym_eig(a)
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != a.shape[0]:
        raise ValueError(f"vector length {v.shape[0]} does not match dim {a.shape[0]}")
    radius = max(abs(w[0]), abs(w[-1])) if w.size else 0.0
    zero_tol = zero_tol_rel * radius
    inv = np.where(np.abs(w) > zero_tol, 1.0 / np.where(w == 0, 1.0, w), 0.0)
    return vec @ (inv * (vec.T @ v))


def tikhonov_solve(a: np.ndarray, v: np.ndarray, lam: float) -> np.ndarray:
    """Solve (A + lam * I) x = v for symmetric A; lam must be positive."""
    if not lam > 0:
        raise ValueError(f"regularizer must be positive, got {lam}")
    a = check_symmetric(a)
    v = np.asarray(v, dtype=np.float64)
    return np.linalg.solve(a + lam * np.eye(a.shape[0]), v)
