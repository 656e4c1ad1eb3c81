"""Monte-Carlo spectral edges of sample covariance matrices.

For an m x n matrix Z of iid unit-variance columns the extreme eigenvalues
of (1/n) Z Z^T concentrate at (1 -+ c sqrt(gamma))^2 with gamma = m / n and
c an empirical constant near 1 for the distributions here.  The smallest
eigenvalue's approach to zero as gamma -> 1 is the random-design face of
the interpolation-threshold divergence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DISTRIBUTIONS = ("gaussian", "rademacher", "uniform")
FIT_GAMMAS = tuple(np.round(np.arange(0.1, 1.0, 0.1), 1))


def sample_matrix(dist: str, m: int, n: int, seed) -> np.ndarray:
    """m x n matrix of iid zero-mean unit-variance entries."""
    if dist not in DISTRIBUTIONS:
        raise ValueError(f"unknown distribution {dist!r}; expected one of {DISTRIBUTIONS}")
    rng = np.random.default_rng(seed)
    if dist == "gaussian":
        return rng.normal(size=(m, n))
    if dist == "rademacher":
        return rng.integers(0, 2, size=(m, n)).astype(np.float64) * 2.0 - 1.0
    return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=(m, n))


def _trial_seed(seed: int, trial: int):
    return np.random.SeedSequence(entropy=seed, spawn_key=(trial,))


def _extremes(dist: str, m: int, n: int, trials: int, seed: int):
    lo = np.zeros(trials)
    hi = np.zeros(trials)
    for t in range(trials):
        z = sample_matrix(dist, m, n, _trial_seed(seed, t))
        w = np.linalg.eigvalsh(z @ z.T / n)
        lo[t], hi[t] = w[0], w[-1]
    return lo, hi


@dataclass(frozen=True)
class EdgeCheck:
    """Empirical vs predicted spectral edges at one aspect ratio."""

    dist: str
    m: int
    n: int
    gamma: float
    trials: int
    lambda_min_mean: float
    lambda_min_sd: float
    lambda_max_mean: float
    lambda_max_sd: float
    c: float
    predicted_min: float
    predicted_max: float

    def to_dict(self) -> dict:
        return {
            "dist": self.dist,
            "m": self.m,
            "n": self.n,
            "gamma": self.gamma,
            "trials": self.trials,
            "lambda_min_mean": self.lambda_min_mean,
            "lambda_min_sd": self.lambda_min_sd,
            "lambda_max_mean": self.lambda_max_mean,
            "lambda_max_sd": self.lambda_max_sd,
            "c": self.c,
            "predicted_min": self.predicted_min,
            "predicted_max": self.predicted_max,
        }


def fit_edge_constant(
    dist: str, n: int, trials: int = 10, seed: int = 0, gammas=FIT_GAMMAS
) -> float:
    """Least-squares fit of c in the edge laws over an aspect-ratio grid.

    Both edges give linear relations in sqrt(gamma):
    sqrt(lambda_max) - 1 = c sqrt(gamma) and 1 - sqrt(lambda_min) =
    c sqrt(gamma); the fit regresses both through the origin.
    """
    xs, zs = [], []
    for k, g in enumerate(gammas):
        m = max(1, int(round(g * n)))
        lo, hi = _extremes(dist, m, n, trials, seed + 7919 * k)
        root_g = np.sqrt(m / n)
        xs.extend([root_g, root_g])
        zs.extend([1.0 - np.sqrt(np.mean(lo)), np.sqrt(np.mean(hi)) - 1.0])
    xs = np.asarray(xs)
    zs = np.asarray(zs)
    return float(xs @ zs / (xs @ xs))


def edge_check(
    dist: str, m: int, n: int, trials: int = 10, seed: int = 0, c: float = 1.0
) -> EdgeCheck:
    """Monte-Carlo spectral edges at one (m, n) against (1 -+ c sqrt(gamma))^2.

    Per-trial randomness comes from independent streams spawned off
    (seed, trial index), so runs are reproducible and trials independent.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    lo, hi = _extremes(dist, m, n, trials, seed)
    gamma = m / n
    return EdgeCheck(
        dist=dist,
        m=m,
        n=n,
        gamma=gamma,
        trials=trials,
        lambda_min_mean=float(np.mean(lo)),
        lambda_min_sd=float(np.std(lo)),
        lambda_max_mean=float(np.mean(hi)),
        lambda_max_sd=float(np.std(hi)),
        c=c,
        predicted_min=(1.0 - c * np.sqrt(gamma)) ** 2,
        predicted_max=(1.0 + c * np.sqrt(gamma)) ** 2,
    )
