"""Monte-Carlo covariance spectral edges: sampling, edge law, divergence."""

import numpy as np
import pytest

from hessdd import rmt


class TestSampleMatrix:
    def test_deterministic_per_seed(self):
        for dist in rmt.DISTRIBUTIONS:
            a = rmt.sample_matrix(dist, 7, 11, 42)
            b = rmt.sample_matrix(dist, 7, 11, 42)
            assert np.array_equal(a, b)

    def test_seeds_differ(self):
        a = rmt.sample_matrix("gaussian", 7, 11, 0)
        b = rmt.sample_matrix("gaussian", 7, 11, 1)
        assert not np.array_equal(a, b)

    def test_unknown_distribution_rejected(self):
        with pytest.raises(ValueError, match="distribution"):
            rmt.sample_matrix("cauchy", 4, 4, 0)

    def test_shape(self):
        assert rmt.sample_matrix("uniform", 3, 9, 0).shape == (3, 9)

    def test_rademacher_entries_are_signs(self):
        z = rmt.sample_matrix("rademacher", 10, 200, 3)
        assert set(np.unique(z)) == {-1.0, 1.0}

    def test_uniform_entries_bounded(self):
        z = rmt.sample_matrix("uniform", 10, 500, 3)
        assert np.all(np.abs(z) <= np.sqrt(3.0) + 1e-12)

    def test_gaussian_mean_within_clt_band(self):
        z = rmt.sample_matrix("gaussian", 50, 4000, 0)
        assert abs(z.mean()) <= 3.0 / np.sqrt(50 * 4000)

    def test_unit_variance_all_distributions(self):
        for dist in rmt.DISTRIBUTIONS:
            z = rmt.sample_matrix(dist, 50, 4000, 1)
            assert abs(z.var() - 1.0) <= 0.03

    def test_column_covariance_near_identity(self):
        # At m=20 the relative Frobenius error concentrates at sqrt(m/n):
        # about 6.3% for n=5000, under 5% only once n reaches 2e4.
        for dist in rmt.DISTRIBUTIONS:
            z = rmt.sample_matrix(dist, 20, 5000, 0)
            cov = z @ z.T / 5000
            rel = np.linalg.norm(cov - np.eye(20)) / np.linalg.norm(np.eye(20))
            assert rel <= 0.08
        z = rmt.sample_matrix("gaussian", 20, 20000, 0)
        cov = z @ z.T / 20000
        rel = np.linalg.norm(cov - np.eye(20)) / np.linalg.norm(np.eye(20))
        assert rel <= 0.05


class TestEdgeCheck:
    def test_fields_and_predictions(self):
        ec = rmt.edge_check("gaussian", 30, 120, trials=3, seed=0, c=0.9)
        assert ec.gamma == 0.25 and ec.m == 30 and ec.n == 120 and ec.trials == 3
        assert ec.predicted_min == pytest.approx((1 - 0.9 * 0.5) ** 2)
        assert ec.predicted_max == pytest.approx((1 + 0.9 * 0.5) ** 2)
        assert ec.lambda_min_mean <= ec.lambda_max_mean
        d = ec.to_dict()
        assert d["gamma"] == 0.25 and d["c"] == 0.9

    def test_deterministic(self):
        a = rmt.edge_check("rademacher", 20, 80, trials=4, seed=5)
        b = rmt.edge_check("rademacher", 20, 80, trials=4, seed=5)
        assert a.to_dict() == b.to_dict()

    def test_no_trials_rejected(self):
        with pytest.raises(ValueError, match="trial"):
            rmt.edge_check("gaussian", 10, 40, trials=0)

    def test_gaussian_quarter_gamma_edges(self):
        ec = rmt.edge_check("gaussian", 300, 1200, trials=6, seed=0)
        assert abs(ec.lambda_min_mean - 0.25) <= 0.025
        assert abs(ec.lambda_max_mean - 2.25) <= 0.225

    def test_tiny_gamma_recovers_identity_spectrum(self):
        ec = rmt.edge_check("gaussian", 2, 10000, trials=5, seed=1)
        assert abs(ec.lambda_min_mean - 1.0) <= 0.05
        assert abs(ec.lambda_max_mean - 1.0) <= 0.05

    def test_edges_tighten_with_n(self):
        devs = []
        for n in (500, 4000):
            ec = rmt.edge_check("gaussian", n // 4, n, trials=10, seed=0)
            devs.append(abs(ec.lambda_min_mean - 0.25) + abs(ec.lambda_max_mean - 2.25))
        assert devs[1] <= devs[0]


class TestFitEdgeConstant:
    def test_near_unity_for_all_distributions(self):
        cs = {d: rmt.fit_edge_constant(d, 400, trials=3, seed=0) for d in rmt.DISTRIBUTIONS}
        for dist, c in cs.items():
            assert 0.9 <= c <= 1.1, (dist, c)
        spread = max(cs.values()) - min(cs.values())
        assert spread <= 0.05

    def test_deterministic(self):
        a = rmt.fit_edge_constant("uniform", 200, trials=2, seed=3)
        b = rmt.fit_edge_constant("uniform", 200, trials=2, seed=3)
        assert a == b


class TestSpectralDivergence:
    def test_adding_columns_never_shrinks_lambda_max(self):
        rng = np.random.default_rng(7)
        z = rng.normal(size=(6, 12))
        prev = -np.inf
        for k in range(1, 13):
            top = np.linalg.eigvalsh(z[:, :k] @ z[:, :k].T)[-1]
            assert top >= prev - 1e-10
            prev = top

    def test_inverse_lambda_min_blows_up_at_square_aspect(self):
        # The 1/lambda_min divergence as gamma -> 1 is the random-design
        # face of the interpolation-threshold peak.
        means = []
        for gamma in (0.2, 0.5, 0.8, 0.98):
            m = int(round(gamma * 1000))
            lo = [
                np.linalg.eigvalsh(
                    (z := rmt.sample_matrix("gaussian", m, 1000, 100 + t)) @ z.T / 1000
                )[0]
                for t in range(3)
            ]
            means.append(float(np.mean([1.0 / v for v in lo])))
        assert all(b > a for a, b in zip(means, means[1:]))
        assert means[-1] > 100.0
