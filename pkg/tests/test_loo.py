"""Leave-one-out estimator tests.

The brute-force retraining oracle anchors everything: the closed-form
least-squares identity, the second-order influence estimate, and the
network variant through its Jacobian features.
"""

import numpy as np
import pytest

from hessdd import network
from hessdd.data import Dataset
from hessdd.exceptions import LeverageError
from hessdd.loo import (
    brute_force_loo,
    hat_matrix,
    loo_influence,
    loo_linear,
    loo_nn,
    loo_ols_exact,
)
from hessdd.train import SgdSchedule, sgd_train


def random_instance(rng, n=30, d=5):
    x = rng.normal(size=(n, d))
    y = x @ rng.normal(size=d) + 0.3 * rng.normal(size=n)
    return x, y


class TestHatMatrix:
    def test_orthonormal_design_gives_identity(self):
        q, _ = np.linalg.qr(np.random.default_rng(0).normal(size=(4, 4)))
        hat = hat_matrix(q, 0.0)
        assert np.allclose(hat.a, np.eye(4), atol=1e-12)
        assert hat.source == "ols"
        assert not hat.rank_deficient

    def test_ones_column_is_mean_projector(self):
        hat = hat_matrix(np.ones((3, 1)), 0.0)
        assert np.allclose(hat.a, np.full((3, 3), 1 / 3), atol=1e-14)
        assert hat.leverages == pytest.approx([1 / 3] * 3)

    def test_push_through_identity(self):
        rng = np.random.default_rng(1)
        for n, q in ((6, 3), (4, 9)):
            x = rng.normal(size=(n, q))
            lam = 0.7
            direct = x @ np.linalg.solve(x.T @ x + lam * np.eye(q), x.T)
            hat = hat_matrix(x, lam)
            assert np.allclose(hat.a, direct, atol=1e-10)
            assert hat.source == "ridge_pushthrough"

    def test_trace_equals_rank_at_lam_zero(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(8, 3))
        x = np.hstack([x, x[:, :1]])  # duplicate column: rank stays 3
        hat = hat_matrix(x, 0.0)
        assert np.trace(hat.a) == pytest.approx(3.0, abs=1e-9)
        assert hat.rank_deficient

    def test_trace_matches_singular_value_shrinkage(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(7, 4))
        lam = 0.9
        s = np.linalg.svd(x, compute_uv=False)
        expect = float(np.sum(s**2 / (s**2 + lam)))
        hat = hat_matrix(x, lam)
        assert np.trace(hat.a) == pytest.approx(expect, abs=1e-9)

    def test_leverages_bounded(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(10, 4))
        for lam in (0.0, 0.5):
            lev = hat_matrix(x, lam).leverages
            assert np.all(lev >= -1e-12)
            assert np.all(lev <= 1.0 + 1e-10)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            hat_matrix(np.ones(3), 0.0)
        with pytest.raises(ValueError):
            hat_matrix(np.ones((3, 2)), -0.5)


class TestOlsExact:
    def test_hand_worked_case(self):
        x = np.ones((3, 1))
        y = np.array([0.0, 0.0, 3.0])
        assert loo_ols_exact(x, y) == pytest.approx(4.5)

    def test_hand_case_matches_brute_force(self):
        x = np.ones((3, 1))
        y = np.array([0.0, 0.0, 3.0])
        assert brute_force_loo(x, y) == pytest.approx(4.5)

    def test_consistent_targets_give_zero(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(10, 3))
        y = x @ np.array([1.0, -2.0, 0.5])
        assert loo_ols_exact(x, y) == pytest.approx(0.0, abs=1e-18)

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            x, y = random_instance(rng)
            assert loo_ols_exact(x, y) == pytest.approx(
                brute_force_loo(x, y), abs=1e-8, rel=1e-8
            )


class TestBruteForce:
    def test_duplicate_consistent_samples(self):
        x = np.array([[1.0], [1.0]])
        y = np.array([2.0, 2.0])
        assert brute_force_loo(x, y) == pytest.approx(0.0, abs=1e-20)

    def test_ridge_monotone_toward_prior_on_fixed_data(self):
        rng = np.random.default_rng(7)
        x, y = random_instance(rng, n=20, d=3)
        lams = (1e-3, 1e-1, 1e1, 1e3, 1e5)
        vals = [brute_force_loo(x, y, lam) for lam in lams]
        # with heavy shrinkage predictions go to zero, LOO approaches mean(y^2)
        assert vals[-1] == pytest.approx(np.mean(y**2), rel=0.05)
        assert vals[-1] >= vals[0]


class TestLooInfluence:
    def test_zero_leverage_reduces_to_mean_square(self):
        hat = hat_matrix(np.zeros((4, 2)), 0.5)  # zero design: A = 0
        r = np.array([1.0, -2.0, 0.5, 0.0])
        for order in (1, 2):
            assert loo_influence(hat, r, order=order) == pytest.approx(np.mean(r**2))

    def test_order2_equals_exact_ls(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            x, y = random_instance(rng, n=25, d=4)
            theta, *_ = np.linalg.lstsq(x, y, rcond=None)
            r = y - x @ theta
            hat = hat_matrix(x, 0.0)
            assert loo_influence(hat, r, order=2) == pytest.approx(
                loo_ols_exact(x, y), abs=1e-9, rel=1e-9
            )

    def test_order1_underestimates_order2(self):
        # first order keeps a single power of leverage, so it sits below
        # the squared-denominator form whenever leverage is positive
        rng = np.random.default_rng(9)
        x, y = random_instance(rng, n=12, d=5)
        rep = loo_linear(x, y)
        assert rep.loo1 <= rep.loo2 + 1e-12
        gap = rep.loo2 - rep.loo1
        assert gap > 0

    def test_order1_gap_grows_with_leverage(self):
        # scale one sample's features: its leverage rises toward 1 and the
        # first-order estimate falls further behind the exact form
        rng = np.random.default_rng(10)
        x, y = random_instance(rng, n=15, d=3)
        gaps = []
        for scale in (1.0, 3.0, 9.0):
            xs = x.copy()
            xs[0] *= scale
            rep = loo_linear(xs, y)
            gaps.append((rep.loo2 - rep.loo1) / max(rep.loo2, 1e-30))
        assert gaps[0] < gaps[-1]

    def test_mode_exact_matches_asymptotic_for_ols(self):
        rng = np.random.default_rng(11)
        x, y = random_instance(rng, n=20, d=4)
        a = loo_linear(x, y, mode="asymptotic")
        e = loo_linear(x, y, mode="exact")
        assert a.loo2 == pytest.approx(e.loo2, rel=1e-12)
        assert a.loo1 == pytest.approx(e.loo1, rel=1e-9)

    def test_leverage_overflow_names_sample(self):
        # interpolating design: n = q makes every leverage exactly 1
        x = np.eye(3)
        y = np.array([1.0, 2.0, 3.0])
        with pytest.raises(LeverageError) as exc:
            loo_ols_exact(x, y)
        assert exc.value.index == 0
        assert exc.value.leverage == pytest.approx(1.0)

    def test_rejects_bad_order_and_mode(self):
        hat = hat_matrix(np.ones((3, 1)), 0.0)
        r = np.zeros(3)
        with pytest.raises(ValueError):
            loo_influence(hat, r, order=3)
        with pytest.raises(ValueError):
            loo_influence(hat, r, mode="other")
        with pytest.raises(ValueError):
            loo_influence(hat, np.zeros(5), order=2)

    def test_influence_zero_mean_at_optimum(self):
        # per-sample parameter influences (X^T X)^-1 x_i r_i sum to zero at
        # the least-squares optimum because X^T r = 0 there
        rng = np.random.default_rng(12)
        x, y = random_instance(rng, n=25, d=4)
        theta, *_ = np.linalg.lstsq(x, y, rcond=None)
        r = y - x @ theta
        g = np.linalg.inv(x.T @ x)
        directions = (g @ (x * r[:, None]).T).T
        assert np.linalg.norm(directions.mean(axis=0)) <= 1e-8


class TestLooNn:
    def interpolating_net(self, n=10, d=3, h=12, seed=0):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(n, d))
        y = np.sin(x @ np.array([1.0, -0.5, 0.3]))[:, None]
        ds = Dataset(x, y, "regression", 1)
        spec = network.MlpSpec(d, (h,), 1)
        sched = SgdSchedule(epochs=4000, lr0=0.2, decay=1.0, batch_size=n)
        return sgd_train(spec, ds, "mse", sched, seed=3), ds

    def test_linear_net_reduces_to_ols(self):
        rng = np.random.default_rng(13)
        x = rng.normal(size=(20, 4))
        y = x @ rng.normal(size=4) + 0.2 * rng.normal(size=20)
        ds = Dataset(x, y[:, None], "regression", 1)
        spec = network.MlpSpec(4, (), 1, bias=False)
        w, *_ = np.linalg.lstsq(x, y, rcond=None)
        params = network.flatten(spec, [(w[None, :], None)])
        rep = loo_nn(params, ds, lam=0.0)
        assert rep.loo2 == pytest.approx(loo_ols_exact(x, y), rel=1e-9)

    def test_output_only_net_is_feature_space_ols(self):
        # freeze the hidden layer, plant the ridge solution in the output
        # weights: the network LOO and the feature-space ridge LOO then see
        # the same design (hidden activations) and the same residuals
        rng = np.random.default_rng(14)
        n, d, h = 16, 3, 5
        x = rng.normal(size=(n, d))
        y = rng.normal(size=n)
        ds = Dataset(x, y[:, None], "regression", 1)
        spec = network.MlpSpec(d, (h,), 1, bias=False, output_only=True)
        params = network.init_params(spec, 1)
        w1, _ = network.unflatten(params)[0]
        feats = np.maximum(x @ w1.T, 0.0)
        lam = 0.3
        theta = np.linalg.solve(feats.T @ feats + lam * np.eye(h), feats.T @ y)
        planted = params.replace_theta(theta)
        rep = loo_nn(planted, ds, lam=lam)
        oracle = loo_linear(feats, y, lam=lam)
        assert rep.loo2 == pytest.approx(oracle.loo2, rel=1e-9)
        assert rep.loo1 == pytest.approx(oracle.loo1, rel=1e-9)

    def test_hat_trace_counts_jacobian_rank(self):
        m, ds = self.interpolating_net()
        z = np.stack([network.jacobian(m.params, xi)[:, 0] for xi in ds.x])
        rank = np.linalg.matrix_rank(z)
        hat = hat_matrix(z, 0.0)
        assert np.trace(hat.a) == pytest.approx(rank, abs=1e-6)
        assert rank <= min(ds.n, m.params.theta.size)

    def test_multi_output_rejected(self):
        rng = np.random.default_rng(15)
        ds = Dataset(rng.normal(size=(8, 3)), rng.normal(size=(8, 2)), "regression", 2)
        spec = network.MlpSpec(3, (4,), 2)
        params = network.init_params(spec, 0)
        with pytest.raises(ValueError):
            loo_nn(params, ds, lam=0.1)

    def test_ridge_loo_near_brute_force_on_jacobian_features(self):
        # at an interpolating optimum the local model is the tangent one;
        # LOO on frozen Jacobian features has an exact ridge oracle
        m, ds = self.interpolating_net()
        assert m.status == "interpolated"
        z = np.stack([network.jacobian(m.params, xi)[:, 0] for xi in ds.x])
        f = network.batch_forward(m.params, ds.x)[:, 0]
        r = ds.targets.ravel() - f
        lam = 1e-2
        rep = loo_nn(m, ds, lam=lam)
        hat = hat_matrix(z, lam)
        assert rep.loo2 == pytest.approx(loo_influence(hat, r, order=2), rel=1e-12)
        assert rep.train_mse == pytest.approx(np.mean(r**2), rel=1e-12)
