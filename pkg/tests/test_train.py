"""Training-protocol tests.

Covers the quartered learning-rate schedule, determinism and status
semantics of sgd_train, the least-squares limit of the linear model, the
assumption report ratios, and the estimator front end.
"""

import numpy as np
import pytest
from sklearn.base import clone

from hessdd import hessian, network, train
from hessdd.data import Dataset, gen_classification, gen_redundant_regression
from hessdd.exceptions import ConfigError
from hessdd.train import ShallowMlp, SgdSchedule, assumption_report, sgd_train


def linear_regression_ds(n=40, d=5, noise_sd=0.5, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d))
    w = rng.normal(size=d)
    y = x @ w + 0.25 + noise_sd * rng.normal(size=n)
    return Dataset(x, y[:, None], "regression", 1)


def exact_linear_ds(n=24, d=4, seed=3):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d))
    w = rng.normal(size=d)
    return Dataset(x, (x @ w + 0.5)[:, None], "regression", 1)


class TestSgdSchedule:
    def test_defaults(self):
        s = SgdSchedule(epochs=100)
        assert s.lr0 == 0.5 and s.decay == 0.75 and s.batch_size == 32

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(epochs=-1),
            dict(epochs=10, lr0=0.0),
            dict(epochs=10, lr0=-0.5),
            dict(epochs=10, decay=0.0),
            dict(epochs=10, decay=1.5),
            dict(epochs=10, batch_size=0),
        ],
    )
    def test_rejects_bad_fields(self, kwargs):
        with pytest.raises(ConfigError):
            SgdSchedule(**kwargs)

    def test_decay_one_is_constant_rate(self):
        s = SgdSchedule(epochs=100, lr0=0.3, decay=1.0)
        assert all(s.lr_at(e) == 0.3 for e in (0, 25, 50, 99))

    def test_quarterly_decay(self):
        s = SgdSchedule(epochs=100, lr0=0.8, decay=0.5)
        assert s.lr_at(0) == 0.8
        assert s.lr_at(24) == 0.8
        assert s.lr_at(25) == 0.4
        assert s.lr_at(49) == 0.4
        assert s.lr_at(50) == 0.2
        assert s.lr_at(75) == 0.1
        assert s.lr_at(99) == 0.1

    def test_tiny_budget_never_decays_at_epoch_zero(self):
        s = SgdSchedule(epochs=1, lr0=0.5, decay=0.5)
        assert s.lr_at(0) == 0.5

    def test_zero_epochs_reports_lr0(self):
        assert SgdSchedule(epochs=0, lr0=0.7).lr_at(0) == 0.7


class TestSgdTrain:
    def test_deterministic_given_seed(self):
        ds = gen_classification(24, 5, 3, seed=1)
        spec = network.MlpSpec(5, (8,), 3)
        sched = SgdSchedule(epochs=30, lr0=0.2, batch_size=8)
        a = sgd_train(spec, ds, "mse", sched, seed=7)
        b = sgd_train(spec, ds, "mse", sched, seed=7)
        assert np.array_equal(a.theta_star, b.theta_star)
        assert np.array_equal(a.theta0, b.theta0)
        assert a.train_loss == b.train_loss
        assert a.status == b.status and a.epochs_run == b.epochs_run

    def test_seed_changes_trajectory(self):
        ds = gen_classification(24, 5, 3, seed=1)
        spec = network.MlpSpec(5, (8,), 3)
        sched = SgdSchedule(epochs=30, lr0=0.2, batch_size=8)
        a = sgd_train(spec, ds, "mse", sched, seed=0)
        b = sgd_train(spec, ds, "mse", sched, seed=1)
        assert not np.array_equal(a.theta_star, b.theta_star)

    def test_zero_epochs_returns_init(self):
        ds = linear_regression_ds()
        spec = network.MlpSpec(5, (6,), 1)
        m = sgd_train(spec, ds, "mse", SgdSchedule(epochs=0), seed=2)
        assert np.array_equal(m.theta_star, m.theta0)
        assert m.epochs_run == 0
        assert m.status == "converged"

    def test_theta0_is_kept(self):
        ds = linear_regression_ds()
        spec = network.MlpSpec(5, (6,), 1)
        m = sgd_train(spec, ds, "mse", SgdSchedule(epochs=50, lr0=0.05, batch_size=40), seed=2)
        assert not np.array_equal(m.theta_star, m.theta0)
        assert np.array_equal(m.params0().theta, m.theta0)
        assert np.array_equal(m.params.theta, m.theta_star)

    def test_linear_model_matches_least_squares(self):
        ds = linear_regression_ds(n=40, d=5, noise_sd=0.5, seed=0)
        spec = network.MlpSpec(5, (), 1)
        sched = SgdSchedule(epochs=4000, lr0=0.2, decay=0.75, batch_size=40)
        m = sgd_train(spec, ds, "mse", sched, seed=5)
        design = np.hstack([ds.x, np.ones((ds.n, 1))])
        ols, *_ = np.linalg.lstsq(design, ds.targets.ravel(), rcond=None)
        # theta layout for the linear model is (weights, bias)
        assert np.linalg.norm(m.theta_star - ols) <= 1e-3 * np.linalg.norm(ols)
        assert m.status == "converged"
        assert m.train_loss > 1e-4

    def test_regression_interpolation_flag(self):
        ds = exact_linear_ds()
        spec = network.MlpSpec(4, (), 1)
        m = sgd_train(
            spec, ds, "mse", SgdSchedule(epochs=3000, lr0=0.3, decay=1.0, batch_size=24), seed=0
        )
        assert m.status == "interpolated"
        assert m.train_loss <= train.MSE_INTERPOLATION_TOL
        assert m.train_accuracy is None

    def test_classification_interpolation_is_full_accuracy(self):
        ds = gen_classification(24, 5, 3, separation=4.0, seed=4)
        spec = network.MlpSpec(5, (12,), 3)
        m = sgd_train(spec, ds, "mse", SgdSchedule(epochs=300, lr0=0.1, batch_size=8), seed=1)
        assert m.status == "interpolated"
        assert m.train_accuracy == 1.0

    def test_divergence_flags_and_stops(self):
        ds = linear_regression_ds()
        spec = network.MlpSpec(5, (8,), 1)
        m = sgd_train(spec, ds, "mse", SgdSchedule(epochs=500, lr0=1e6, batch_size=40), seed=0)
        assert m.status == "diverged_nan"
        assert m.epochs_run < 500
        assert np.isnan(m.train_loss)
        assert m.train_accuracy is None

    def test_full_batch_loss_non_increasing(self):
        ds = linear_regression_ds(n=30, d=4, seed=6)
        spec = network.MlpSpec(4, (), 1)
        losses = []
        for epochs in range(1, 9):
            sched = SgdSchedule(epochs=epochs, lr0=0.01, decay=1.0, batch_size=30)
            losses.append(sgd_train(spec, ds, "mse", sched, seed=3).train_loss)
        diffs = np.diff(losses)
        assert np.all(diffs <= 1e-12)

    def test_stationarity_at_interpolation(self):
        ds = exact_linear_ds()
        spec = network.MlpSpec(4, (), 1)
        m = sgd_train(
            spec, ds, "mse", SgdSchedule(epochs=3000, lr0=0.3, decay=1.0, batch_size=24), seed=0
        )
        assert m.status == "interpolated"
        g = network.loss_gradient(m.params, ds.x, ds.loss_targets("mse"), "mse")
        assert np.linalg.norm(g) <= 1e-4 * (1.0 + np.linalg.norm(m.theta_star))

    def test_gradient_covariance_trace_vanishes_at_interpolation(self):
        ds = exact_linear_ds()
        spec = network.MlpSpec(4, (), 1)
        m = sgd_train(
            spec, ds, "mse", SgdSchedule(epochs=4000, lr0=0.3, decay=1.0, batch_size=24), seed=0
        )
        assert m.status == "interpolated"
        cg = hessian.grad_covariance(m.params, ds.x, ds.loss_targets("mse"), "mse")
        assert np.trace(cg) <= 1e-10


class TestAssumptionReport:
    def test_output_only_net_has_unit_rho_and_no_functional_term(self):
        ds = gen_classification(20, 4, 3, separation=4.0, seed=2)
        spec = network.MlpSpec(4, (10,), 3, output_only=True)
        m = sgd_train(spec, ds, "mse", SgdSchedule(epochs=100, lr0=0.2, batch_size=10), seed=3)
        rep = assumption_report(m, ds)
        assert rep.rho == 1.0
        assert rep.func_over_outer_fro == 0.0

    def test_untrained_model_has_unit_rho(self):
        ds = gen_classification(16, 4, 3, seed=5)
        spec = network.MlpSpec(4, (6,), 3)
        m = sgd_train(spec, ds, "mse", SgdSchedule(epochs=0), seed=9)
        rep = assumption_report(m, ds)
        assert rep.rho == 1.0

    def test_grad_norm_field(self):
        ds = gen_classification(16, 4, 3, seed=5)
        spec = network.MlpSpec(4, (6,), 3)
        m = sgd_train(spec, ds, "mse", SgdSchedule(epochs=20, lr0=0.1, batch_size=8), seed=9)
        rep = assumption_report(m, ds)
        g = network.loss_gradient(m.params, ds.x, ds.loss_targets("mse"), "mse")
        assert rep.grad_norm == pytest.approx(np.linalg.norm(g), rel=1e-12)

    def test_functional_term_is_small_at_deep_interpolation(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(10, 3))
        y = np.sin(x @ np.array([1.0, -0.5, 0.3]))[:, None]
        ds = Dataset(x, y, "regression", 1)
        spec = network.MlpSpec(3, (12,), 1)
        m = sgd_train(
            spec, ds, "mse", SgdSchedule(epochs=4000, lr0=0.2, decay=1.0, batch_size=10), seed=3
        )
        assert m.status == "interpolated"
        rep = assumption_report(m, ds)
        assert rep.func_over_outer_fro <= 1e-3

    def test_to_dict_round_trips(self):
        ds = gen_classification(16, 4, 3, seed=5)
        spec = network.MlpSpec(4, (6,), 3)
        m = sgd_train(spec, ds, "mse", SgdSchedule(epochs=5, lr0=0.1), seed=0)
        d = assumption_report(m, ds).to_dict()
        assert set(d) == {"func_over_outer_fro", "rho", "grad_norm"}


class TestShallowMlp:
    def test_sklearn_param_round_trip(self):
        est = ShallowMlp(hidden=(7,), epochs=13, lr0=0.05, seed=4)
        params = est.get_params()
        assert params["hidden"] == (7,) and params["epochs"] == 13
        twin = clone(est)
        assert twin.get_params() == params

    def test_classification_fit_predict_score(self):
        ds = gen_classification(30, 4, 3, separation=4.0, seed=1)
        est = ShallowMlp(hidden=(12,), epochs=200, lr0=0.3, batch_size=10, seed=0)
        est.fit(ds.x, ds.targets)
        preds = est.predict(ds.x)
        assert preds.shape == (30,)
        assert set(np.unique(preds)) <= {0, 1, 2}
        assert est.score(ds.x, ds.targets) == pytest.approx(
            np.mean(preds == ds.targets)
        )
        assert est.decision_function(ds.x).shape == (30, 3)
        assert est.task_ == "classification"
        assert est.n_features_in_ == 4

    def test_regression_fit_and_negative_loss_score(self):
        ds = linear_regression_ds(n=25, d=3, seed=2)
        est = ShallowMlp(hidden=(), epochs=500, lr0=0.1, batch_size=25, seed=1)
        est.fit(ds.x, ds.targets.ravel())
        out = est.predict(ds.x)
        assert out.shape == (25, 1)
        score = est.score(ds.x, ds.targets.ravel())
        assert score <= 0.0
        assert est.task_ == "regression"

    def test_cross_entropy_requires_integer_targets(self):
        ds = linear_regression_ds(n=20, d=3, seed=0)
        est = ShallowMlp(hidden=(4,), loss="cross_entropy", epochs=5)
        with pytest.raises(ConfigError):
            est.fit(ds.x, ds.targets.ravel())

    def test_cross_entropy_classification_trains(self):
        ds = gen_classification(24, 4, 3, separation=4.0, seed=3)
        est = ShallowMlp(
            hidden=(10,), loss="cross_entropy", epochs=300, lr0=0.5, batch_size=8, seed=0
        )
        est.fit(ds.x, ds.targets)
        assert est.score(ds.x, ds.targets) == 1.0
        assert est.model_.status == "interpolated"

    def test_rejects_nan_inputs(self):
        x = np.ones((10, 3))
        x[0, 0] = np.nan
        with pytest.raises(ValueError):
            ShallowMlp(epochs=1).fit(x, np.zeros(10, dtype=int))
