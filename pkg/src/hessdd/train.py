"""Minibatch SGD training with a quartered step-size schedule.

The schedule is plain SGD starting at lr0 with the learning rate cut by a
fixed factor after each quarter of the epoch budget.  Training is fully
deterministic given (seed, schedule): the seed spawns independent streams
for parameter init and epoch shuffling.  A NaN anywhere in the parameters
stops training immediately with status "diverged_nan"; reaching 100% train
accuracy (classification) or train MSE <= 1e-8 (regression) marks the
model "interpolated", otherwise it finishes as "converged".
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_X_y

from . import hessian, linalg, network
from .data import Dataset
from .exceptions import ConfigError

MSE_INTERPOLATION_TOL = 1e-8


@dataclass(frozen=True)
class SgdSchedule:
    epochs: int
    lr0: float = 0.5
    decay: float = 0.75
    batch_size: int = 32

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if not self.lr0 > 0:
            raise ConfigError("lr0 must be positive")
        if not 0 < self.decay <= 1:
            raise ConfigError("decay must be in (0, 1]")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")

    def lr_at(self, epoch: int) -> float:
        """Learning rate during the given epoch (0-based)."""
        if self.epochs == 0:
            return self.lr0
        quarters_done = sum(
            1 for q in (1, 2, 3) if epoch >= (q * self.epochs) // 4 and (q * self.epochs) // 4 > 0
        )
        return self.lr0 * self.decay**quarters_done


@dataclass
class TrainedModel:
    """Training outcome; theta0 is kept so curvature ratios can be taken at init."""

    spec: network.MlpSpec
    kind: str
    theta0: np.ndarray
    params: network.MlpParams
    status: str
    train_loss: float
    train_accuracy: float | None
    epochs_run: int

    @property
    def theta_star(self) -> np.ndarray:
        return self.params.theta

    def params0(self) -> network.MlpParams:
        return self.params.replace_theta(self.theta0)


def _train_accuracy(params: network.MlpParams, ds: Dataset) -> float | None:
    if ds.task != "classification":
        return None
    f = network.batch_forward(params, ds.x)
    return float(np.mean(np.argmax(f, axis=1) == ds.targets))


def sgd_train(
    spec: network.MlpSpec, ds: Dataset, kind: str, schedule: SgdSchedule, seed: int
) -> TrainedModel:
    """Train a fresh network on ds; deterministic in (seed, schedule)."""
    init_seed, shuffle_seed = np.random.SeedSequence(seed).spawn(2)
    params = network.init_params(spec, init_seed)
    theta0 = params.theta.copy()
    rng = np.random.default_rng(shuffle_seed)
    y = ds.loss_targets(kind)
    n = ds.n
    status = "converged"
    epochs_run = 0
    theta = params.theta
    # a diverging run overflows before it NaNs; the status flag is the
    # signal, so the intermediate warnings are noise
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(schedule.epochs):
            lr = schedule.lr_at(epoch)
            order = rng.permutation(n)
            for start in range(0, n, schedule.batch_size):
                batch = order[start : start + schedule.batch_size]
                g = network.loss_gradient(
                    params.replace_theta(theta), ds.x[batch], _take(y, batch, kind), kind
                )
                theta = theta - lr * g
            epochs_run = epoch + 1
            if not np.all(np.isfinite(theta)):
                status = "diverged_nan"
                break
    final = params.replace_theta(theta)
    if status == "diverged_nan":
        train_loss = float("nan")
        acc = None
    else:
        train_loss = network.empirical_loss(final, ds.x, y, kind)
        acc = _train_accuracy(final, ds)
        interpolated = (
            acc is not None and acc == 1.0
        ) or (ds.task == "regression" and train_loss <= MSE_INTERPOLATION_TOL)
        if interpolated:
            status = "interpolated"
    return TrainedModel(
        spec=spec,
        kind=kind,
        theta0=theta0,
        params=final,
        status=status,
        train_loss=train_loss,
        train_accuracy=acc,
        epochs_run=epochs_run,
    )


def _take(y, idx, kind):
    y = np.asarray(y)
    return y[idx]


@dataclass(frozen=True)
class AssumptionReport:
    """Measured quantities behind the vanishing-curvature and eigenvalue-ratio assumptions.

    func_over_outer_fro is ||H_func||_F / ||H_outer||_F at the trained
    point; rho is the ratio of smallest non-zero eigenvalues of the
    Jacobian covariance at the trained point versus at init; grad_norm is
    the mean-loss gradient norm at the trained point.
    """

    func_over_outer_fro: float
    rho: float
    grad_norm: float

    def to_dict(self) -> dict:
        return {
            "func_over_outer_fro": self.func_over_outer_fro,
            "rho": self.rho,
            "grad_norm": self.grad_norm,
        }


def assumption_report(
    model: TrainedModel,
    ds: Dataset,
    zero_tol_rel: float = linalg.DEFAULT_ZERO_TOL_REL,
    param_cap: int = hessian.DEFAULT_PARAM_CAP,
) -> AssumptionReport:
    y = ds.loss_targets(model.kind)
    parts = hessian.assemble(model.params, ds.x, y, model.kind, param_cap)
    outer_fro = float(np.linalg.norm(parts.outer))
    func_fro = float(np.linalg.norm(parts.func))
    ratio = func_fro / outer_fro if outer_fro > 0 else float("inf")
    cj_star = linalg.spectrum_of(hessian.jac_covariance(model.params, ds.x, param_cap), zero_tol_rel)
    cj_init = linalg.spectrum_of(
        hessian.jac_covariance(model.params0(), ds.x, param_cap), zero_tol_rel
    )
    if cj_star.lambda_min_nonzero is None or cj_init.lambda_min_nonzero is None:
        rho = float("nan")
    else:
        rho = cj_star.lambda_min_nonzero / cj_init.lambda_min_nonzero
    grad = network.loss_gradient(model.params, ds.x, y, model.kind)
    return AssumptionReport(
        func_over_outer_fro=ratio,
        rho=rho,
        grad_norm=float(np.linalg.norm(grad)),
    )


class ShallowMlp(BaseEstimator):
    """Scikit-learn style front end over sgd_train.

    Parameters mirror the functional API; fit validates inputs with the
    usual check_X_y conventions and stores the trained state on model_.
    Integer y trains a classifier (one-hot targets under mse); 2-d float y
    trains a regressor (mse only).
    """

    def __init__(
        self,
        hidden=(16,),
        activation="relu",
        bias=True,
        loss="mse",
        epochs=200,
        lr0=0.5,
        decay=0.75,
        batch_size=32,
        seed=0,
        output_only=False,
    ):
        self.hidden = hidden
        self.activation = activation
        self.bias = bias
        self.loss = loss
        self.epochs = epochs
        self.lr0 = lr0
        self.decay = decay
        self.batch_size = batch_size
        self.seed = seed
        self.output_only = output_only

    def _dataset(self, x, y) -> Dataset:
        y_arr = np.asarray(y)
        classify = y_arr.ndim == 1 and np.issubdtype(y_arr.dtype, np.integer)
        if classify:
            x, y_arr = check_X_y(x, y_arr)
            k = int(np.max(y_arr)) + 1 if y_arr.size else 2
            return Dataset(x, y_arr, "classification", max(k, 2))
        x, y_arr = check_X_y(x, y_arr, multi_output=True)
        if y_arr.ndim == 1:
            y_arr = y_arr[:, None]
        if self.loss == "cross_entropy":
            raise ConfigError("cross_entropy requires integer class targets")
        return Dataset(x, y_arr, "regression", y_arr.shape[1])

    def fit(self, x, y):
        ds = self._dataset(x, y)
        spec = network.MlpSpec(
            ds.d,
            tuple(self.hidden),
            ds.k_out,
            self.activation,
            self.bias,
            output_only=self.output_only,
        )
        schedule = SgdSchedule(self.epochs, self.lr0, self.decay, self.batch_size)
        self.model_ = sgd_train(spec, ds, self.loss, schedule, self.seed)
        self.task_ = ds.task
        self.n_features_in_ = ds.d
        return self

    def decision_function(self, x):
        x = check_array(x)
        return network.batch_forward(self.model_.params, x)

    def predict(self, x):
        f = self.decision_function(x)
        if self.task_ == "classification":
            return np.argmax(f, axis=1)
        return f

    def score(self, x, y):
        """Accuracy for classification, negative mean loss for regression."""
        if self.task_ == "classification":
            return float(np.mean(self.predict(x) == np.asarray(y)))
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None]
        return -network.empirical_loss(self.model_.params, check_array(x), y, self.loss)
