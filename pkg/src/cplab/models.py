"""Three regressors behind one small interface.

* ``MvnnModel``   - two-headed neural net predicting mean and variance,
  trained with full-batch Adam on the Gaussian negative log-likelihood.
* ``GpModel``     - exact Gaussian-process regressor, constant mean and a
  squared-exponential kernel (one length-scale per dimension for d > 1),
  hyperparameters optimized with Adam on the log marginal likelihood.
* ``GbqrModel``   - one gradient-boosted ensemble per quantile level with
  the pinball objective (delegated to scikit-learn).

Every fit is deterministic given (data, config, seed). Models are frozen
after fitting; prediction is a pure function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist
from scipy.special import expit
from sklearn.ensemble import GradientBoostingRegressor

from .data import Dataset

VAR_FLOOR = 1e-6  # added after softplus so the NLL never divides by zero


class TrainingDivergenceError(Exception):
    """Loss became non-finite during neural-net training."""

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite training loss {loss} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


class FactorizationError(Exception):
    """Kernel matrix stayed indefinite after maximum jitter escalation."""


class ModelKind(str, Enum):
    MVNN = "mvnn"
    GP = "gp"
    GBQR = "gbqr"


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and model hyperparameters shared by all three fits."""

    learning_rate: float = 0.01
    epochs: int = 2000
    batch_size: int = 64
    gp_steps: int = 500
    gbqr_trees: int = 100
    gbqr_depth: int = 3
    gbqr_shrinkage: float = 0.1
    gp_jitter: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        for name in ("learning_rate", "epochs", "batch_size", "gp_steps",
                     "gbqr_trees", "gbqr_depth", "gbqr_shrinkage", "gp_jitter"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.gp_jitter < 1e-10:
            raise ValueError("gp_jitter must be >= 1e-10")


class _Adam:
    """Plain Adam over a dict of parameter arrays."""

    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            params[k] = params[k] - self.lr * (self.m[k] / b1t) / (
                np.sqrt(self.v[k] / b2t) + self.eps
            )


# ---------------------------------------------------------------------------
# mean-variance neural network
# ---------------------------------------------------------------------------

_HIDDEN = 50


def _init_mvnn_params(d: int, rng: np.random.Generator) -> dict:
    # uniform(-1/sqrt(fan_in), ..) for weights and biases; nonzero biases
    # spread the sigmoid transition points across the input range
    def dense(fan_in, shape):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    return {
        "Wm1": dense(d, (_HIDDEN, d)), "bm1": dense(d, _HIDDEN),
        "wm2": dense(_HIDDEN, (_HIDDEN,)), "bm2": dense(_HIDDEN, 1),
        "Wv1": dense(d, (_HIDDEN, d)), "bv1": dense(d, _HIDDEN),
        "wv2": dense(_HIDDEN, (_HIDDEN,)), "bv2": dense(_HIDDEN, 1),
    }


def _head_forward(X, W1, b1, w2, b2):
    h = expit(X @ W1.T + b1)
    return h, h @ w2 + b2[0]


def _head_backward(X, h, w2, g_out):
    # g_out: dL/d(head output), one entry per sample
    gw2 = h.T @ g_out
    gb2 = np.array([g_out.sum()])
    gpre = (g_out[:, None] * w2[None, :]) * h * (1.0 - h)
    gW1 = gpre.T @ X
    gb1 = gpre.sum(axis=0)
    return gW1, gb1, gw2, gb2


def mvnn_nll_and_grads(params: dict, X: np.ndarray, y: np.ndarray):
    """Summed Gaussian NLL and its analytic gradients.

    L = sum_i [ 0.5*ln sigma2_i + (y_i - mu_i)^2 / (2*sigma2_i) ] with
    sigma2 = softplus(variance head output) + VAR_FLOOR.
    """
    hm, mu = _head_forward(X, params["Wm1"], params["bm1"], params["wm2"], params["bm2"])
    hv, z = _head_forward(X, params["Wv1"], params["bv1"], params["wv2"], params["bv2"])
    var = np.logaddexp(0.0, z) + VAR_FLOOR
    r = y - mu
    loss = float(np.sum(0.5 * np.log(var) + r * r / (2.0 * var)))

    g_mu = -r / var
    g_var = 0.5 / var - (r * r) / (2.0 * var * var)
    g_z = g_var * expit(z)  # d softplus / dz

    gWm1, gbm1, gwm2, gbm2 = _head_backward(X, hm, params["wm2"], g_mu)
    gWv1, gbv1, gwv2, gbv2 = _head_backward(X, hv, params["wv2"], g_z)
    grads = {
        "Wm1": gWm1, "bm1": gbm1, "wm2": gwm2, "bm2": gbm2,
        "Wv1": gWv1, "bv1": gbv1, "wv2": gwv2, "bv2": gbv2,
    }
    return loss, grads


def _column_stats(a: np.ndarray):
    mean = a.mean(axis=0)
    scale = a.std(axis=0)
    return mean, np.where(scale > 0, scale, 1.0)


@dataclass(frozen=True)
class MvnnModel:
    """Frozen two-headed net; inputs/targets were trained on z-scores."""

    params: dict
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    y_scale: float
    epochs: int
    final_loss: float
    kind: ModelKind = field(default=ModelKind.MVNN)

    @property
    def d(self) -> int:
        return self.params["Wm1"].shape[1]

    def predict(self, X: np.ndarray):
        """Mean and standard-deviation predictions, original target scale."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise ValueError(f"expected {self.d} features, got {X.shape[1]}")
        Xs = (X - self.x_mean) / self.x_scale
        _, mu = _head_forward(Xs, self.params["Wm1"], self.params["bm1"],
                              self.params["wm2"], self.params["bm2"])
        _, z = _head_forward(Xs, self.params["Wv1"], self.params["bv1"],
                             self.params["wv2"], self.params["bv2"])
        var = np.logaddexp(0.0, z) + VAR_FLOOR
        return mu * self.y_scale + self.y_mean, np.sqrt(var) * self.y_scale


def fit_mvnn(train: Dataset, cfg: TrainConfig) -> MvnnModel:
    """Minibatch Adam on the Gaussian NLL; deterministic given cfg.seed.

    Each epoch shuffles the rows and steps once per minibatch. Small
    batches matter here: with full-batch updates the variance head can
    absorb poorly fit regions before the mean head catches up.
    """
    if train.n < 2:
        raise ValueError("mvnn needs at least 2 training rows")
    x_mean, x_scale = _column_stats(train.features)
    y_mean = float(train.targets.mean())
    y_scale = float(train.targets.std()) or 1.0
    X = (train.features - x_mean) / x_scale
    y = (train.targets - y_mean) / y_scale

    rng = np.random.default_rng(cfg.seed)
    params = _init_mvnn_params(train.d, rng)
    opt = _Adam(params, cfg.learning_rate)
    # cfg.batch_size caps the minibatch; small training sets fall back to
    # n/10 (floor 8) so every epoch still takes several optimizer steps
    batch = min(cfg.batch_size, max(8, train.n // 10), train.n)
    for epoch in range(cfg.epochs):
        order = rng.permutation(train.n)
        for start in range(0, train.n, batch):
            sel = order[start:start + batch]
            loss, grads = mvnn_nll_and_grads(params, X[sel], y[sel])
            if not math.isfinite(loss):
                raise TrainingDivergenceError(epoch, loss)
            opt.step(params, grads)
    final_loss, _ = mvnn_nll_and_grads(params, X, y)
    return MvnnModel(params, x_mean, x_scale, y_mean, y_scale, cfg.epochs, final_loss)


# ---------------------------------------------------------------------------
# Gaussian process
# ---------------------------------------------------------------------------

_GP_MAX_N = 5000
_JITTER_CEIL = 1e-4


def _chol_with_jitter(K: np.ndarray, jitter_start: float):
    """Lower Cholesky factor, escalating diagonal jitter x10 up to the ceiling."""
    try:
        return cholesky(K, lower=True)
    except np.linalg.LinAlgError:
        pass
    jitter = jitter_start if jitter_start > 0 else 1e-10
    while jitter <= _JITTER_CEIL:
        try:
            return cholesky(K + jitter * np.eye(K.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise FactorizationError(
        f"kernel matrix not positive definite up to jitter {_JITTER_CEIL}"
    )


def _rbf_kernel(X1: np.ndarray, X2: np.ndarray, signal_var: float, ls: np.ndarray):
    q = cdist(X1 / ls, X2 / ls, metric="sqeuclidean")
    return signal_var * np.exp(-0.5 * q)


def _gp_lml_and_grads(theta: dict, X: np.ndarray, y: np.ndarray, jitter: float):
    """Log marginal likelihood and gradients w.r.t. log-hyperparameters."""
    n = X.shape[0]
    sv = math.exp(theta["log_sv"][0])
    nv = math.exp(theta["log_nv"][0])
    ls = np.exp(theta["log_ls"])
    K_rbf = _rbf_kernel(X, X, sv, ls)
    K = K_rbf + nv * np.eye(n)
    L = _chol_with_jitter(K, jitter)
    r = y - theta["mean"][0]
    alpha = cho_solve((L, True), r)
    lml = (
        -0.5 * float(r @ alpha)
        - float(np.log(np.diag(L)).sum())
        - 0.5 * n * math.log(2.0 * math.pi)
    )
    K_inv = cho_solve((L, True), np.eye(n))
    W = np.outer(alpha, alpha) - K_inv
    g_log_sv = 0.5 * float(np.sum(W * K_rbf))
    g_log_ls = np.empty(ls.size)
    WK = W * K_rbf
    for j in range(ls.size):
        dj = X[:, j, None] - X[None, :, j]
        g_log_ls[j] = 0.5 * float(np.sum(WK * (dj * dj))) / (ls[j] ** 2)
    g_log_nv = 0.5 * nv * float(np.trace(W))
    g_mean = float(alpha.sum())
    grads = {
        "log_sv": np.array([g_log_sv]),
        "log_ls": g_log_ls,
        "log_nv": np.array([g_log_nv]),
        "mean": np.array([g_mean]),
    }
    return lml, grads


@dataclass(frozen=True)
class GpModel:
    """Posterior state of an exact GP at fixed hyperparameters."""

    x_train: np.ndarray
    chol: np.ndarray
    alpha: np.ndarray
    signal_var: float
    length_scales: np.ndarray
    noise_var: float
    mean_const: float
    lml_init: float
    lml_final: float
    kind: ModelKind = field(default=ModelKind.GP)

    @property
    def d(self) -> int:
        return self.x_train.shape[1]

    def predict(self, X: np.ndarray):
        """Posterior predictive mean and std (observation noise included)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise ValueError(f"expected {self.d} features, got {X.shape[1]}")
        k_star = _rbf_kernel(X, self.x_train, self.signal_var, self.length_scales)
        mean = self.mean_const + k_star @ self.alpha
        v = solve_triangular(self.chol, k_star.T, lower=True)
        var = self.signal_var - np.einsum("ij,ij->j", v, v) + self.noise_var
        return mean, np.sqrt(np.maximum(var, 1e-12))

    @classmethod
    def from_hyperparameters(cls, train: Dataset, signal_var: float,
                             length_scales, noise_var: float,
                             mean_const: float | None = None) -> "GpModel":
        """Posterior at fixed hyperparameters, skipping optimization."""
        ls = np.atleast_1d(np.asarray(length_scales, dtype=float))
        if ls.size == 1 and train.d > 1:
            ls = np.full(train.d, ls[0])
        mu = float(train.targets.mean()) if mean_const is None else mean_const
        K = _rbf_kernel(train.features, train.features, signal_var, ls)
        K = K + noise_var * np.eye(train.n)
        L = _chol_with_jitter(K, 0.0)
        alpha = cho_solve((L, True), train.targets - mu)
        return cls(train.features.copy(), L, alpha, signal_var, ls,
                   noise_var, mu, math.nan, math.nan)


def fit_gp(train: Dataset, cfg: TrainConfig) -> GpModel:
    """Adam ascent on the log marginal likelihood over log-hyperparameters.

    Initialization: unit length-scales and signal variance, noise variance
    0.1, constant mean at the target average. The best iterate (by marginal
    likelihood) is kept, so the fitted objective never falls below its
    starting value.
    """
    if train.n > _GP_MAX_N:
        raise ValueError(f"dense GP limited to {_GP_MAX_N} rows, got {train.n}")
    X, y = train.features, train.targets
    theta = {
        "log_sv": np.array([0.0]),
        "log_ls": np.zeros(train.d),
        "log_nv": np.array([math.log(0.1)]),
        "mean": np.array([float(y.mean())]),
    }
    opt = _Adam(theta, cfg.learning_rate)
    best_lml = -math.inf
    best_theta = None
    lml_init = None
    for _ in range(cfg.gp_steps):
        lml, grads = _gp_lml_and_grads(theta, X, y, cfg.gp_jitter)
        if lml_init is None:
            lml_init = lml
        if lml > best_lml:
            best_lml = lml
            best_theta = {k: v.copy() for k, v in theta.items()}
        opt.step(theta, {k: -g for k, g in grads.items()})  # maximize

    sv = math.exp(best_theta["log_sv"][0])
    nv = math.exp(best_theta["log_nv"][0])
    ls = np.exp(best_theta["log_ls"])
    mu = best_theta["mean"][0]
    K = _rbf_kernel(X, X, sv, ls) + nv * np.eye(train.n)
    L = _chol_with_jitter(K, cfg.gp_jitter)
    alpha = cho_solve((L, True), y - mu)
    return GpModel(X.copy(), L, alpha, sv, ls, nv, mu, lml_init, best_lml)


# ---------------------------------------------------------------------------
# gradient-boosted quantile regression
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GbqrModel:
    """Independent boosted ensemble per quantile level, pinball objective."""

    estimators: tuple
    levels: tuple
    d: int
    kind: ModelKind = field(default=ModelKind.GBQR)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Per-level quantile predictions, shape (n, len(levels)).

        Columns are sorted per row so the quantile curves never cross.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise ValueError(f"expected {self.d} features, got {X.shape[1]}")
        preds = np.column_stack([est.predict(X) for est in self.estimators])
        return np.sort(preds, axis=1)


def fit_gbqr(train: Dataset, cfg: TrainConfig, levels) -> GbqrModel:
    """One sklearn GradientBoostingRegressor per quantile level."""
    levels = tuple(float(t) for t in levels)
    if not levels:
        raise ValueError("quantile level list is empty")
    if any(not 0.0 < t < 1.0 for t in levels) or list(levels) != sorted(levels):
        raise ValueError(f"levels must be sorted and strictly inside (0, 1): {levels}")
    if train.n < 10:
        raise ValueError("gbqr needs at least 10 training rows")
    ests = []
    for level in levels:
        est = GradientBoostingRegressor(
            loss="quantile",
            alpha=level,
            n_estimators=cfg.gbqr_trees,
            max_depth=cfg.gbqr_depth,
            learning_rate=cfg.gbqr_shrinkage,
            random_state=cfg.seed,
        )
        est.fit(train.features, train.targets)
        ests.append(est)
    return GbqrModel(tuple(ests), levels, train.d)


def fit_model(kind: ModelKind, train: Dataset, cfg: TrainConfig,
              quantile_levels=None):
    """Dispatch to the right fit routine for a model kind."""
    if kind == ModelKind.GBQR:
        if quantile_levels is None:
            raise ValueError("gbqr requires quantile levels")
        return fit_gbqr(train, cfg, quantile_levels)
    if quantile_levels is not None:
        raise ValueError("quantile levels only apply to gbqr")
    if kind == ModelKind.MVNN:
        return fit_mvnn(train, cfg)
    if kind == ModelKind.GP:
        return fit_gp(train, cfg)
    raise ValueError(f"unknown model kind {kind}")
