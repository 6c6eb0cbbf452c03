"""Frozen source forecasters.

Every forecaster maps a look-back window ``X`` of shape ``(..., L, C)`` to a
forecast of shape ``(..., H, C)`` and exposes

* ``predict(X)``
* ``vjp_input(X, upstream)``: gradient of ``<upstream, predict(X)>`` w.r.t. ``X``
* ``param_grads(X, upstream)``: the same gradient w.r.t. each parameter,
  summed over leading batch axes (used only for pre-training)
* ``params()`` / ``with_params(mapping)`` for optimizers and serialization

Instances are immutable; their arrays are read-only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DivergenceError, ShapeError, SingularSystem, TooShort
from .optim import AdamState, CosineSchedule, adam_step
from .series import WindowPair, stack_windows


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


# --- shared linear-map helpers; W is (H, L) or per-variable (C, H, L) -------

def _lin_apply(W: np.ndarray, b: np.ndarray, X: np.ndarray) -> np.ndarray:
    if W.ndim == 2:
        return np.einsum("hl,...lc->...hc", W, X) + b[:, None]
    return np.einsum("chl,...lc->...hc", W, X) + b.T


def _lin_vjp(W: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    if W.ndim == 2:
        return np.einsum("hl,...hc->...lc", W, upstream)
    return np.einsum("chl,...hc->...lc", W, upstream)


def _lin_grads(W: np.ndarray, X: np.ndarray, upstream: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = X.reshape((-1,) + X.shape[-2:])
    upstream = upstream.reshape((-1,) + upstream.shape[-2:])
    if W.ndim == 2:
        dW = np.einsum("nhc,nlc->hl", upstream, X)
        db = upstream.sum(axis=(0, 2))
    else:
        dW = np.einsum("nhc,nlc->chl", upstream, X)
        db = upstream.sum(axis=0).T
    return dW, db


def _lin_init(rng: np.random.Generator, L: int, H: int, C: int | None) -> tuple[np.ndarray, np.ndarray]:
    bound = 1.0 / math.sqrt(L)
    lead = () if C is None else (C,)
    return rng.uniform(-bound, bound, lead + (H, L)), rng.uniform(-bound, bound, lead + (H,))


class _Base:
    L: int
    H: int
    kind: str = ""

    def _check(self, X: np.ndarray, rows: int, what: str) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim < 2 or X.shape[-2] != rows:
            raise ShapeError(f"{what} must have shape (..., {rows}, C), got {X.shape}")
        C = self.n_vars
        if C is not None and X.shape[-1] != C:
            raise ShapeError(f"model was fitted for C={C} variables, got {X.shape[-1]}")
        return X

    @property
    def n_vars(self) -> int | None:
        return None


@dataclass(frozen=True, eq=False)
class LinearForecaster(_Base):
    """``Y[:, c] = weight @ X[:, c] + bias``.

    ``weight`` is ``(H, L)`` (channel-shared) or ``(C, H, L)`` (one map per
    variable); ``bias`` is ``(H,)`` or ``(C, H)`` accordingly.
    """

    weight: np.ndarray
    bias: np.ndarray
    kind: str = field(default="linear", init=False)

    def __post_init__(self):
        W, b = _frozen(self.weight), _frozen(self.bias)
        if W.ndim not in (2, 3) or b.shape != W.shape[:-1]:
            raise ShapeError(f"inconsistent weight {W.shape} / bias {b.shape}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ShapeError("forecaster parameters must be finite")
        object.__setattr__(self, "weight", W)
        object.__setattr__(self, "bias", b)

    @classmethod
    def initial(cls, L: int, H: int, seed: int = 0, n_vars: int | None = None) -> "LinearForecaster":
        W, b = _lin_init(np.random.default_rng(seed), L, H, n_vars)
        return cls(W, b)

    @property
    def L(self) -> int:
        return self.weight.shape[-1]

    @property
    def H(self) -> int:
        return self.weight.shape[-2]

    @property
    def n_vars(self) -> int | None:
        return self.weight.shape[0] if self.weight.ndim == 3 else None

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = self._check(X, self.L, "input")
        return _lin_apply(self.weight, self.bias, X)

    def vjp_input(self, X: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        X = self._check(X, self.L, "input")
        upstream = self._check(upstream, self.H, "upstream")
        return _lin_vjp(self.weight, upstream)

    def param_grads(self, X: np.ndarray, upstream: np.ndarray) -> dict[str, np.ndarray]:
        dW, db = _lin_grads(self.weight, X, upstream)
        return {"weight": dW, "bias": db}

    def params(self) -> dict[str, np.ndarray]:
        return {"weight": self.weight, "bias": self.bias}

    def with_params(self, p: Mapping[str, np.ndarray]) -> "LinearForecaster":
        return LinearForecaster(p["weight"], p["bias"])


def moving_average_matrix(L: int, kernel: int) -> np.ndarray:
    """``L x L`` matrix of a centred moving average with edge replication."""
    if kernel < 1 or kernel % 2 == 0:
        raise ShapeError(f"kernel must be odd and positive, got {kernel}")
    pad = (kernel - 1) // 2
    A = np.zeros((L, L))
    for i in range(L):
        for j in range(i - pad, i + pad + 1):
            A[i, min(max(j, 0), L - 1)] += 1.0 / kernel
    return A


@dataclass(frozen=True, eq=False)
class DLinearForecaster(_Base):
    """Moving-average trend/seasonal split with one linear map per part."""

    weight_trend: np.ndarray
    bias_trend: np.ndarray
    weight_seasonal: np.ndarray
    bias_seasonal: np.ndarray
    kernel: int = 25
    kind: str = field(default="dlinear", init=False)

    def __post_init__(self):
        for name in ("weight_trend", "bias_trend", "weight_seasonal", "bias_seasonal"):
            a = _frozen(getattr(self, name))
            if not np.all(np.isfinite(a)):
                raise ShapeError(f"{name} must be finite")
            object.__setattr__(self, name, a)
        if self.weight_trend.shape != self.weight_seasonal.shape or self.weight_trend.ndim not in (2, 3):
            raise ShapeError("trend and seasonal weights must share a (H, L) or (C, H, L) shape")
        for b in (self.bias_trend, self.bias_seasonal):
            if b.shape != self.weight_trend.shape[:-1]:
                raise ShapeError(f"bias shape {b.shape} does not match weights")
        A = moving_average_matrix(self.L, int(self.kernel))
        A.setflags(write=False)
        object.__setattr__(self, "_avg", A)

    @classmethod
    def initial(cls, L: int, H: int, kernel: int = 25, seed: int = 0, n_vars: int | None = None) -> "DLinearForecaster":
        rng = np.random.default_rng(seed)
        Wt, bt = _lin_init(rng, L, H, n_vars)
        Ws, bs = _lin_init(rng, L, H, n_vars)
        return cls(Wt, bt, Ws, bs, kernel)

    @property
    def L(self) -> int:
        return self.weight_trend.shape[-1]

    @property
    def H(self) -> int:
        return self.weight_trend.shape[-2]

    @property
    def n_vars(self) -> int | None:
        return self.weight_trend.shape[0] if self.weight_trend.ndim == 3 else None

    def decompose(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(trend, seasonal)``; ``seasonal`` is defined as ``X - trend``."""
        X = self._check(X, self.L, "input")
        trend = np.einsum("ij,...jc->...ic", self._avg, X)
        return trend, X - trend

    def predict(self, X: np.ndarray) -> np.ndarray:
        trend, seasonal = self.decompose(X)
        return (_lin_apply(self.weight_trend, self.bias_trend, trend)
                + _lin_apply(self.weight_seasonal, self.bias_seasonal, seasonal))

    def vjp_input(self, X: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        self._check(X, self.L, "input")
        upstream = self._check(upstream, self.H, "upstream")
        g_trend = _lin_vjp(self.weight_trend, upstream)
        g_seasonal = _lin_vjp(self.weight_seasonal, upstream)
        return g_seasonal + np.einsum("ji,...jc->...ic", self._avg, g_trend - g_seasonal)

    def param_grads(self, X: np.ndarray, upstream: np.ndarray) -> dict[str, np.ndarray]:
        trend, seasonal = self.decompose(X)
        dWt, dbt = _lin_grads(self.weight_trend, trend, upstream)
        dWs, dbs = _lin_grads(self.weight_seasonal, seasonal, upstream)
        return {"weight_trend": dWt, "bias_trend": dbt, "weight_seasonal": dWs, "bias_seasonal": dbs}

    def params(self) -> dict[str, np.ndarray]:
        return {
            "weight_trend": self.weight_trend,
            "bias_trend": self.bias_trend,
            "weight_seasonal": self.weight_seasonal,
            "bias_seasonal": self.bias_seasonal,
        }

    def with_params(self, p: Mapping[str, np.ndarray]) -> "DLinearForecaster":
        return DLinearForecaster(p["weight_trend"], p["bias_trend"], p["weight_seasonal"], p["bias_seasonal"], self.kernel)


@dataclass(frozen=True, eq=False)
class NormWrapper(_Base):
    """Per-window instance normalization around an inner forecaster.

    Each look-back column is standardised with its own mean and population
    standard deviation (floored by ``epsilon``); the inner forecast is mapped
    back with the same statistics. No learnable affine terms.
    """

    inner: LinearForecaster | DLinearForecaster
    epsilon: float = 1e-5
    kind: str = field(default="norm", init=False)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ShapeError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def L(self) -> int:
        return self.inner.L

    @property
    def H(self) -> int:
        return self.inner.H

    @property
    def n_vars(self) -> int | None:
        return self.inner.n_vars

    def _stats(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        mu = X.mean(axis=-2, keepdims=True)
        sigma = X.std(axis=-2, keepdims=True)
        return mu, sigma, sigma + self.epsilon

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = self._check(X, self.L, "input")
        mu, _, s = self._stats(X)
        return self.inner.predict((X - mu) / s) * s + mu

    def vjp_input(self, X: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        X = self._check(X, self.L, "input")
        upstream = self._check(upstream, self.H, "upstream")
        mu, sigma, s = self._stats(X)
        centred = X - mu
        z = centred / s
        out = self.inner.predict(z)
        dz = self.inner.vjp_input(z, upstream * s)
        d_mu = upstream.sum(axis=-2, keepdims=True) - dz.sum(axis=-2, keepdims=True) / s
        d_s = (upstream * out).sum(axis=-2, keepdims=True) - (dz * centred).sum(axis=-2, keepdims=True) / s ** 2
        # d sigma / dX = centred / (L sigma); taken as 0 where sigma == 0
        safe = np.where(sigma > 0, sigma, 1.0)
        d_sigma_dX = np.where(sigma > 0, centred / (self.L * safe), 0.0)
        return dz / s + d_mu / self.L + d_s * d_sigma_dX

    def param_grads(self, X: np.ndarray, upstream: np.ndarray) -> dict[str, np.ndarray]:
        mu, _, s = self._stats(X)
        return self.inner.param_grads((X - mu) / s, upstream * s)

    def params(self) -> dict[str, np.ndarray]:
        return self.inner.params()

    def with_params(self, p: Mapping[str, np.ndarray]) -> "NormWrapper":
        return NormWrapper(self.inner.with_params(p), self.epsilon)


Forecaster = LinearForecaster | DLinearForecaster | NormWrapper


def predict(model: Forecaster, X: np.ndarray) -> np.ndarray:
    return model.predict(X)


def vjp_input(model: Forecaster, X: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    return model.vjp_input(X, upstream)


def mse(model: Forecaster, X: np.ndarray, Y: np.ndarray) -> float:
    return float(np.mean((model.predict(X) - Y) ** 2))


def fit_ridge(
    train_windows: Sequence[WindowPair],
    lam: float = 1e-4,
    per_variable: bool = False,
    instance_norm: bool = False,
    epsilon: float = 1e-5,
) -> LinearForecaster | NormWrapper:
    """Closed-form ridge fit of a :class:`LinearForecaster`.

    Each (look-back column, horizon column) pair is one regression sample.
    Only the weights are penalised, not the bias. With ``lam == 0`` a
    minimum-norm least-squares solution is returned, so underdetermined
    systems still interpolate.

    With ``instance_norm`` the fit runs on windows standardised by their
    look-back statistics and the result is wrapped in :class:`NormWrapper`.
    """
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    X, Y = stack_windows(train_windows)
    if instance_norm:
        mu = X.mean(axis=1, keepdims=True)
        s = X.std(axis=1, keepdims=True) + epsilon
        X, Y = (X - mu) / s, (Y - mu) / s
    N, L, C = X.shape
    H = Y.shape[1]

    def solve(A: np.ndarray, T: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        A1 = np.hstack([A, np.ones((A.shape[0], 1))])
        if lam == 0:
            beta = np.linalg.lstsq(A1, T, rcond=None)[0]
        else:
            G = A1.T @ A1
            G[np.arange(L), np.arange(L)] += lam
            try:
                beta = np.linalg.solve(G, A1.T @ T)
            except np.linalg.LinAlgError as exc:
                raise SingularSystem(str(exc)) from exc
        if not np.all(np.isfinite(beta)):
            raise SingularSystem("ridge solution is not finite")
        return beta[:L].T, beta[L]

    if per_variable:
        parts = [solve(X[:, :, c], Y[:, :, c]) for c in range(C)]
        W = np.stack([w for w, _ in parts])
        b = np.stack([b for _, b in parts])
    else:
        A = X.transpose(0, 2, 1).reshape(N * C, L)
        T = Y.transpose(0, 2, 1).reshape(N * C, H)
        W, b = solve(A, T)
    model = LinearForecaster(W, b)
    return NormWrapper(model, epsilon) if instance_norm else model


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch: int = 64
    lr: float = 1e-3
    weight_decay: float = 0.0
    seed: int = 0


def fit_iterative(
    model: Forecaster,
    train_windows: Sequence[WindowPair],
    val_windows: Sequence[WindowPair],
    config: TrainConfig = TrainConfig(),
) -> Forecaster:
    """Mini-batch Adam training with a cosine schedule.

    Returns the end-of-epoch snapshot with the lowest validation MSE, or the
    untouched ``model`` when ``config.epochs == 0``.
    """
    if config.epochs == 0:
        return model
    X, Y = stack_windows(train_windows)
    Xv, Yv = stack_windows(val_windows)
    if len(X) == 0:
        raise TooShort("no training windows")
    rng = np.random.default_rng(config.seed)
    names = list(model.params())
    params = [np.array(model.params()[k]) for k in names]
    state = AdamState.for_params(params, config.lr, config.weight_decay)
    per_epoch = math.ceil(len(X) / config.batch)
    schedule = CosineSchedule(config.lr, config.epochs * per_epoch)

    best, best_val = model, math.inf
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(X))
        for start in range(0, len(X), config.batch):
            idx = order[start: start + config.batch]
            current = model.with_params(dict(zip(names, params)))
            pred = current.predict(X[idx])
            resid = pred - Y[idx]
            loss = float(np.mean(resid ** 2))
            if not math.isfinite(loss):
                raise DivergenceError(f"training loss became {loss} at epoch {epoch}, step {step}")
            grads = current.param_grads(X[idx], 2.0 * resid / resid.size)
            adam_step(state, params, [grads[k] for k in names], lr=schedule(step))
            step += 1
        current = model.with_params(dict(zip(names, params)))
        val = mse(current, Xv, Yv)
        if not math.isfinite(val):
            raise DivergenceError(f"validation loss became {val} at epoch {epoch}")
        if val < best_val:
            best, best_val = current, val
    return best
