"""Time-series container, chronological splits and sliding windows."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NonFiniteValue, RatioError, ShapeError, TooShort


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeSeries:
    """A ``T x C`` real-valued series with column labels.

    The values array is copied on construction and marked read-only.
    """

    values: np.ndarray
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ShapeError(f"expected a non-empty T x C matrix, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise NonFiniteValue(f"non-finite value at row {bad[0]}, column {bad[1]}")
        names = tuple(self.names) if self.names else tuple(f"v{c}" for c in range(values.shape[1]))
        if len(names) != values.shape[1]:
            raise ShapeError(f"{len(names)} names for {values.shape[1]} columns")
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "names", names)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def C(self) -> int:
        return self.values.shape[1]

    def slice(self, start: int, stop: int) -> "TimeSeries":
        return TimeSeries(self.values[start:stop], self.names)


@dataclass(frozen=True)
class SplitSpec:
    train_ratio: float = 0.6
    val_ratio: float = 0.2
    test_ratio: float = 0.2

    def __post_init__(self):
        ratios = (self.train_ratio, self.val_ratio, self.test_ratio)
        if any(not (0.0 < r < 1.0) for r in ratios):
            raise RatioError(f"each ratio must lie in (0, 1), got {ratios}")
        if abs(sum(ratios) - 1.0) > 1e-9:
            raise RatioError(f"ratios must sum to 1, got {sum(ratios)!r}")

    @classmethod
    def parse(cls, text: str) -> "SplitSpec":
        """Build from a ``"0.6,0.2,0.2"`` style string."""
        try:
            parts = [float(s) for s in text.split(",")]
        except ValueError as exc:
            raise RatioError(f"cannot parse split {text!r}") from exc
        if len(parts) != 3:
            raise RatioError(f"split needs three ratios, got {text!r}")
        return cls(*parts)


def floor_fraction(T: int, ratio: float) -> int:
    # guard against 10 * 0.3 == 2.9999999999999996
    return int(math.floor(T * ratio + 1e-9))


def chronological_split(series: TimeSeries, spec: SplitSpec) -> tuple[TimeSeries, TimeSeries, TimeSeries]:
    """Cut ``series`` into contiguous train/val/test segments.

    Train and validation lengths are ``floor(T * ratio)``; the flooring
    remainder goes to the test segment.
    """
    n_train = floor_fraction(series.T, spec.train_ratio)
    n_val = floor_fraction(series.T, spec.val_ratio)
    n_test = series.T - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise TooShort(f"T={series.T} leaves an empty segment ({n_train}, {n_val}, {n_test})")
    return (
        series.slice(0, n_train),
        series.slice(n_train, n_train + n_val),
        series.slice(n_train + n_val, series.T),
    )


@dataclass(frozen=True)
class WindowPair:
    origin: int
    lookback: np.ndarray
    horizon: np.ndarray


def _check_window_args(T: int, L: int, H: int, stride: int) -> None:
    if L < 1 or H < 1 or stride < 1:
        raise ShapeError(f"L, H and stride must be positive, got L={L}, H={H}, stride={stride}")
    if T < L + H:
        raise TooShort(f"series of length {T} is shorter than L+H={L + H}")


def make_windows(series: TimeSeries, L: int, H: int, stride: int = 1) -> list[WindowPair]:
    """Sliding (look-back, horizon) pairs at origins ``L-1, L-1+stride, ...``."""
    _check_window_args(series.T, L, H, stride)
    v = series.values
    return [
        WindowPair(t, v[t - L + 1: t + 1], v[t + 1: t + H + 1])
        for t in range(L - 1, series.T - H, stride)
    ]


def window_arrays(series: TimeSeries, L: int, H: int, stride: int = 1) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stacked form of :func:`make_windows`: ``(origins, X[N,L,C], Y[N,H,C])``."""
    _check_window_args(series.T, L, H, stride)
    v = series.values
    origins = np.arange(L - 1, series.T - H, stride)
    view = np.lib.stride_tricks.sliding_window_view(v, L + H, axis=0)  # (T-L-H+1, C, L+H)
    view = np.moveaxis(view[::stride], 2, 1)
    return origins, np.array(view[:, :L]), np.array(view[:, L:])


def stack_windows(windows: Sequence[WindowPair]) -> tuple[np.ndarray, np.ndarray]:
    if len(windows) == 0:
        raise TooShort("no windows")
    X = np.stack([w.lookback for w in windows]).astype(np.float64)
    Y = np.stack([w.horizon for w in windows]).astype(np.float64)
    return X, Y


def standardize(reference: TimeSeries, *others: TimeSeries) -> tuple[TimeSeries, ...]:
    """Z-score every series with the per-column mean and std of ``reference``."""
    mu = reference.values.mean(axis=0)
    sd = reference.values.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return tuple(TimeSeries((s.values - mu) / sd, s.names) for s in (reference,) + others)
