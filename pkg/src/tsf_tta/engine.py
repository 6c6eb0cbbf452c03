"""Streaming test-time adaptation loop.

Windows arrive in origin order. The first window of each mini-batch (the
anchor, at time ``t*``) fixes the partial ground-truth length ``p`` from its
spectrum; once ``p`` more windows have arrived the first ``p`` horizon steps
of the anchor are observed and both calibration modules take an optimizer
step on

    loss = MSE(anchor forecast[:p], observed[:p])
         + MSE(forecasts of the latest fully observed past batch, its truth)

after which the not-yet-observed tail of every forecast in the batch is
replaced by a recomputation under the adapted parameters.
"""

from __future__ import annotations

import csv
import io
import json
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import FutureReadError, NonFiniteGradient, OutOfRange, ShapeError, TooShort
from .forecasters import Forecaster
from .gcm import Gcm, GcmGradients, gcm_backward, gcm_forward, gcm_new
from .optim import AdamState, adam_step
from .series import TimeSeries
from .spectral import paas


@dataclass(frozen=True)
class TtaConfig:
    L: int
    H: int
    lr: float = 1e-3
    alpha_init: float = 0.1
    steps_per_event: int = 1
    enable_full_loss: bool = True
    enable_adjustment: bool = True
    fixed_pogt: int | None = None
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.L < 4 or self.H < 1:
            raise ShapeError(f"need L >= 4 and H >= 1, got L={self.L}, H={self.H}")
        if self.lr < 0 or self.steps_per_event < 0:
            raise ValueError("lr and steps_per_event must be nonnegative")
        if self.fixed_pogt is not None and not 1 <= self.fixed_pogt <= self.H:
            raise ValueError(f"fixed POGT length must lie in [1, H={self.H}], got {self.fixed_pogt}")


class GuardedStream:
    """Read access to a test matrix that refuses values from the future.

    ``now`` is the latest arrived time index; any read touching a row after
    it raises :class:`FutureReadError`.
    """

    def __init__(self, values: np.ndarray):
        self._values = np.asarray(values, dtype=np.float64)
        self.now = -1

    @property
    def T(self) -> int:
        return self._values.shape[0]

    def advance(self, t: int) -> None:
        if t < self.now:
            raise ValueError(f"stream time cannot go back from {self.now} to {t}")
        self.now = min(t, self.T - 1)

    def read(self, start: int, stop: int) -> np.ndarray:
        if start < 0 or stop > self.T:
            raise OutOfRange(f"rows [{start}, {stop}) outside stream of length {self.T}")
        if stop - 1 > self.now:
            raise FutureReadError(f"read of row {stop - 1} at stream time {self.now}")
        return self._values[start:stop]

    def lookback(self, t: int, L: int) -> np.ndarray:
        return self.read(t - L + 1, t + 1)

    def future(self, t: int, n: int) -> np.ndarray:
        """The ``n`` rows after origin ``t`` (its ground truth)."""
        return self.read(t + 1, t + 1 + n)


@dataclass
class PredictionRecord:
    origin: int
    arrival_prediction: np.ndarray
    final_prediction: np.ndarray
    adjusted: bool = False
    batch_id: int = -1


@dataclass
class MiniBatch:
    batch_id: int
    t_star: int
    p: int
    origins: list[int] = field(default_factory=list)
    lookbacks: list[np.ndarray] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return len(self.origins) == self.p + 1

    @property
    def adapt_time(self) -> int:
        return self.t_star + self.p

    def full_gt_ready_at(self, H: int) -> int:
        return self.t_star + self.p + H


@dataclass
class BatchLog:
    batch_id: int
    t_star: int
    p: int
    loss_partial: float
    loss_full: float | None
    full_batch_id: int | None
    loss_after: float


@dataclass
class TtaLedger:
    gcm_in: Gcm
    gcm_out: Gcm
    optimizer: AdamState
    current: MiniBatch | None = None
    pending: deque = field(default_factory=deque)
    records: list[PredictionRecord] = field(default_factory=list)
    batches: list[BatchLog] = field(default_factory=list)

    def params(self) -> list[np.ndarray]:
        return self.gcm_in.params() + self.gcm_out.params()


@dataclass
class Metrics:
    mse: float
    mae: float
    mse_by_step: np.ndarray
    mae_by_step: np.ndarray
    n_windows: int
    n_elements: int

    def as_dict(self) -> dict:
        d = asdict(self)
        d["mse_by_step"] = self.mse_by_step.tolist()
        d["mae_by_step"] = self.mae_by_step.tolist()
        return d


# --- forward / backward through GCM -> forecaster -> GCM -------------------

def calibrated_predict(forecaster: Forecaster, gcm_in: Gcm, gcm_out: Gcm, X: np.ndarray) -> np.ndarray:
    return gcm_forward(gcm_out, forecaster.predict(gcm_forward(gcm_in, X)))


def _backprop(forecaster, gcm_in, gcm_out, X, upstream) -> tuple[GcmGradients, GcmGradients]:
    X_cal = gcm_forward(gcm_in, X)
    Y_raw = forecaster.predict(X_cal)
    g_out, dY_raw = gcm_backward(gcm_out, Y_raw, upstream)
    dX_cal = forecaster.vjp_input(X_cal, dY_raw)
    g_in, _ = gcm_backward(gcm_in, X, dX_cal)
    return g_in, g_out


@dataclass
class LossTerms:
    partial: float
    full: float | None
    grad_in: GcmGradients
    grad_out: GcmGradients

    @property
    def total(self) -> float:
        return self.partial + (self.full or 0.0)

    def grads(self) -> list[np.ndarray]:
        return self.grad_in.as_list() + self.grad_out.as_list()


def tafas_loss(
    forecaster: Forecaster,
    gcm_in: Gcm,
    gcm_out: Gcm,
    X_anchor: np.ndarray,
    pogt: np.ndarray,
    X_full: np.ndarray | None = None,
    Y_full: np.ndarray | None = None,
) -> LossTerms:
    """Partial plus full loss and its gradients for both GCMs.

    ``pogt`` holds the first ``p`` observed horizon rows of the anchor.
    ``X_full``/``Y_full`` are the stacked windows and complete horizons of
    a past batch, or ``None`` when no such batch is available.
    """
    p = pogt.shape[0]
    Y_hat = calibrated_predict(forecaster, gcm_in, gcm_out, X_anchor)
    resid = Y_hat[:p] - pogt
    partial = float(np.mean(resid ** 2))
    upstream = np.zeros_like(Y_hat)
    upstream[:p] = 2.0 * resid / resid.size
    g_in, g_out = _backprop(forecaster, gcm_in, gcm_out, X_anchor, upstream)

    full = None
    if X_full is not None:
        resid_f = calibrated_predict(forecaster, gcm_in, gcm_out, X_full) - Y_full
        full = float(np.mean(resid_f ** 2))
        f_in, f_out = _backprop(forecaster, gcm_in, gcm_out, X_full, 2.0 * resid_f / resid_f.size)
        g_in, g_out = g_in + f_in, g_out + f_out
    return LossTerms(partial, full, g_in, g_out)


# --- the streaming loop -----------------------------------------------------

def new_ledger(C: int, config: TtaConfig) -> TtaLedger:
    gcm_in = gcm_new(config.L, C, config.alpha_init)
    gcm_out = gcm_new(config.H, C, config.alpha_init)
    opt = AdamState.for_params(gcm_in.params() + gcm_out.params(), config.lr, config.weight_decay)
    return TtaLedger(gcm_in, gcm_out, opt)


def _take_full_batch(ledger: TtaLedger, now: int, H: int) -> MiniBatch | None:
    ready = [b for b in ledger.pending if b.full_gt_ready_at(H) <= now]
    for b in ready:
        ledger.pending.remove(b)
    return ready[-1] if ready else None


def adapt_event(
    ledger: TtaLedger,
    forecaster: Forecaster,
    batch: MiniBatch,
    stream: GuardedStream,
    config: TtaConfig,
) -> BatchLog:
    """Adapt both GCMs once ``batch`` is complete at time ``t* + p``."""
    if not batch.complete:
        raise ValueError(f"batch {batch.batch_id} is incomplete")
    now = batch.adapt_time
    X_anchor = batch.lookbacks[0]
    pogt = stream.future(batch.t_star, batch.p)

    X_full = Y_full = None
    past = _take_full_batch(ledger, now, config.H) if config.enable_full_loss else None
    if past is not None:
        X_full = np.stack(past.lookbacks)
        Y_full = np.stack([stream.future(t, config.H) for t in past.origins])

    params = ledger.params()
    terms = tafas_loss(forecaster, ledger.gcm_in, ledger.gcm_out, X_anchor, pogt, X_full, Y_full)
    first = terms
    for _ in range(config.steps_per_event):
        try:
            adam_step(ledger.optimizer, params, terms.grads())
        except NonFiniteGradient as exc:
            raise NonFiniteGradient(f"at stream time {now}: loss={terms.total!r}: {exc}") from exc
        terms = tafas_loss(forecaster, ledger.gcm_in, ledger.gcm_out, X_anchor, pogt, X_full, Y_full)

    ledger.pending.append(batch)
    log = BatchLog(
        batch.batch_id, batch.t_star, batch.p, first.partial, first.full,
        None if past is None else past.batch_id, terms.total,
    )
    ledger.batches.append(log)
    return log


def adjust_predictions(
    ledger: TtaLedger,
    forecaster: Forecaster,
    batch: MiniBatch,
    records: Sequence[PredictionRecord],
) -> None:
    """Splice post-adaptation forecasts into the unobserved tail of ``records``.

    ``records[k]`` belongs to the window at origin ``t* + k``; its horizon
    rows ``j >= p - k`` cover times after ``t* + p`` and are replaced.
    """
    p = batch.p
    for k, (rec, X) in enumerate(zip(records, batch.lookbacks)):
        adapted = calibrated_predict(forecaster, ledger.gcm_in, ledger.gcm_out, X)
        final = rec.arrival_prediction.copy()
        final[p - k:] = adapted[p - k:]
        rec.final_prediction = final
        rec.adjusted = True


def run_stream(
    forecaster: Forecaster,
    test: TimeSeries,
    config: TtaConfig,
    stream: GuardedStream | None = None,
) -> tuple[Metrics, TtaLedger]:
    """Replay ``test`` as a stream with adaptation and score the final forecasts."""
    L, H = config.L, config.H
    if forecaster.L != L or forecaster.H != H:
        raise ShapeError(f"forecaster is ({forecaster.L}, {forecaster.H}), config is ({L}, {H})")
    if test.T < L + H:
        raise TooShort(f"test series of length {test.T} is shorter than L+H={L + H}")
    stream = stream if stream is not None else GuardedStream(test.values)
    ledger = new_ledger(test.C, config)
    batch_records: list[PredictionRecord] = []
    n_batches = 0

    for t in range(L - 1, test.T - H):
        stream.advance(t)
        X = stream.lookback(t, L)
        if ledger.current is None:
            p = config.fixed_pogt if config.fixed_pogt is not None else paas(X, H).pogt_length
            ledger.current = MiniBatch(n_batches, t, p)
            n_batches += 1
            batch_records = []
        batch = ledger.current
        pred = calibrated_predict(forecaster, ledger.gcm_in, ledger.gcm_out, X)
        rec = PredictionRecord(t, pred, pred, batch_id=batch.batch_id)
        ledger.records.append(rec)
        batch_records.append(rec)
        batch.origins.append(t)
        batch.lookbacks.append(X)
        if batch.complete:
            adapt_event(ledger, forecaster, batch, stream, config)
            if config.enable_adjustment:
                adjust_predictions(ledger, forecaster, batch, batch_records)
            ledger.current = None

    return score(ledger.records, test), ledger


def run_baseline(forecaster: Forecaster, test: TimeSeries, L: int, H: int) -> tuple[Metrics, list[PredictionRecord]]:
    """Frozen forecaster without calibration modules."""
    if test.T < L + H:
        raise TooShort(f"test series of length {test.T} is shorter than L+H={L + H}")
    records = []
    for t in range(L - 1, test.T - H):
        pred = forecaster.predict(test.values[t - L + 1: t + 1])
        records.append(PredictionRecord(t, pred, pred))
    return score(records, test), records


def score(records: Sequence[PredictionRecord], test: TimeSeries) -> Metrics:
    if not records:
        raise ValueError("no records to score")
    H = records[0].final_prediction.shape[0]
    sq = np.zeros(H)
    ab = np.zeros(H)
    for rec in records:
        t = rec.origin
        if t < 0 or t + H >= test.T:
            raise OutOfRange(f"horizon of origin {t} leaves the test series (T={test.T})")
        err = rec.final_prediction - test.values[t + 1: t + H + 1]
        sq += (err ** 2).sum(axis=1)
        ab += np.abs(err).sum(axis=1)
    n, C = len(records), test.C
    return Metrics(
        mse=float(sq.sum() / (n * H * C)),
        mae=float(ab.sum() / (n * H * C)),
        mse_by_step=sq / (n * C),
        mae_by_step=ab / (n * C),
        n_windows=n,
        n_elements=n * H * C,
    )


# --- reports ----------------------------------------------------------------

def run_report(
    config: TtaConfig | dict,
    baseline: Metrics,
    tafas: Metrics | None,
    ledger: TtaLedger | None = None,
    extra: dict | None = None,
) -> dict:
    cfg = asdict(config) if isinstance(config, TtaConfig) else dict(config)
    result = tafas if tafas is not None else baseline
    report = {
        "format": "tsf-tta-run-report",
        "version": 1,
        "config": cfg,
        "mse": result.mse,
        "mae": result.mae,
        "baseline": baseline.as_dict(),
        "tafas": None if tafas is None else tafas.as_dict(),
        "batches": [] if ledger is None else [asdict(b) for b in ledger.batches],
    }
    if extra:
        report.update(extra)
    return report


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=False) + "\n"


TRACE_COLUMNS = ("origin", "horizon_step", "variable", "prediction", "truth", "adjusted_flag")


def trace_rows(records: Iterable[PredictionRecord], test: TimeSeries) -> Iterable[tuple]:
    for rec in records:
        truth = test.values[rec.origin + 1: rec.origin + 1 + rec.final_prediction.shape[0]]
        for j, (row, true_row) in enumerate(zip(rec.final_prediction, truth)):
            for c in range(row.shape[0]):
                yield rec.origin, j, c, repr(float(row[c])), repr(float(true_row[c])), int(rec.adjusted)


def trace_csv(records: Iterable[PredictionRecord], test: TimeSeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    w.writerows(trace_rows(records, test))
    return buf.getvalue()
