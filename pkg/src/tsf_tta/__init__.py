"""Test-time adaptation of frozen linear forecasters on drifting series.

Calibration modules before and after a frozen source forecaster are adapted
online from partially observed ground truth, with the observation length
chosen from each mini-batch's dominant period.
"""

from .data import CsvDatasetSpec, SynthSpec, Tone, load_csv, synth_generate, write_csv
from .engine import (
    GuardedStream,
    Metrics,
    PredictionRecord,
    TtaConfig,
    TtaLedger,
    adapt_event,
    adjust_predictions,
    calibrated_predict,
    run_baseline,
    run_stream,
    score,
    tafas_loss,
)
from .errors import *  # noqa: F401,F403
from .forecasters import (
    DLinearForecaster,
    LinearForecaster,
    NormWrapper,
    TrainConfig,
    fit_iterative,
    fit_ridge,
    predict,
    vjp_input,
)
from .gcm import Gcm, GcmGradients, gcm_backward, gcm_forward, gcm_new
from .optim import AdamState, CosineSchedule, adam_step, sgd_step
from .series import SplitSpec, TimeSeries, WindowPair, chronological_split, make_windows
from .spectral import SpectrumReport, dft_magnitudes, paas

__version__ = "0.1.0"
