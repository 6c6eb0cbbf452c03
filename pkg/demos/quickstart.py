"""Quickstart: fit a linear forecaster, then replay its test split with and without adaptation.

Run with ``python3 demos/quickstart.py``.
"""

from tsf_tta import (
    SplitSpec, SynthSpec, Tone, TtaConfig, chronological_split, fit_ridge,
    make_windows, run_baseline, run_stream, synth_generate,
)

L, H = 96, 96

# Two periodic variables; the last fifth of the series drifts upward.
spec = SynthSpec(
    T=3000, C=2, tones=((Tone(4),), (Tone(8, 0.5),)), noise_std=0.1, seed=0,
    drift={"kind": "linear", "total_shift": 2.0},
)
train, val, test = chronological_split(synth_generate(spec), SplitSpec())

model = fit_ridge(make_windows(train, L, H))
baseline, _ = run_baseline(model, test, L, H)
adapted, ledger = run_stream(model, test, TtaConfig(L, H, lr=1e-3, steps_per_event=10))

print(f"frozen model     MSE {baseline.mse:.4f}  MAE {baseline.mae:.4f}")
print(f"with adaptation  MSE {adapted.mse:.4f}  MAE {adapted.mae:.4f}")
print(f"{len(ledger.batches)} adaptation events, "
      f"POGT lengths used: {sorted({b.p for b in ledger.batches})}")
