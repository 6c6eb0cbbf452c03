"""Compare adaptive POGT lengths against fixed ones on a drifting stream.

Also shows the effect of the number of optimizer steps taken per event:
with one step the calibration modules move little, with more they can
absorb most of the level shift that the frozen model misses.
"""

from tsf_tta import (
    SplitSpec, SynthSpec, Tone, TtaConfig, chronological_split, fit_ridge,
    make_windows, run_baseline, run_stream, synth_generate,
)

L, H = 96, 192
tones = tuple((Tone(f, 1.0, 0.5 * c),) for c, f in enumerate((4, 8, 12)))
spec = SynthSpec(T=4000, C=3, tones=tones, noise_std=0.1, seed=0,
                 drift={"kind": "linear", "total_shift": 2.1})
train, _, test = chronological_split(synth_generate(spec), SplitSpec())
model = fit_ridge(make_windows(train, L, H))
base, _ = run_baseline(model, test, L, H)
print(f"frozen baseline MSE {base.mse:.4f}")

for steps in (1, 20):
    print(f"\nsteps per event = {steps}")
    for fixed in (None, 4, 96):
        cfg = TtaConfig(L, H, lr=1e-3, steps_per_event=steps, fixed_pogt=fixed)
        m, _ = run_stream(model, test, cfg)
        label = "adaptive" if fixed is None else f"fixed p={fixed}"
        print(f"  {label:<12} MSE {m.mse:.4f}  ratio {m.mse / base.mse:.3f}")
