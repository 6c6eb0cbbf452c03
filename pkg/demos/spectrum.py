"""How the partial-ground-truth length is picked from a look-back window.

The variable with the most spectral power is chosen, then its strongest
frequency f sets the length ceil(L / f), capped at the horizon.
"""

import numpy as np

from tsf_tta import paas

L, H = 96, 48
t = np.arange(L)
rng = np.random.default_rng(0)

X = np.column_stack([
    0.2 * rng.normal(size=L),                    # noise only
    np.sin(2 * np.pi * 6 * t / L) + 3.0,         # strong tone, offset ignored
    0.5 * np.sin(2 * np.pi * 2 * t / L),         # weaker slow tone
])

report = paas(X, H)
print("selected variable :", report.selected_variable)
print("dominant frequency:", report.dominant_frequency)
print("POGT length       :", report.pogt_length, f"(= min(ceil({L}/{report.dominant_frequency}), {H}))")

# A flat window has no usable spectrum; the full horizon-capped length is used.
flat = paas(np.full((L, 3), 7.0), H)
print("flat window       :", flat.pogt_length, "degenerate =", flat.degenerate)
