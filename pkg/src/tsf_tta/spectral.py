"""Periodicity detection for adaptation scheduling.

The anchor look-back window is mean-centred per variable and transformed
with a direct DFT. The variable carrying the most spectral power is picked,
then its strongest frequency ``f``; the partially observed ground-truth
length is ``ceil(L / f)``, clamped to the horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ShapeError

# relative level below which a centred window counts as having no spectrum
_DEGENERATE_RTOL = 1e-10


@lru_cache(maxsize=32)
def _dft_basis(L: int) -> tuple[np.ndarray, np.ndarray]:
    f = np.arange(1, L // 2 + 1)[:, None]
    t = np.arange(L)[None, :]
    # reduce f*t mod L before scaling so large products keep full precision
    angle = 2.0 * np.pi * ((f * t) % L) / L
    cos, sin = np.cos(angle), np.sin(angle)
    cos.setflags(write=False)
    sin.setflags(write=False)
    return cos, sin


def dft_magnitudes(X: np.ndarray) -> np.ndarray:
    """Magnitudes of DFT bins ``1 .. L//2`` for each mean-centred column.

    Returns an array of shape ``(L // 2, C)``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 4:
        raise ShapeError(f"need an L x C window with L >= 4, got {X.shape}")
    Xc = X - X.mean(axis=0)
    cos, sin = _dft_basis(X.shape[0])
    return np.hypot(cos @ Xc, sin @ Xc)


@dataclass(frozen=True)
class SpectrumReport:
    amplitudes: np.ndarray
    selected_variable: int
    dominant_frequency: int
    pogt_length: int
    degenerate: bool = False

    def as_dict(self) -> dict:
        return {
            "selected_variable": self.selected_variable,
            "dominant_frequency": self.dominant_frequency,
            "pogt_length": self.pogt_length,
            "degenerate": self.degenerate,
            "amplitudes": self.amplitudes.tolist(),
        }


def paas(X: np.ndarray, H: int) -> SpectrumReport:
    """Select the dominant variable, its dominant frequency and the POGT length."""
    if H < 1:
        raise ShapeError(f"H must be positive, got {H}")
    X = np.asarray(X, dtype=np.float64)
    amps = dft_magnitudes(X)
    L = X.shape[0]
    power = amps ** 2
    # np.argmax returns the first maximum, so ties go to the smaller index
    c_star = int(np.argmax(power.sum(axis=0)))
    f_star = int(np.argmax(power[:, c_star])) + 1
    scale = float(np.max(np.abs(X))) * L
    if scale == 0.0 or float(amps.max()) <= _DEGENERATE_RTOL * scale:
        return SpectrumReport(amps, c_star, f_star, min(L, H), degenerate=True)
    return SpectrumReport(amps, c_star, f_star, min(math.ceil(L / f_star), H))
