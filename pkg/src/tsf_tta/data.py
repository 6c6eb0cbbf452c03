"""CSV ingestion and deterministic synthetic series with mean drift."""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import NonFiniteValue, ParseError, SpecError
from .series import TimeSeries, floor_fraction


@dataclass(frozen=True)
class CsvDatasetSpec:
    path: str | os.PathLike
    has_timestamp_column: bool = False
    delimiter: str = ","
    expected_columns: Sequence[str] | None = None


def _looks_numeric(cells: Sequence[str]) -> bool:
    try:
        [float(c) for c in cells]
    except ValueError:
        return False
    return True


def load_csv(spec: CsvDatasetSpec) -> TimeSeries:
    """Read a numeric CSV, optionally with a header row and a timestamp column.

    A first row is treated as a header when any of its (non-timestamp)
    cells fails to parse as a number.
    """
    with open(spec.path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=spec.delimiter) if r]
    if not rows:
        raise ParseError(f"{spec.path}: empty file")
    skip = 1 if spec.has_timestamp_column else 0
    names = None
    first = 0
    if not _looks_numeric(rows[0][skip:]):
        names = [c.strip() for c in rows[0][skip:]]
        first = 1
    width = len(rows[first][skip:]) if first < len(rows) else len(names or [])
    values = np.empty((len(rows) - first, width))
    for i, row in enumerate(rows[first:], start=first):
        cells = row[skip:]
        if len(cells) != width:
            raise ParseError(f"{spec.path}: row {i} has {len(cells)} columns, expected {width}", i, None)
        for j, cell in enumerate(cells):
            try:
                x = float(cell)
            except ValueError:
                raise ParseError(f"{spec.path}: cannot parse {cell!r} at row {i}, column {j + skip}", i, j + skip) from None
            if not math.isfinite(x):
                raise NonFiniteValue(f"{spec.path}: non-finite value at row {i}, column {j + skip}")
            values[i - first, j] = x
    if values.shape[0] == 0:
        raise ParseError(f"{spec.path}: no data rows")
    if spec.expected_columns is not None and list(names or []) != list(spec.expected_columns):
        raise ParseError(f"{spec.path}: columns {names} differ from expected {list(spec.expected_columns)}")
    return TimeSeries(values, tuple(names) if names else ())


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(series: TimeSeries, path: str | os.PathLike) -> None:
    """Header plus one row per time step; floats written with ``repr`` for exact round trips."""
    lines = [",".join(series.names)]
    lines += [",".join(repr(float(x)) for x in row) for row in series.values]
    atomic_write_text(path, "\n".join(lines) + "\n")


@dataclass(frozen=True)
class Tone:
    frequency: float  # cycles per `period_base` steps
    amplitude: float = 1.0
    phase: float = 0.0


@dataclass(frozen=True)
class SynthSpec:
    """Sum of sinusoids plus Gaussian noise plus an optional mean drift.

    ``drift`` is ``{"kind": "none"}``, ``{"kind": "linear", "total_shift": s}``
    or ``{"kind": "step", "at_fraction": a, "magnitude": m}``. A linear drift
    ramps from 0 at ``floor(drift_start_fraction * T)`` to ``total_shift`` at
    ``T - 1``.
    """

    T: int
    C: int
    tones: tuple[tuple[Tone, ...], ...]
    noise_std: float = 0.0
    drift: dict = field(default_factory=lambda: {"kind": "none"})
    drift_start_fraction: float = 0.8
    period_base: int = 96
    seed: int = 0

    def validate(self) -> None:
        if self.T < 1 or self.C < 1:
            raise SpecError(f"T and C must be positive, got T={self.T}, C={self.C}")
        if self.noise_std < 0:
            raise SpecError("noise_std must be nonnegative")
        if len(self.tones) != self.C:
            raise SpecError(f"need one tone list per variable, got {len(self.tones)} for C={self.C}")
        if not 0.0 <= self.drift_start_fraction < 1.0:
            raise SpecError("drift_start_fraction must lie in [0, 1)")
        if self.period_base < 1:
            raise SpecError("period_base must be positive")
        kind = self.drift.get("kind", "none")
        if kind == "linear":
            if "total_shift" not in self.drift:
                raise SpecError("linear drift needs total_shift")
        elif kind == "step":
            if "magnitude" not in self.drift or not 0.0 <= self.drift.get("at_fraction", -1) < 1.0:
                raise SpecError("step drift needs magnitude and at_fraction in [0, 1)")
        elif kind != "none":
            raise SpecError(f"unknown drift kind {kind!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        try:
            tones = tuple(tuple(Tone(**t) if isinstance(t, dict) else Tone(*t) for t in per_var) for per_var in d["tones"])
            kwargs = {k: d[k] for k in ("noise_std", "drift", "drift_start_fraction", "period_base", "seed") if k in d}
            return cls(T=int(d["T"]), C=int(d["C"]), tones=tones, **kwargs)
        except (KeyError, TypeError) as exc:
            raise SpecError(f"malformed synth spec: {exc}") from exc

    @classmethod
    def from_json(cls, path: str | os.PathLike) -> "SynthSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def drift_profile(spec: SynthSpec) -> np.ndarray:
    t = np.arange(spec.T, dtype=np.float64)
    kind = spec.drift.get("kind", "none")
    if kind == "linear":
        start = floor_fraction(spec.T, spec.drift_start_fraction)
        span = spec.T - 1 - start
        ramp = np.zeros(spec.T)
        if span > 0:
            ramp[start:] = (t[start:] - start) / span
        return float(spec.drift["total_shift"]) * ramp
    if kind == "step":
        at = floor_fraction(spec.T, float(spec.drift["at_fraction"]))
        return np.where(t >= at, float(spec.drift["magnitude"]), 0.0)
    return np.zeros(spec.T)


def synth_generate(spec: SynthSpec) -> TimeSeries:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    t = np.arange(spec.T, dtype=np.float64)
    values = np.zeros((spec.T, spec.C))
    for c, tones in enumerate(spec.tones):
        for tone in tones:
            values[:, c] += tone.amplitude * np.sin(2.0 * np.pi * tone.frequency * t / spec.period_base + tone.phase)
    if spec.noise_std > 0:
        values += rng.normal(0.0, spec.noise_std, size=values.shape)
    values += drift_profile(spec)[:, None]
    return TimeSeries(values, tuple(f"x{c}" for c in range(spec.C)))
