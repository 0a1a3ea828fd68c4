"""Measurement traces: the ground truth that simulated sensors read.

Traces come either from a two-column CSV file (``index,value``) or from a
seeded synthetic generator. Sample indices are 1-based throughout; the
CSV index column is informational only.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyTrace, InvalidSpec, ParseError

__all__ = [
    "TraceSeries",
    "WaveKind",
    "SyntheticSpec",
    "load_trace",
    "save_trace",
    "generate",
]


@dataclass(frozen=True)
class TraceSeries:
    sensor_id: int
    period: float
    values: tuple[float, ...]

    def __post_init__(self):
        if self.sensor_id < 0:
            raise ValueError("sensor_id must be non-negative")
        if not self.period > 0:
            raise ValueError("period must be positive")
        if len(self.values) == 0:
            raise EmptyTrace("trace has no samples")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def __len__(self) -> int:
        return len(self.values)

    def at(self, t: int) -> float:
        """Measured value at 1-based sample index ``t``."""
        if not 1 <= t <= len(self.values):
            raise IndexError(f"t={t} outside 1..{len(self.values)}")
        return self.values[t - 1]


class WaveKind(str, Enum):
    SINE = "sine"
    SINE_PLUS_TREND = "sine_plus_trend"
    SQUARE = "square"
    CONSTANT = "constant"


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a synthetic periodic signal.

    ``trend`` is the per-sample slope added by ``sine_plus_trend`` and is
    ignored by the other kinds. Noise is Gaussian, drawn from numpy's PCG64
    generator seeded with ``seed``.
    """

    kind: WaveKind = WaveKind.SINE
    amplitude: float = 1.0
    period_samples: int = 24
    offset: float = 0.0
    noise_std: float = 0.0
    length: int = 400
    seed: int = 0
    trend: float = 0.05

    def validate(self) -> None:
        try:
            kind = WaveKind(self.kind)
        except ValueError:
            raise InvalidSpec(f"unknown kind {self.kind!r}") from None
        if self.length < 1:
            raise InvalidSpec("length must be >= 1")
        if self.period_samples < 1:
            raise InvalidSpec("period_samples must be >= 1")
        if not self.noise_std >= 0:
            raise InvalidSpec("noise_std must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise InvalidSpec("seed must be a 64-bit unsigned integer")
        for name in ("amplitude", "offset", "noise_std", "trend"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidSpec(f"{name} must be finite")
        if kind is not self.kind:
            object.__setattr__(self, "kind", kind)


def _waveform(kind: WaveKind, phase: np.ndarray) -> np.ndarray:
    if kind in (WaveKind.SINE, WaveKind.SINE_PLUS_TREND):
        return np.sin(2.0 * np.pi * phase)
    if kind is WaveKind.SQUARE:
        return np.where(phase < 0.5, 1.0, -1.0)
    return np.zeros_like(phase)


def generate(spec: SyntheticSpec, sensor_id: int = 0, period: float = 1.0) -> TraceSeries:
    """Synthesize a trace from ``spec``; identical specs give identical output."""
    spec.validate()
    idx = np.arange(spec.length)
    # reduce phase modulo one period first so the signal is exactly periodic
    phase = (idx % spec.period_samples) / spec.period_samples
    values = spec.offset + spec.amplitude * _waveform(WaveKind(spec.kind), phase)
    if spec.kind == WaveKind.SINE_PLUS_TREND:
        values = values + spec.trend * idx
    if spec.noise_std > 0:
        rng = np.random.Generator(np.random.PCG64(spec.seed))
        values = values + rng.normal(0.0, spec.noise_std, spec.length)
    return TraceSeries(sensor_id, period, tuple(values.tolist()))


def _parse_rows(text: str) -> list[float]:
    values: list[float] = []
    reader = csv.reader(io.StringIO(text, newline=""))
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if lineno == 1 and len(row) == 2 and row[0].strip().lower() == "t":
            continue  # optional header
        if len(row) != 2:
            raise ParseError(lineno, f"expected 2 fields, got {len(row)}")
        try:
            float(row[0])
            value = float(row[1])
        except ValueError:
            raise ParseError(lineno) from None
        if not math.isfinite(value):
            raise ParseError(lineno, "missing or non-finite value")
        values.append(value)
    return values


def load_trace(path: str | Path, sensor_id: int = 0, period: float = 1.0) -> TraceSeries:
    """Read a ``index,value`` CSV trace.

    Raises:
        FileNotFoundError: ``path`` does not exist.
        ParseError: a row is malformed (carries the 1-based line number).
        EmptyTrace: the file holds no samples.
    """
    path = Path(path)
    text = path.read_bytes().decode("utf-8-sig")
    values = _parse_rows(text)
    if not values:
        raise EmptyTrace(f"{path}: no samples")
    return TraceSeries(sensor_id, period, tuple(values))


def save_trace(trace: TraceSeries, path: str | Path) -> None:
    # repr() of a float is the shortest string that round-trips exactly
    lines = ["t,value"] + [f"{t},{v!r}" for t, v in enumerate(trace.values, start=1)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def as_series(values: Sequence[float], sensor_id: int = 0, period: float = 1.0) -> TraceSeries:
    return TraceSeries(sensor_id, period, tuple(values))
