"""Wind time series: CSV ingestion, minute interpolation, synthetic scenarios.

Synthetic scenarios are a discretised Ornstein-Uhlenbeck walk driven by
numpy's ``PCG64`` bit generator and its ziggurat normal sampler, so a
given integer seed produces the same series on every platform for a fixed
numpy release.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, IngestionError

SPEED_CEILING = 30.0
GENERATORS = ("file", "synthetic-low", "synthetic-moderate", "synthetic-high", "fixed-sequence")


@dataclass(frozen=True)
class WindSeries:
    minutes: np.ndarray
    speeds: np.ndarray
    directions: np.ndarray
    resolution: int = 1

    def __post_init__(self):
        minutes = np.asarray(self.minutes, dtype=np.int64)
        speeds = np.asarray(self.speeds, dtype=float)
        directions = np.asarray(self.directions, dtype=float)
        if not (minutes.shape == speeds.shape == directions.shape) or minutes.ndim != 1:
            raise IngestionError("minutes, speeds and directions must be equal-length vectors")
        if minutes.size > 1 and np.any(np.diff(minutes) <= 0):
            raise IngestionError("minute index must be strictly increasing")
        if np.any(speeds < 0):
            raise IngestionError("wind speeds must be non-negative")
        if self.resolution < 1:
            raise IngestionError("resolution must be >= 1 minute")
        object.__setattr__(self, "minutes", minutes)
        object.__setattr__(self, "speeds", speeds)
        object.__setattr__(self, "directions", directions)

    def __len__(self):
        return int(self.minutes.size)

    @property
    def samples(self) -> list[tuple[int, float, float]]:
        return list(zip(self.minutes.tolist(), self.speeds.tolist(), self.directions.tolist()))

    def window(self, start: int, length: int) -> "WindSeries":
        """Slice ``length`` samples starting at position ``start``, re-indexed from minute 0."""
        sl = slice(start, start + length)
        m = self.minutes[sl]
        return WindSeries(m - m[0], self.speeds[sl], self.directions[sl], self.resolution)

    def equals(self, other: "WindSeries") -> bool:
        return (self.resolution == other.resolution
                and np.array_equal(self.minutes, other.minutes)
                and np.array_equal(self.speeds, other.speeds)
                and np.array_equal(self.directions, other.directions))


def _wrap(angle):
    return (np.asarray(angle) + np.pi) % (2 * np.pi) - np.pi


def interpolate_to_minutes(series: WindSeries) -> WindSeries:
    """Linear interpolation onto every integer minute between first and last sample."""
    if len(series) < 2:
        raise IngestionError("need at least 2 samples to interpolate")
    if series.resolution == 1 and np.all(np.diff(series.minutes) == 1):
        return series
    m0, m1 = int(series.minutes[0]), int(series.minutes[-1])
    minutes = np.arange(m0, m1 + 1)
    speeds = np.interp(minutes, series.minutes, series.speeds)
    # unwrap so each segment follows the shorter arc
    dirs = np.interp(minutes, series.minutes, np.unwrap(series.directions))
    dirs = _wrap(dirs)
    # keep original sample points bit-exact
    idx = series.minutes - m0
    speeds[idx] = series.speeds
    dirs[idx] = series.directions
    return WindSeries(minutes, speeds, dirs, 1)


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    duration: int
    generator: str = "synthetic-moderate"
    seed: int = 0
    mean: float = 8.0
    volatility: float = 0.5
    reversion: float = 0.05
    direction: float = 0.0
    sequence: Optional[tuple[float, ...]] = None
    path: Optional[str] = None

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigError(f"scenario {self.name}: duration must be > 0")
        if self.generator not in GENERATORS:
            raise ConfigError(f"scenario {self.name}: unknown generator {self.generator!r}")
        if self.volatility < 0 or not 0 <= self.reversion <= 1:
            raise ConfigError(f"scenario {self.name}: need volatility >= 0, reversion in [0, 1]")
        if self.sequence is not None:
            object.__setattr__(self, "sequence", tuple(float(v) for v in self.sequence))
        if self.generator == "fixed-sequence" and not self.sequence:
            raise ConfigError(f"scenario {self.name}: fixed-sequence needs a sequence")
        if self.generator == "file" and not self.path:
            raise ConfigError(f"scenario {self.name}: file generator needs a path")


def default_scenarios(duration: int = 1440) -> list[ScenarioSpec]:
    """One low, two moderate and one high wind day."""
    return [
        ScenarioSpec("low", duration, "synthetic-low", 101, 5.5, 0.45),
        ScenarioSpec("moderate-a", duration, "synthetic-moderate", 102, 8.0, 0.5),
        ScenarioSpec("moderate-b", duration, "synthetic-moderate", 103, 9.0, 0.6),
        ScenarioSpec("high", duration, "synthetic-high", 104, 12.0, 0.6),
    ]


def mean_reverting_walk(n: int, mean: float, volatility: float, reversion: float,
                        rng: np.random.Generator, start: Optional[float] = None) -> np.ndarray:
    u = np.empty(n)
    u_prev = mean if start is None else start
    noise = rng.standard_normal(n)
    for i in range(n):
        u[i] = u_prev
        u_prev = min(max(u_prev + reversion * (mean - u_prev) + volatility * noise[i], 0.0),
                     SPEED_CEILING)
    return u


def synthesize(spec: ScenarioSpec, seed: Optional[int] = None) -> WindSeries:
    """Build the series a scenario describes. ``seed`` overrides ``spec.seed``."""
    n = spec.duration
    if spec.generator == "fixed-sequence":
        speeds = np.array(spec.sequence[:n], dtype=float)
    elif spec.generator == "file":
        series = load_csv(spec.path)
        if series.resolution > 1:
            series = interpolate_to_minutes(series)
        return series.window(0, n)
    else:
        rng = np.random.Generator(np.random.PCG64(spec.seed if seed is None else seed))
        speeds = mean_reverting_walk(n, spec.mean, spec.volatility, spec.reversion, rng)
    return WindSeries(np.arange(speeds.size), speeds, np.full(speeds.size, spec.direction), 1)


def load_csv(path) -> WindSeries:
    """Read ``minute,speed_mps[,direction_deg]`` rows; a leading header line is optional."""
    minutes, speeds, dirs = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and row[0].strip().lower() == "minute":
                continue
            if len(row) not in (2, 3):
                raise IngestionError(f"expected 2 or 3 columns, got {len(row)}", row=lineno)
            try:
                m = int(row[0])
                s = float(row[1])
                d = math.radians(float(row[2])) if len(row) == 3 and row[2].strip() else 0.0
            except ValueError as exc:
                raise IngestionError(f"cannot parse {row!r}: {exc}", row=lineno) from None
            if s < 0 or not math.isfinite(s):
                raise IngestionError(f"invalid wind speed {s}", row=lineno)
            if minutes and m <= minutes[-1]:
                raise IngestionError("minute index not strictly increasing", row=lineno)
            minutes.append(m)
            speeds.append(s)
            dirs.append(d)
    if not minutes:
        raise IngestionError(f"{path}: no data rows")
    resolution = minutes[1] - minutes[0] if len(minutes) > 1 else 1
    return WindSeries(np.array(minutes), np.array(speeds), np.array(dirs), resolution)


def _degrees_exact(rad: float) -> float:
    # pick a degree value that maps back onto ``rad`` bit-for-bit
    deg = math.degrees(rad)
    cand = deg
    for _ in range(8):
        if math.radians(cand) == rad:
            return cand
        cand = math.nextafter(cand, math.inf if math.radians(cand) < rad else -math.inf)
    return deg


def write_csv(series: WindSeries, path) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("minute,speed_mps,direction_deg\n")
        for m, s, d in series.samples:
            fh.write(f"{m},{s!r},{_degrees_exact(d)!r}\n")
