"""Traffic-matrix series: loading, synthesis, chronological splitting, windowing.

Canonical on-disk format (extension ``.tm``): UTF-8 text, header line
``N=<int> interval=<int>``, then one matrix per line as N*N space-separated
decimal values in row-major order.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DataError, ParseError, ValidationError

_HEADER_RE = re.compile(r"^N=(\d+) interval=(\d+)$")


@dataclass(frozen=True)
class TrafficMatrixSeries:
    """Ordered sequence of N x N nonnegative demand matrices at a fixed interval."""

    node_count: int
    interval_seconds: int
    matrices: np.ndarray  # (T, N, N) float64
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        m = np.asarray(self.matrices, dtype=np.float64)
        object.__setattr__(self, "matrices", m)
        if self.node_count < 1:
            raise ValidationError(f"node_count must be positive, got {self.node_count}")
        if self.interval_seconds < 1:
            raise ValidationError(f"interval_seconds must be positive, got {self.interval_seconds}")
        if m.ndim != 3 or m.shape[1] != self.node_count or m.shape[2] != self.node_count:
            raise ValidationError(
                f"matrices must have shape (T, {self.node_count}, {self.node_count}), got {m.shape}"
            )
        if m.shape[0] < 1:
            raise ValidationError("series must contain at least one matrix")
        if not np.isfinite(m).all():
            raise ValidationError("series contains NaN or Inf entries")
        if (m < 0).any():
            raise ValidationError("series contains negative entries")
        if self.timestamps is not None:
            ts = np.asarray(self.timestamps, dtype=np.int64)
            object.__setattr__(self, "timestamps", ts)
            if ts.shape != (m.shape[0],):
                raise ValidationError("timestamps length must match series length")
            if ts.shape[0] > 1 and not (np.diff(ts) > 0).all():
                raise ValidationError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return self.matrices.shape[0]

    def slice(self, start: int, stop: int) -> "TrafficMatrixSeries":
        """Chronological sub-series covering [start, stop)."""
        ts = None if self.timestamps is None else self.timestamps[start:stop]
        return TrafficMatrixSeries(self.node_count, self.interval_seconds, self.matrices[start:stop], ts)


@dataclass(frozen=True)
class WindowedSample:
    """One sliding-window sample: T_in history matrices and the T_out matrices after them."""

    input_window: np.ndarray   # (T_in, N, N)
    target_window: np.ndarray  # (T_out, N, N)
    origin_index: int

    def __post_init__(self):
        if self.input_window.shape[0] < 1 or self.target_window.shape[0] < 1:
            raise ValidationError("windows must be nonempty")


@dataclass(frozen=True)
class DatasetSplit:
    """Chronological train/validation/test slices plus the index boundaries used."""

    train: TrafficMatrixSeries
    validation: TrafficMatrixSeries
    test: TrafficMatrixSeries
    ratios: tuple[float, float, float]
    boundaries: tuple[int, int]  # (end of train, end of validation) as series indices


@dataclass(frozen=True)
class BurstEvent:
    """One multiplicative burst emitted by the synthetic generator."""

    index: int              # timestep the burst lands on
    pairs: tuple[int, ...]  # flat origin-destination indices affected
    factor: float


DIURNAL_PERIOD = 288  # timesteps per day at 5-minute intervals


def generate_synthetic(
    node_count: int,
    length: int,
    seed: int,
    burst_rate: float = 0.05,
    interval_seconds: int = 300,
) -> TrafficMatrixSeries:
    """Deterministic synthetic series: diurnal sinusoid + smooth noise + bursts."""
    series, _ = generate_synthetic_with_events(
        node_count, length, seed, burst_rate, interval_seconds
    )
    return series


def generate_synthetic_with_events(
    node_count: int,
    length: int,
    seed: int,
    burst_rate: float = 0.05,
    interval_seconds: int = 300,
) -> tuple[TrafficMatrixSeries, list[BurstEvent]]:
    """Like :func:`generate_synthetic` but also returns the burst event log."""
    if node_count < 2:
        raise ConfigurationError(f"node_count must be >= 2, got {node_count}")
    if length < 1:
        raise ConfigurationError(f"length must be >= 1, got {length}")
    if not 0.0 <= burst_rate <= 1.0:
        raise ConfigurationError(f"burst_rate must lie in [0, 1], got {burst_rate}")

    rng = np.random.default_rng(seed)
    n_pairs = node_count * node_count

    base = rng.uniform(20.0, 100.0, size=n_pairs)
    amplitude = base * rng.uniform(0.2, 0.6, size=n_pairs)
    phase = rng.uniform(0.0, 2.0 * math.pi, size=n_pairs)

    t = np.arange(length, dtype=np.float64)[:, None]
    diurnal = base[None, :] + amplitude[None, :] * np.sin(
        2.0 * math.pi * t / DIURNAL_PERIOD + phase[None, :]
    )

    # Smooth noise: white Gaussian low-passed with a short moving average.
    raw_noise = rng.normal(0.0, 1.0, size=(length, n_pairs)) * (0.05 * base[None, :])
    kernel = 5
    padded = np.pad(raw_noise, ((kernel // 2, kernel // 2), (0, 0)), mode="edge")
    csum = np.concatenate([np.zeros((1, n_pairs)), np.cumsum(padded, axis=0)])
    smooth = (csum[kernel:] - csum[:-kernel]) / kernel

    flat = np.maximum(diurnal + smooth, 0.0)

    events: list[BurstEvent] = []
    if burst_rate > 0.0:
        clock = 0.0
        while True:
            clock += rng.exponential(1.0 / burst_rate)
            idx = int(math.floor(clock))
            if idx >= length:
                break
            n_hit = max(1, n_pairs // 5)
            hit = np.sort(rng.choice(n_pairs, size=n_hit, replace=False))
            factor = float(rng.uniform(2.0, 5.0))
            flat[idx, hit] *= factor
            events.append(BurstEvent(idx, tuple(int(p) for p in hit), factor))

    matrices = flat.reshape(length, node_count, node_count)
    series = TrafficMatrixSeries(node_count, interval_seconds, matrices)
    return series, events


def load_series(path: str | Path, format: str = "canonical", nodes: int | None = None) -> TrafficMatrixSeries:
    """Load a series from disk; ``format`` is ``canonical`` or ``csv_rowmajor``.

    CSV import has no header, so ``nodes`` must declare N.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    if format == "canonical":
        return _load_canonical(path)
    if format == "csv_rowmajor":
        if nodes is None:
            raise ConfigurationError("csv_rowmajor import requires the node count (--nodes)")
        return _load_csv(path, nodes)
    raise ConfigurationError(f"unknown dataset format: {format!r}")


def _parse_row(text: str, n_values: int, line_number: int, sep: str | None) -> np.ndarray:
    parts = text.split(sep) if sep else text.split()
    if len(parts) != n_values:
        raise ParseError(f"expected {n_values} values, found {len(parts)}", line_number)
    try:
        values = np.array([float(p) for p in parts], dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"unparseable value: {exc}", line_number) from None
    if not np.isfinite(values).all():
        raise ValidationError(f"line {line_number}: non-finite entry")
    if (values < 0).any():
        raise ValidationError(f"line {line_number}: negative entry")
    return values


def _load_canonical(path: Path) -> TrafficMatrixSeries:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ParseError("empty file", 1)
    header = _HEADER_RE.match(lines[0])
    if header is None:
        raise ParseError(f"bad header {lines[0]!r}, expected 'N=<int> interval=<int>'", 1)
    n = int(header.group(1))
    interval = int(header.group(2))
    rows = [
        _parse_row(line, n * n, i + 2, sep=None)
        for i, line in enumerate(lines[1:])
        if line.strip()
    ]
    if not rows:
        raise ParseError("no matrices after header", 2)
    matrices = np.stack(rows).reshape(len(rows), n, n)
    return TrafficMatrixSeries(n, interval, matrices)


def _load_csv(path: Path, nodes: int, interval_seconds: int = 300) -> TrafficMatrixSeries:
    lines = path.read_text(encoding="utf-8").splitlines()
    rows = [
        _parse_row(line, nodes * nodes, i + 1, sep=",")
        for i, line in enumerate(lines)
        if line.strip()
    ]
    if not rows:
        raise ParseError("empty file", 1)
    matrices = np.stack(rows).reshape(len(rows), nodes, nodes)
    return TrafficMatrixSeries(nodes, interval_seconds, matrices)


def write_canonical(series: TrafficMatrixSeries, path: str | Path) -> None:
    """Write the canonical text format; floats use shortest round-trip repr."""
    path = Path(path)
    lines = [f"N={series.node_count} interval={series.interval_seconds}"]
    for matrix in series.matrices:
        lines.append(" ".join(repr(float(v)) for v in matrix.ravel()))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def chronological_split(
    series: TrafficMatrixSeries,
    ratios: tuple[float, float, float] = (0.7, 0.15, 0.15),
) -> DatasetSplit:
    """Split in time order: floor(T*r) for train and validation, remainder to test."""
    if len(series) < 3:
        raise ConfigurationError(f"series too short to split: length {len(series)}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigurationError(f"split ratios must sum to 1, got {ratios}")
    if any(r < 0 for r in ratios):
        raise ConfigurationError(f"split ratios must be nonnegative, got {ratios}")
    total = len(series)
    n_train = int(math.floor(ratios[0] * total))
    n_val = int(math.floor(ratios[1] * total))
    n_test = total - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise ConfigurationError(
            f"split produced an empty slice: sizes ({n_train}, {n_val}, {n_test})"
        )
    return DatasetSplit(
        train=series.slice(0, n_train),
        validation=series.slice(n_train, n_train + n_val),
        test=series.slice(n_train + n_val, total),
        ratios=tuple(ratios),
        boundaries=(n_train, n_train + n_val),
    )


def make_windows(
    series: TrafficMatrixSeries | np.ndarray,
    t_in: int,
    t_out: int,
    stride: int = 1,
) -> list[WindowedSample]:
    """Sliding windows: sample i covers [i*stride, i*stride + t_in + t_out)."""
    if t_in < 1 or t_out < 1 or stride < 1:
        raise ConfigurationError("t_in, t_out and stride must all be >= 1")
    matrices = series.matrices if isinstance(series, TrafficMatrixSeries) else np.asarray(series)
    total = matrices.shape[0]
    if total < t_in + t_out:
        raise ConfigurationError(
            f"series of length {total} cannot produce any window with t_in={t_in}, t_out={t_out}"
        )
    count = (total - t_in - t_out) // stride + 1
    samples = []
    for i in range(count):
        start = i * stride
        samples.append(
            WindowedSample(
                input_window=matrices[start : start + t_in],
                target_window=matrices[start + t_in : start + t_in + t_out],
                origin_index=start,
            )
        )
    return samples
