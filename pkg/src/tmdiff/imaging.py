"""Traffic-to-image encoding: per-matrix color mapping and difference stacking.

A traffic matrix becomes an inverted min-max color plane in [0, 255] (high
traffic = dark). Each timestep is then stacked with its first and second
temporal differences into a 3-channel image (or a single plane in grayscale
mode). Model-facing planes are affinely mapped into [-1, 1]: intensity via
v/127.5 - 1 (0 <-> -1, 255 <-> +1), differences via d/255.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError

MODES = ("rgb", "grayscale")


@dataclass(frozen=True)
class ColorMatrix:
    """Inverted normalized intensity plane plus the min/max it was built from."""

    values: np.ndarray  # (N, N) in [0, 255]
    source_min: float = math.nan
    source_max: float = math.nan

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.ndim != 2:
            raise ValidationError(f"color matrix must be 2-D, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValidationError("color matrix contains non-finite entries")
        if v.min() < 0.0 or v.max() > 255.0:
            raise ValidationError("color matrix entries must lie in [0, 255]")


@dataclass(frozen=True)
class TrafficImage:
    """Stacked channels (intensity, first difference, second difference)."""

    channels: np.ndarray  # (C, N, N); C is 3 (rgb) or 1 (grayscale)

    def __post_init__(self):
        c = np.asarray(self.channels, dtype=np.float64)
        object.__setattr__(self, "channels", c)
        if c.ndim != 3 or c.shape[0] not in (1, 3):
            raise ValidationError(f"image must be (C, N, N) with C in {{1, 3}}, got {c.shape}")
        if c[0].min() < 0.0 or c[0].max() > 255.0:
            raise ValidationError("intensity plane must lie in [0, 255]")
        if c.shape[0] == 3 and (np.abs(c[1:]) > 255.0).any():
            raise ValidationError("difference planes must lie in [-255, 255]")

    @property
    def normalized_planes(self) -> np.ndarray:
        """Model-facing planes in [-1, 1]."""
        out = np.empty_like(self.channels)
        out[0] = self.channels[0] / 127.5 - 1.0
        if self.channels.shape[0] == 3:
            out[1:] = self.channels[1:] / 255.0
        return out


class ClampCounter:
    """Counts out-of-range values clamped while decoding generated planes."""

    def __init__(self):
        self.count = 0

    def add(self, n: int) -> None:
        self.count += int(n)

    def reset(self) -> None:
        self.count = 0


def color_encode(x: np.ndarray) -> ColorMatrix:
    """Inverted min-max color mapping: 255 * (1 - (x - min) / (max - min)).

    A constant matrix maps to all-255 (uniform load reads as minimal relative
    to itself; 255 is the brightest = least-traffic color).
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValidationError("matrix contains NaN or Inf")
    lo = float(x.min())
    hi = float(x.max())
    if hi > lo:
        values = 255.0 * (1.0 - (x - lo) / (hi - lo))
    else:
        values = np.full_like(x, 255.0)
    return ColorMatrix(values=values, source_min=lo, source_max=hi)


def image_encode(colors: Sequence[ColorMatrix], mode: str = "rgb") -> list[TrafficImage]:
    """Stack each color plane with its first and second temporal differences.

    t=1 repeats the plane, t=2 repeats the first difference; from t=3 the
    channels are (G_t, G_t - G_{t-1}, G_t - 2*G_{t-1} + G_{t-2}).
    """
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    if len(colors) < 1:
        raise ValidationError("need at least one color matrix")
    planes = [c.values for c in colors]
    images = []
    for t, g in enumerate(planes):
        if mode == "grayscale":
            images.append(TrafficImage(channels=g[None]))
            continue
        if t == 0:
            first = second = g
        elif t == 1:
            first = second = g - planes[0]
        else:
            first = g - planes[t - 1]
            second = g - 2.0 * planes[t - 1] + planes[t - 2]
        # Second differences can mathematically reach +/-510; the channel
        # contract pins [-255, 255], so out-of-range values are clipped.
        stack = np.stack([g, np.clip(first, -255.0, 255.0), np.clip(second, -255.0, 255.0)])
        images.append(TrafficImage(channels=stack))
    return images


def encode_series(matrices: np.ndarray, mode: str = "rgb") -> np.ndarray:
    """Convenience: raw (T, N, N) volumes -> normalized image stack (T, C, N, N)."""
    colors = [color_encode(m) for m in matrices]
    images = image_encode(colors, mode=mode)
    return np.stack([img.normalized_planes for img in images])


def denormalize_intensity(plane: np.ndarray, warnings: ClampCounter | None = None) -> np.ndarray:
    """Map a [-1, 1] intensity plane back to [0, 255], clamping overshoot."""
    plane = np.asarray(plane, dtype=np.float64)
    out_of_range = int((plane < -1.0).sum() + (plane > 1.0).sum())
    if out_of_range and warnings is not None:
        warnings.add(out_of_range)
    return (np.clip(plane, -1.0, 1.0) + 1.0) * 127.5


def decode_intensity(image: TrafficImage, warnings: ClampCounter | None = None) -> ColorMatrix:
    """Recover the [0, 255] intensity plane from an image's normalized planes."""
    values = denormalize_intensity(image.normalized_planes[0], warnings)
    return ColorMatrix(values=values)


def intensity01_from_normalized(plane: np.ndarray, warnings: ClampCounter | None = None) -> np.ndarray:
    """Metric space used by evaluation: intensity / 255, i.e. [0, 1]."""
    return denormalize_intensity(plane, warnings) / 255.0


def export_png(image: TrafficImage, channel: int, path: str | Path) -> None:
    """Debug export of one channel as an 8-bit PNG (value = round(intensity))."""
    from PIL import Image

    plane = image.channels[channel]
    if channel == 0:
        scaled = plane
    else:
        scaled = (plane + 255.0) / 2.0  # map [-255, 255] onto [0, 255] for display
    data = np.round(scaled).astype(np.uint8)
    Image.fromarray(data, mode="L").save(Path(path))
