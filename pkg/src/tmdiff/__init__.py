"""Traffic-matrix forecasting via image-encoded conditional diffusion."""

__version__ = "0.1.0"

from .data import (
    DatasetSplit,
    TrafficMatrixSeries,
    WindowedSample,
    chronological_split,
    generate_synthetic,
    load_series,
    make_windows,
    write_canonical,
)
from .imaging import ColorMatrix, TrafficImage, color_encode, decode_intensity, image_encode

__all__ = [
    "DatasetSplit",
    "TrafficMatrixSeries",
    "WindowedSample",
    "chronological_split",
    "generate_synthetic",
    "load_series",
    "make_windows",
    "write_canonical",
    "ColorMatrix",
    "TrafficImage",
    "color_encode",
    "decode_intensity",
    "image_encode",
]
