"""Raster containers and image file I/O.

Disparity rasters arrive as 8- or 16-bit single-channel image files whose
raw integer values encode fixed-point disparities (raw = disparity * scale,
with one reserved raw value marking unmeasured pixels).  Damage masks are
8-bit rasters with 255 for damaged pixels and 0 for background.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import DimensionMismatchError, RasterFormatError

DEFAULT_SCALE_16BIT = 256.0
DEFAULT_SCALE_8BIT = 1.0
DEFAULT_INVALID_VALUE = 0


@dataclass(frozen=True)
class PixelCoord:
    """Column/row index pair (u across, v down)."""

    u: int
    v: int


@dataclass(frozen=True)
class CameraModel:
    """Pinhole stereo geometry used to convert disparities to metres.

    Parameters
    ----------
    focal_length : float
        Focal length in pixels (shared by both axes).
    baseline : float
        Stereo baseline in metres.
    principal_point : tuple of float
        (cx, cy) in pixels.
    disparity_scale : float
        Raw raster units per pixel of disparity, used when decoding files.
    """

    focal_length: float
    baseline: float
    principal_point: tuple[float, float] = (0.0, 0.0)
    disparity_scale: float = DEFAULT_SCALE_16BIT

    def __post_init__(self):
        if not (self.focal_length > 0 and self.baseline > 0 and self.disparity_scale > 0):
            raise ValueError("focal_length, baseline, and disparity_scale must be positive")


@dataclass(frozen=True)
class DisparityImage:
    """Dense per-pixel horizontal disparity raster with validity flags.

    ``values`` is a height x width float64 array of disparities in pixels;
    ``valid`` marks the pixels that carry a measurement.  Invalid pixels are
    never read by downstream computations.
    """

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if values.ndim != 2 or values.size == 0:
            raise ValueError("disparity raster must be a non-empty 2-D array")
        if valid.shape != values.shape:
            raise DimensionMismatchError(
                f"validity shape {valid.shape} != raster shape {values.shape}"
            )
        picked = values[valid]
        if picked.size and (not np.all(np.isfinite(picked)) or picked.min() < 0):
            raise ValueError("valid pixels must hold finite disparities >= 0")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def valid_count(self) -> int:
        return int(np.count_nonzero(self.valid))


@dataclass(frozen=True)
class GrayImage:
    """Single-channel real-valued raster (height x width float64)."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.size == 0:
            raise ValueError("image must be a non-empty 2-D array")
        if not np.all(np.isfinite(values)):
            raise ValueError("image values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class DamageMask:
    """Binary damaged/undamaged raster with labelled connected regions.

    ``labels`` assigns region ids 1..R to damaged pixels (0 = background);
    a pixel is damaged exactly when its label is positive.
    """

    damaged: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        damaged = np.asarray(self.damaged, dtype=bool)
        labels = np.asarray(self.labels, dtype=np.int32)
        if damaged.ndim != 2 or damaged.size == 0:
            raise ValueError("mask must be a non-empty 2-D array")
        if labels.shape != damaged.shape:
            raise DimensionMismatchError(
                f"label shape {labels.shape} != mask shape {damaged.shape}"
            )
        if not np.array_equal(labels > 0, damaged):
            raise ValueError("labels must be positive exactly on damaged pixels")
        object.__setattr__(self, "damaged", damaged)
        object.__setattr__(self, "labels", labels)

    @property
    def height(self) -> int:
        return self.damaged.shape[0]

    @property
    def width(self) -> int:
        return self.damaged.shape[1]

    @property
    def region_count(self) -> int:
        return int(self.labels.max(initial=0))


def _atomic_save(image: Image.Image, path: str) -> None:
    # Write-to-temp + rename so concurrent readers never see partial files.
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=os.path.splitext(path)[1])
    os.close(fd)
    try:
        image.save(tmp, format=_format_for(path))
        os.replace(tmp, path)
    except Exception:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _format_for(path: str) -> str | None:
    ext = os.path.splitext(path)[1].lower()
    return {".png": "PNG", ".tif": "TIFF", ".tiff": "TIFF", ".pgm": "PPM"}.get(ext)


def load_disparity(path, scale: float | None = None,
                   invalid_value: int = DEFAULT_INVALID_VALUE) -> DisparityImage:
    """Decode an 8- or 16-bit single-channel raster into a disparity image.

    Parameters
    ----------
    path : str or os.PathLike
        Raster file to read.
    scale : float, optional
        Raw units per disparity pixel.  Defaults to 256 for 16-bit files and
        1 for 8-bit files.
    invalid_value : int
        Raw value that marks unmeasured pixels (0 in the common datasets).

    Returns
    -------
    DisparityImage
        Disparity = raw / scale; pixels equal to ``invalid_value`` are
        flagged invalid and their values zeroed.
    """
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            raw = np.array(img)
    except OSError as exc:
        raise RasterFormatError(f"cannot read raster {path!r}: {exc}") from exc
    if mode == "L":
        default_scale = DEFAULT_SCALE_8BIT
    elif mode in ("I;16", "I;16B", "I"):
        default_scale = DEFAULT_SCALE_16BIT
    else:
        raise RasterFormatError(
            f"{path!r}: unsupported mode {mode!r}; need an 8- or 16-bit single-channel raster"
        )
    if raw.ndim != 2 or raw.size == 0:
        raise RasterFormatError(f"{path!r}: zero-sized or multi-channel raster")
    if scale is None:
        scale = default_scale
    if scale <= 0:
        raise ValueError("scale must be positive")
    valid = raw != invalid_value
    values = raw.astype(np.float64) / float(scale)
    values[~valid] = 0.0
    return DisparityImage(values, valid)


def save_raster(values: np.ndarray, path, scale: float = DEFAULT_SCALE_16BIT,
                valid: np.ndarray | None = None,
                invalid_value: int = DEFAULT_INVALID_VALUE,
                bit_depth: int = 16) -> None:
    """Encode a real-valued raster as a fixed-point 8- or 16-bit image file.

    Valid pixels are written as round(value * scale) clipped to the sample
    range; invalid pixels are written as ``invalid_value``.
    """
    if bit_depth == 16:
        dtype, maxval = np.uint16, 65535
    elif bit_depth == 8:
        dtype, maxval = np.uint8, 255
    else:
        raise ValueError("bit_depth must be 8 or 16")
    values = np.asarray(values, dtype=np.float64)
    raw = np.clip(np.rint(values * scale), 0, maxval).astype(dtype)
    if valid is not None:
        raw[~np.asarray(valid, dtype=bool)] = invalid_value
    _atomic_save(Image.fromarray(raw), str(path))


def save_mask(mask: DamageMask, path) -> None:
    """Write a damage mask as an 8-bit raster (damaged = 255, background = 0)."""
    raw = np.where(mask.damaged, 255, 0).astype(np.uint8)
    _atomic_save(Image.fromarray(raw, mode="L"), str(path))


def load_mask(path) -> np.ndarray:
    """Read a binary mask raster back as a boolean array (nonzero = damaged)."""
    try:
        with Image.open(path) as img:
            img.load()
            raw = np.array(img)
    except OSError as exc:
        raise RasterFormatError(f"cannot read mask {path!r}: {exc}") from exc
    if raw.ndim != 2 or raw.size == 0:
        raise RasterFormatError(f"{path!r}: zero-sized or multi-channel mask raster")
    return raw != 0


def median_filter(img: GrayImage, radius: int) -> GrayImage:
    """Median-filter an image with a (2*radius+1)^2 window and replicated borders."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    if radius >= min(img.width, img.height):
        raise ValueError(
            f"radius {radius} too large for a {img.width}x{img.height} image"
        )
    out = ndimage.median_filter(img.values, size=2 * radius + 1, mode="nearest")
    return GrayImage(out)
