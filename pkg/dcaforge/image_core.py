"""Pixel buffers and the shared numerical primitives.

Features:
- Immutable 8-bit ImageBuffer (1 or 3 channels) with normalized [0, 1] view
- ITU-R 601 grayscale conversion
- Separable Gaussian blur with edge replication
- Linear contrast enhancement around mid-gray
- Per-region RMS contrast and mean brightness
- Extrema location with row-major tie-breaking
- PNG/JPEG reading and writing through Pillow
"""

import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .config import Config
from .exceptions import DataError, EmptyRegionError, ParameterError, ShapeError
from .logger import setup_logger
from .utils import exclusive_write

logger = setup_logger("ImageCore", level=Config.LOG_LEVEL)

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def _round_half_up(values: np.ndarray) -> np.ndarray:
    return np.floor(values + 0.5)


def _to_uint8(values: np.ndarray) -> np.ndarray:
    return np.clip(_round_half_up(values), 0, 255).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """Row-major 8-bit raster of shape (height, width) or (height, width, 3).

    The wrapped array is copied and marked read-only, so buffers can be
    shared freely between workers.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        array = np.asarray(self.data)
        if array.dtype != np.uint8:
            raise ShapeError(f"ImageBuffer needs uint8 data, got {array.dtype}")
        if array.ndim == 3 and array.shape[2] == 1:
            array = array[:, :, 0]
        if array.ndim not in (2, 3) or (array.ndim == 3 and array.shape[2] != 3):
            raise ShapeError(f"Unsupported raster shape {array.shape}")
        if array.shape[0] < 1 or array.shape[1] < 1:
            raise ShapeError(f"Raster must be at least 1x1, got {array.shape}")
        array = np.array(array, copy=True)
        array.setflags(write=False)
        object.__setattr__(self, "data", array)

    @classmethod
    def from_array(cls, values: np.ndarray) -> "ImageBuffer":
        """Round, clamp and store arbitrary numeric values."""
        values = np.asarray(values)
        if values.dtype == np.uint8:
            return cls(values)
        return cls(_to_uint8(values.astype(np.float64)))

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    @property
    def shape(self) -> Tuple[int, int]:
        """(height, width) of the raster."""
        return self.height, self.width

    def normalized(self) -> np.ndarray:
        """Intensities as float64 in [0, 1] (divided by 255)."""
        return self.data.astype(np.float64) / 255.0

    def copy_data(self) -> np.ndarray:
        """Writable copy of the pixel array."""
        return np.array(self.data, copy=True)

    def equals(self, other: "ImageBuffer") -> bool:
        return self.data.shape == other.data.shape and bool(
            np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class PixelRegion:
    """Boolean membership raster over a parent image."""

    membership: np.ndarray

    def __post_init__(self) -> None:
        mask = np.asarray(self.membership, dtype=bool)
        if mask.ndim != 2:
            raise ShapeError(f"Region membership must be 2-D, got {mask.shape}")
        mask = np.array(mask, copy=True)
        mask.setflags(write=False)
        object.__setattr__(self, "membership", mask)

    @classmethod
    def full(cls, width: int, height: int) -> "PixelRegion":
        return cls(np.ones((height, width), dtype=bool))

    @classmethod
    def empty(cls, width: int, height: int) -> "PixelRegion":
        return cls(np.zeros((height, width), dtype=bool))

    @property
    def height(self) -> int:
        return int(self.membership.shape[0])

    @property
    def width(self) -> int:
        return int(self.membership.shape[1])

    @property
    def count(self) -> int:
        return int(self.membership.sum())

    @property
    def is_empty(self) -> bool:
        return not self.membership.any()

    def complement(self) -> "PixelRegion":
        return PixelRegion(~self.membership)


@dataclass(frozen=True)
class ExtremaReport:
    """Locations (x, y) and values of the global max and min."""

    brightest: Tuple[int, int]
    darkest: Tuple[int, int]
    brightest_value: int
    darkest_value: int


def _require_single_channel(img: ImageBuffer, op: str) -> None:
    if img.channels != 1:
        raise ShapeError(f"{op} needs a 1-channel image, got {img.channels} channels")


def _check_region(img: ImageBuffer, region: PixelRegion) -> np.ndarray:
    if region.membership.shape != img.shape:
        raise ShapeError(
            f"Region shape {region.membership.shape} does not match image {img.shape}"
        )
    if region.is_empty:
        raise EmptyRegionError("Statistics over an empty region are undefined")
    return img.data[region.membership].astype(np.float64)


def to_grayscale(img: ImageBuffer) -> ImageBuffer:
    """Convert a 3-channel image to ITU-R 601 luma.

    Args:
        img: RGB image

    Returns:
        1-channel image, round(0.299 R + 0.587 G + 0.114 B)

    Raises:
        ShapeError: If img is not 3-channel
    """
    if img.channels != 3:
        raise ShapeError("to_grayscale needs a 3-channel image")
    rgb = img.data.astype(np.float64)
    r, g, b = LUMA_WEIGHTS
    luma = r * rgb[:, :, 0] + g * rgb[:, :, 1] + b * rgb[:, :, 2]
    return ImageBuffer(_to_uint8(luma))


def ensure_grayscale(img: ImageBuffer) -> ImageBuffer:
    """Pass 1-channel images through, convert 3-channel ones."""
    return img if img.channels == 1 else to_grayscale(img)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled, normalized 1-D Gaussian of half-width ceil(3 sigma)."""
    if not sigma > 0 or not math.isfinite(sigma):
        raise ParameterError(f"sigma must be positive, got {sigma}")
    half_width = int(math.ceil(3.0 * sigma))
    x = np.arange(-half_width, half_width + 1, dtype=np.float64)
    kernel = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return kernel / kernel.sum()


def gaussian_blur(img: ImageBuffer, sigma: float) -> ImageBuffer:
    """Separable Gaussian blur with edge replication.

    Args:
        img: Input image (1 or 3 channels)
        sigma: Standard deviation in pixels

    Returns:
        Blurred image of the same shape

    Raises:
        ParameterError: If sigma is not positive
    """
    kernel = gaussian_kernel(sigma)
    values = img.data.astype(np.float64)
    values = ndimage.correlate1d(values, kernel, axis=0, mode="nearest")
    values = ndimage.correlate1d(values, kernel, axis=1, mode="nearest")
    return ImageBuffer(_to_uint8(values))


def enhance_contrast(img: ImageBuffer, factor: float) -> ImageBuffer:
    """Stretch intensities around 128: v -> clamp(round(128 + factor (v - 128)))."""
    if not factor > 0 or not math.isfinite(factor):
        raise ParameterError(f"Contrast factor must be positive, got {factor}")
    values = img.data.astype(np.float64)
    return ImageBuffer(_to_uint8(128.0 + factor * (values - 128.0)))


def region_rms(
    img: ImageBuffer,
    region: PixelRegion,
    normalized: bool = False
) -> float:
    """RMS contrast: population standard deviation over the region.

    Args:
        img: 1-channel image
        region: Non-empty region with the image's dimensions
        normalized: Divide intensities by 255 first

    Returns:
        Standard deviation (raw 0-255 scale unless normalized)
    """
    _require_single_channel(img, "region_rms")
    values = _check_region(img, region)
    if normalized:
        values = values / 255.0
    mean = values.sum() / values.size
    return float(math.sqrt(((values - mean) ** 2).sum() / values.size))


def region_brightness(img: ImageBuffer, region: PixelRegion) -> float:
    """Arithmetic mean of member intensities on the 0-255 scale."""
    _require_single_channel(img, "region_brightness")
    values = _check_region(img, region)
    return float(values.sum() / values.size)


def locate_extrema(img: ImageBuffer) -> ExtremaReport:
    """Find global max and min; ties go to the first pixel in row-major order."""
    _require_single_channel(img, "locate_extrema")
    flat = img.data.ravel()
    hi = int(np.argmax(flat))
    lo = int(np.argmin(flat))
    return ExtremaReport(
        brightest=(hi % img.width, hi // img.width),
        darkest=(lo % img.width, lo // img.width),
        brightest_value=int(flat[hi]),
        darkest_value=int(flat[lo]),
    )


def read_image(path: Union[str, Path]) -> ImageBuffer:
    """Load an 8-bit PNG/JPEG.

    Grayscale modes load as 1 channel, everything else as RGB.

    Raises:
        DataError: If the file is missing or not a readable image
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"Image not found: {path}")
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode.startswith("I") or im.mode == "F":
                raise DataError(f"Only 8-bit images are supported: {path} ({im.mode})")
            if im.mode in ("1", "L"):
                im = im.convert("L")
            elif im.mode != "RGB":
                im = im.convert("RGB")
            array = np.asarray(im, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as e:
        raise DataError(f"Unreadable image {path}: {e}")
    logger.debug(f"Read {path} ({array.shape})")
    return ImageBuffer(array)


def encode_image(img: ImageBuffer, fmt: str = "PNG") -> bytes:
    """Encode to PNG (lossless) or JPEG bytes."""
    buffer = io.BytesIO()
    pil = Image.fromarray(np.ascontiguousarray(img.data))
    if fmt.upper() == "JPEG":
        pil.save(buffer, format="JPEG", quality=95)
    else:
        pil.save(buffer, format="PNG")
    return buffer.getvalue()


def write_image(
    img: ImageBuffer,
    path: Union[str, Path],
    overwrite: bool = False
) -> Path:
    """Write an image; format follows the suffix (.png, .jpg/.jpeg).

    Raises:
        DataError: If the file exists and overwrite is False
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in (".png", ".jpg", ".jpeg"):
        raise DataError(f"Unsupported image suffix: {path}")
    fmt = "JPEG" if suffix in (".jpg", ".jpeg") else "PNG"
    exclusive_write(path, encode_image(img, fmt), overwrite=overwrite)
    return path
