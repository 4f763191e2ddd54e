"""Dark corner artifact detection, masking and size categorization.

Features:
- Circle / DcaMask value types with exact raster rendering
- Detection: dark threshold, edge-connected components, circle fit on
  the dark/bright boundary with trimmed refit and geometric refinement
- Size categorization by DCA area fraction with configurable thresholds
- Batch detection writing mask PNGs and a circle CSV
- Re-categorization of an existing circle CSV
"""

import argparse
import math
import os
import sys
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage
from scipy.optimize import least_squares

from .config import Config
from .exceptions import DataError, NoDcaDetected, ParameterError, ShapeError
from .image_core import ImageBuffer, PixelRegion, ensure_grayscale, read_image, write_image
from .logger import setup_logger
from .utils import (
    IMAGE_EXTENSIONS,
    ForgeArgumentParser,
    add_common_arguments,
    get_all_files,
    map_rows,
    read_csv_rows,
    write_csv_rows,
    write_errors,
)

logger = setup_logger("DcaMask", level=Config.LOG_LEVEL)

MASK_CSV_COLUMNS = ["image_id", "cx", "cy", "radius", "area_fraction", "category"]
# optional trailing column: the image the circle was detected on
SOURCE_IMAGE_COLUMN = "image"
MIN_DETECT_SIZE = 32


class DcaSizeCategory(Enum):
    """DCA size bands keyed to area fraction."""
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"
    OTHER = "other"


@dataclass(frozen=True)
class SizeThresholds:
    """Ascending area-fraction cut points (other | small | medium | large)."""

    other: float = 0.01
    medium: float = 0.10
    large: float = 0.30

    def __post_init__(self) -> None:
        if not 0.0 < self.other < self.medium < self.large < 1.0:
            raise ParameterError(
                "Size thresholds must be strictly ascending in (0, 1), got "
                f"({self.other}, {self.medium}, {self.large})"
            )

    @classmethod
    def parse(cls, text: str) -> "SizeThresholds":
        """Parse "0.01,0.10,0.30"."""
        try:
            values = [float(part) for part in text.split(",")]
        except ValueError:
            raise ParameterError(f"Thresholds must be numbers: {text!r}")
        if len(values) != 3:
            raise ParameterError(f"Expected three thresholds, got {text!r}")
        return cls(*values)

    @classmethod
    def from_config(cls) -> "SizeThresholds":
        return cls(*Config.size_thresholds())

    def as_tuple(self) -> Tuple[float, float, float]:
        return self.other, self.medium, self.large

    def band(self, category: DcaSizeCategory) -> Tuple[float, float]:
        """Half-open [lo, hi) area interval of a category."""
        bands = {
            DcaSizeCategory.OTHER: (0.0, self.other),
            DcaSizeCategory.SMALL: (self.other, self.medium),
            DcaSizeCategory.MEDIUM: (self.medium, self.large),
            DcaSizeCategory.LARGE: (self.large, 1.0 + 1e-12),
        }
        return bands[category]


@dataclass(frozen=True)
class Circle:
    """Lens circle; the center may lie outside the image."""

    cx: float
    cy: float
    radius: float

    def __post_init__(self) -> None:
        for name in ("cx", "cy", "radius"):
            if not math.isfinite(getattr(self, name)):
                raise ParameterError(f"Circle {name} must be finite")
        if self.radius <= 0:
            raise ParameterError(f"Circle radius must be positive, got {self.radius}")

    def membership(self, width: int, height: int) -> np.ndarray:
        """Closed-disk membership raster, True inside the lens."""
        yy, xx = np.mgrid[0:height, 0:width]
        dx = xx.astype(np.float64) - self.cx
        dy = yy.astype(np.float64) - self.cy
        return dx * dx + dy * dy <= self.radius * self.radius

    def shrink(self, amount: float) -> "Circle":
        return Circle(self.cx, self.cy, self.radius - amount)


@dataclass(frozen=True, eq=False)
class DcaMask:
    """Mask raster (255 lens, 0 DCA) rendered from its circle."""

    raster: ImageBuffer
    circle: Circle
    area_fraction: float

    @property
    def lens(self) -> np.ndarray:
        return self.raster.data == 255

    @property
    def width(self) -> int:
        return self.raster.width

    @property
    def height(self) -> int:
        return self.raster.height

    def dca_region(self) -> PixelRegion:
        return PixelRegion(~self.lens)

    def to_row(
        self,
        image_id: str,
        thresholds: Optional[SizeThresholds] = None
    ) -> Dict[str, object]:
        """CSV row: image_id, cx, cy, radius, area_fraction, category."""
        return {
            "image_id": image_id,
            "cx": self.circle.cx,
            "cy": self.circle.cy,
            "radius": self.circle.radius,
            "area_fraction": self.area_fraction,
            "category": categorize(self, thresholds).value,
        }


def render_mask(circle: Circle, width: int, height: int) -> DcaMask:
    """Render a circle into a mask raster with its exact DCA area fraction."""
    if width < 1 or height < 1:
        raise ShapeError(f"Mask dimensions must be positive, got {width}x{height}")
    inside = circle.membership(width, height)
    raster = np.where(inside, 255, 0).astype(np.uint8)
    dca_pixels = int(inside.size - np.count_nonzero(inside))
    return DcaMask(
        raster=ImageBuffer(raster),
        circle=circle,
        area_fraction=dca_pixels / float(width * height),
    )


def dca_fraction(circle: Circle, width: int, height: int) -> float:
    """Area fraction outside the circle, without building a mask."""
    inside = circle.membership(width, height)
    return int(inside.size - np.count_nonzero(inside)) / float(width * height)


def categorize(
    mask: Union[DcaMask, float],
    thresholds: Optional[SizeThresholds] = None
) -> DcaSizeCategory:
    """Map an area fraction to its size band.

    Args:
        mask: DcaMask or a raw area fraction
        thresholds: Cut points (default: Config.SIZE_THRESHOLDS)

    Returns:
        DcaSizeCategory
    """
    thresholds = thresholds or SizeThresholds.from_config()
    fraction = mask.area_fraction if isinstance(mask, DcaMask) else float(mask)
    if fraction < thresholds.other:
        return DcaSizeCategory.OTHER
    if fraction < thresholds.medium:
        return DcaSizeCategory.SMALL
    if fraction < thresholds.large:
        return DcaSizeCategory.MEDIUM
    return DcaSizeCategory.LARGE


def read_mask(path: Union[str, Path]) -> ImageBuffer:
    """Load a persisted mask raster, re-binarized at 128."""
    img = ensure_grayscale(read_image(path))
    return ImageBuffer(np.where(img.data >= 128, 255, 0).astype(np.uint8))


def fit_circle_algebraic(x: np.ndarray, y: np.ndarray) -> Tuple[float, float, float]:
    """Kasa fit: least squares on x^2 + y^2 + D x + E y + F = 0."""
    design = np.column_stack([x, y, np.ones_like(x)])
    rhs = -(x * x + y * y)
    (d, e, f), *_ = np.linalg.lstsq(design, rhs, rcond=None)
    cx, cy = -d / 2.0, -e / 2.0
    r_sq = cx * cx + cy * cy - f
    if not r_sq > 0:
        raise NoDcaDetected("Degenerate circle fit")
    return float(cx), float(cy), float(math.sqrt(r_sq))


def fit_circle_geometric(
    x: np.ndarray,
    y: np.ndarray,
    initial: Tuple[float, float, float]
) -> Tuple[float, float, float]:
    """Refine by minimizing orthogonal distances."""

    def residuals(params: np.ndarray) -> np.ndarray:
        cx, cy, r = params
        return np.hypot(x - cx, y - cy) - r

    result = least_squares(residuals, np.asarray(initial, dtype=np.float64))
    cx, cy, r = result.x
    return float(cx), float(cy), float(abs(r))


def boundary_points(dark: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Sub-pixel points midway between 4-adjacent dark and bright pixels."""
    horizontal = dark[:, :-1] != dark[:, 1:]
    vertical = dark[:-1, :] != dark[1:, :]
    hy, hx = np.nonzero(horizontal)
    vy, vx = np.nonzero(vertical)
    x = np.concatenate([hx + 0.5, vx.astype(np.float64)])
    y = np.concatenate([hy.astype(np.float64), vy + 0.5])
    return x, y


class DcaMaskDetector:
    """Detect the lens circle that frames a dermoscopic image.

    The dark zone is every pixel at or below ``dark_threshold`` belonging
    to an 8-connected component that touches the image border. The circle
    is fitted to the dark/bright boundary, the worst ``trim_fraction`` of
    residuals is discarded, and the refit is polished geometrically.
    """

    def __init__(
        self,
        dark_threshold: int = Config.DARK_THRESHOLD,
        min_dark_fraction: float = Config.MIN_DARK_FRACTION,
        trim_fraction: float = Config.FIT_TRIM_FRACTION,
        max_residual: float = Config.MAX_FIT_RESIDUAL,
        thresholds: Optional[SizeThresholds] = None
    ):
        """Initialize detector.

        Args:
            dark_threshold: Gray level at or below which a pixel counts as dark
            min_dark_fraction: Minimum share of edge-connected dark pixels
            trim_fraction: Share of largest residuals dropped before the refit
            max_residual: Maximum RMS boundary residual (px) of the final fit
            thresholds: Size category cut points
        """
        if not 0 <= dark_threshold <= 255:
            raise ParameterError(f"dark_threshold must be in [0, 255], got {dark_threshold}")
        if not 0.0 <= trim_fraction < 1.0:
            raise ParameterError(f"trim_fraction must be in [0, 1), got {trim_fraction}")
        self.dark_threshold = dark_threshold
        self.min_dark_fraction = min_dark_fraction
        self.trim_fraction = trim_fraction
        self.max_residual = max_residual
        self.thresholds = thresholds or SizeThresholds.from_config()

    def edge_dark_zone(self, img: ImageBuffer) -> np.ndarray:
        """Dark pixels connected to the image border."""
        gray = ensure_grayscale(img).data
        dark = gray <= self.dark_threshold
        labels, count = ndimage.label(dark, structure=np.ones((3, 3), dtype=bool))
        if count == 0:
            return np.zeros_like(dark)
        border = np.concatenate([
            labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]
        ])
        touching = np.unique(border[border > 0])
        return np.isin(labels, touching)

    def fit(self, x: np.ndarray, y: np.ndarray) -> Tuple[Circle, float]:
        """Trimmed least-squares circle fit; returns circle and RMS residual."""
        if x.size < 3:
            raise NoDcaDetected("Too few boundary points for a circle fit")
        cx, cy, r = fit_circle_algebraic(x, y)
        residual = np.abs(np.hypot(x - cx, y - cy) - r)
        keep = x.size - int(math.floor(self.trim_fraction * x.size))
        if keep >= 3 and keep < x.size:
            order = np.argsort(residual, kind="stable")[:keep]
            x, y = x[order], y[order]
            cx, cy, r = fit_circle_algebraic(x, y)
        cx, cy, r = fit_circle_geometric(x, y, (cx, cy, r))
        rms = float(np.sqrt(np.mean((np.hypot(x - cx, y - cy) - r) ** 2)))
        if not (math.isfinite(r) and r > 0):
            raise NoDcaDetected("Circle fit diverged")
        return Circle(cx, cy, r), rms

    def detect(self, img: ImageBuffer) -> DcaMask:
        """Detect the DCA circle and render its mask.

        Args:
            img: Lens image, 1 or 3 channels, at least 32x32

        Returns:
            DcaMask rendered from the fitted circle

        Raises:
            ShapeError: If the image is smaller than 32x32
            NoDcaDetected: Too little dark area, no boundary, or a poor fit
        """
        if img.width < MIN_DETECT_SIZE or img.height < MIN_DETECT_SIZE:
            raise ShapeError(
                f"Detection needs at least {MIN_DETECT_SIZE}x{MIN_DETECT_SIZE}, "
                f"got {img.width}x{img.height}"
            )
        zone = self.edge_dark_zone(img)
        dark_fraction = zone.sum() / float(zone.size)
        if dark_fraction < self.min_dark_fraction:
            raise NoDcaDetected(
                f"Only {dark_fraction:.4f} of pixels are edge-connected dark"
            )
        x, y = boundary_points(zone)
        circle, rms = self.fit(x, y)
        if rms > self.max_residual:
            raise NoDcaDetected(
                f"Circle fit residual {rms:.2f}px exceeds {self.max_residual}px"
            )
        logger.debug(
            f"Fitted circle ({circle.cx:.1f}, {circle.cy:.1f}, r={circle.radius:.1f}) "
            f"from {x.size} points, rms {rms:.2f}"
        )
        return render_mask(circle, img.width, img.height)

    def detect_file(self, path: Path) -> DcaMask:
        return self.detect(read_image(path))

    def batch(
        self,
        images: Sequence[Path],
        out_dir: Path,
        workers: int = 1,
        overwrite: bool = False
    ) -> Dict[str, object]:
        """Detect masks for many images.

        Writes ``<image_id>.png`` masks and the circle CSV into out_dir;
        failed images go to errors.csv.

        Returns:
            Summary with counts and the CSV path
        """
        out_dir = Path(out_dir)
        jobs = [(self, Path(p)) for p in images]
        results = map_rows(_detect_job, jobs, workers=workers)

        rows: List[Dict[str, object]] = []
        errors: List[Dict[str, str]] = []
        for path, (mask, error) in zip(images, results):
            image_id = Path(path).stem
            if mask is None:
                logger.warning(f"No DCA mask for {image_id}: {error}")
                errors.append({"image_id": image_id, "error": error})
                continue
            write_image(mask.raster, out_dir / f"{image_id}.png", overwrite=overwrite)
            row = mask.to_row(image_id, self.thresholds)
            # relative to the CSV so the directory can move as a whole
            row[SOURCE_IMAGE_COLUMN] = os.path.relpath(Path(path).resolve(), out_dir.resolve())
            rows.append(row)

        csv_path = out_dir / Config.MASK_CSV_NAME
        columns = MASK_CSV_COLUMNS + [SOURCE_IMAGE_COLUMN]
        write_csv_rows(csv_path, columns, rows, overwrite=overwrite)
        write_errors(out_dir, errors, overwrite=overwrite)
        logger.info(f"Detected {len(rows)} masks, {len(errors)} failures")
        return {"detected": len(rows), "failed": len(errors), "csv": str(csv_path)}


def _detect_job(job: Tuple[DcaMaskDetector, Path]) -> Tuple[Optional[DcaMask], str]:
    detector, path = job
    try:
        return detector.detect_file(path), ""
    except (NoDcaDetected, DataError, ShapeError) as e:
        return None, str(e)


def detect_dca_circle(img: ImageBuffer, **kwargs: object) -> DcaMask:
    """Detect with a detector built from Config defaults plus overrides."""
    return DcaMaskDetector(**kwargs).detect(img)  # type: ignore[arg-type]


def recategorize_rows(
    rows: Sequence[Dict[str, str]],
    thresholds: SizeThresholds
) -> List[Dict[str, object]]:
    """Re-bin circle CSV rows under new thresholds without re-detection."""
    out: List[Dict[str, object]] = []
    for row in rows:
        try:
            fraction = float(row["area_fraction"])
        except ValueError:
            raise DataError(
                f"Bad area_fraction for {row.get('image_id')}: {row['area_fraction']!r}"
            )
        out.append({**row, "category": categorize(fraction, thresholds).value})
    return out


def build_parser(prog: Optional[str] = None) -> argparse.ArgumentParser:
    """Argument parser for the mask and categorize subcommands."""
    parser = ForgeArgumentParser(
        prog=prog,
        description="Detect dark corner artifacts and categorize their size",
        epilog="Examples:\n"
               "  %(prog)s detect --images-dir lesions/ --out-dir masks/\n"
               "  %(prog)s detect --images-dir lesions/ --out-dir masks/ --dark-threshold 30\n"
               "  %(prog)s categorize --masks-csv masks/dca_masks.csv --out cats.csv "
               "--thresholds 0.02,0.15,0.35\n",
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    sub = parser.add_subparsers(dest="command", required=True)

    detect = sub.add_parser("detect", help="Detect masks for a directory of images")
    detect.add_argument("--images-dir", type=Path, required=True, help="Input images")
    detect.add_argument("--out-dir", type=Path, required=True, help="Mask output directory")
    detect.add_argument(
        "--dark-threshold",
        type=int,
        default=Config.DARK_THRESHOLD,
        help=f"Dark gray level (default: {Config.DARK_THRESHOLD})"
    )
    detect.add_argument(
        "--thresholds",
        default=Config.SIZE_THRESHOLDS,
        help=f"Size cut points (default: {Config.SIZE_THRESHOLDS})"
    )
    detect.add_argument(
        "--workers",
        type=int,
        default=Config.WORKERS,
        help="Worker processes (default: logical CPUs)"
    )
    add_common_arguments(detect)

    cat = sub.add_parser("categorize", help="Re-bin an existing circle CSV")
    cat.add_argument("--masks-csv", type=Path, required=True, help="Circle CSV")
    cat.add_argument("--out", type=Path, required=True, help="Output CSV")
    cat.add_argument(
        "--thresholds",
        default=Config.SIZE_THRESHOLDS,
        help=f"Size cut points (default: {Config.SIZE_THRESHOLDS})"
    )
    add_common_arguments(cat)
    return parser


def run(args: argparse.Namespace) -> int:
    """Execute a parsed mask/categorize command."""
    if args.verbose:
        logger.setLevel("DEBUG")
    thresholds = SizeThresholds.parse(args.thresholds)

    if args.command == "categorize":
        rows = read_csv_rows(args.masks_csv, required=MASK_CSV_COLUMNS)
        binned = recategorize_rows(rows, thresholds)
        extra = [c for c in (rows[0] if rows else {}) if c not in MASK_CSV_COLUMNS]
        columns = MASK_CSV_COLUMNS + extra
        write_csv_rows(args.out, columns, binned, overwrite=args.overwrite)
        logger.info(f"Re-categorized {len(binned)} rows into {args.out}")
        return 0

    if not args.images_dir.is_dir():
        raise DataError(f"Images directory not found: {args.images_dir}")
    images = get_all_files(args.images_dir, extensions=IMAGE_EXTENSIONS)
    detector = DcaMaskDetector(dark_threshold=args.dark_threshold, thresholds=thresholds)
    summary = detector.batch(images, args.out_dir, workers=args.workers, overwrite=args.overwrite)
    print(f"Masks: {summary['detected']} detected, {summary['failed']} failed")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    """CLI for DCA masking."""
    return run(build_parser().parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
