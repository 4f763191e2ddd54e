"""Contrast probe for light leakage inside dark corners.

Lays out the original image, a contrast-enhanced copy and optionally the
network heatmap side by side, with the heatmap's brightest and darkest
pixels circled.
"""

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np
from PIL import Image, ImageDraw

from .config import Config
from .exceptions import ShapeError
from .image_core import (
    ImageBuffer,
    ExtremaReport,
    encode_image,
    enhance_contrast,
    ensure_grayscale,
    locate_extrema,
    read_image,
)
from .logger import setup_logger
from .utils import ForgeArgumentParser, add_common_arguments, exclusive_write

logger = setup_logger("ContrastProbe", level=Config.LOG_LEVEL)

SEPARATOR_WIDTH = 8
SEPARATOR_COLOR = (255, 255, 255)
BRIGHTEST_COLOR = (0, 0, 255)
DARKEST_COLOR = (255, 0, 0)


@dataclass(frozen=True)
class ProbeResult:
    """Rendered panel strip and the heatmap extrema it marks."""

    image: ImageBuffer
    panels: int
    extrema: Optional[ExtremaReport] = None


def _rgb(img: ImageBuffer) -> Image.Image:
    return Image.fromarray(np.ascontiguousarray(img.data)).convert("RGB")


def marker_radius(width: int, height: int) -> int:
    return max(3, min(width, height) // 20)


def _circle(draw: ImageDraw.ImageDraw, x: int, y: int, r: int, color) -> None:
    draw.ellipse([x - r, y - r, x + r, y + r], outline=color, width=2)


def contrast_probe(
    image: ImageBuffer,
    factor: float = Config.CONTRAST_FACTOR,
    heatmap: Optional[ImageBuffer] = None,
    separator: int = SEPARATOR_WIDTH
) -> ProbeResult:
    """Render original | enhanced | (heatmap) as one RGB strip.

    Args:
        image: Input image, gray or RGB
        factor: Contrast factor, must be positive
        heatmap: Optional heatmap of the same size
        separator: Gap between panels in pixels

    Returns:
        ProbeResult of width k*W + (k-1)*separator

    Raises:
        ParameterError: If factor is not positive
        ShapeError: If the heatmap size differs from the image
    """
    panels = [_rgb(image), _rgb(enhance_contrast(image, factor))]
    extrema = None
    if heatmap is not None:
        if heatmap.shape != image.shape:
            raise ShapeError(
                f"Heatmap {heatmap.width}x{heatmap.height} does not match "
                f"image {image.width}x{image.height}"
            )
        gray = ensure_grayscale(heatmap)
        extrema = locate_extrema(gray)
        panel = _rgb(heatmap)
        draw = ImageDraw.Draw(panel)
        r = marker_radius(image.width, image.height)
        _circle(draw, *extrema.brightest, r, BRIGHTEST_COLOR)
        _circle(draw, *extrema.darkest, r, DARKEST_COLOR)
        panels.append(panel)

    separator = max(0, int(separator))
    width = len(panels) * image.width + (len(panels) - 1) * separator
    strip = Image.new("RGB", (width, image.height), SEPARATOR_COLOR)
    for i, panel in enumerate(panels):
        strip.paste(panel, (i * (image.width + separator), 0))
    logger.debug(f"Probe strip {width}x{image.height} with {len(panels)} panels")
    return ProbeResult(ImageBuffer(np.asarray(strip, dtype=np.uint8)), len(panels), extrema)


def build_parser(prog: Optional[str] = None) -> argparse.ArgumentParser:
    """Argument parser for the contrast-probe subcommand."""
    parser = ForgeArgumentParser(
        prog=prog,
        description="Expose light leakage by contrast enhancement",
        epilog="Examples:\n"
               "  %(prog)s --image ISIC_0001.jpg --out probe.png\n"
               "  %(prog)s --image ISIC_0001.jpg --factor 3 --heatmap cam.png --out probe.png\n",
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument("--image", type=Path, required=True, help="Input image")
    parser.add_argument(
        "--factor",
        type=float,
        default=Config.CONTRAST_FACTOR,
        help=f"Contrast factor (default: {Config.CONTRAST_FACTOR})"
    )
    parser.add_argument("--heatmap", type=Path, help="Heatmap to show with extrema marked")
    parser.add_argument("--out", type=Path, required=True, help="Output PNG")
    add_common_arguments(parser)
    return parser


def run(args: argparse.Namespace) -> int:
    """Execute a parsed contrast-probe command."""
    if args.verbose:
        logger.setLevel("DEBUG")
    heatmap = read_image(args.heatmap) if args.heatmap else None
    result = contrast_probe(read_image(args.image), args.factor, heatmap)
    exclusive_write(args.out, encode_image(result.image, "PNG"), overwrite=args.overwrite)
    if result.extrema is not None:
        e = result.extrema
        print(f"brightest {e.brightest[0]},{e.brightest[1]} value {e.brightest_value}")
        print(f"darkest {e.darkest[0]},{e.darkest[1]} value {e.darkest_value}")
    print(f"Wrote {args.out}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    """CLI for the contrast probe."""
    return run(build_parser().parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
