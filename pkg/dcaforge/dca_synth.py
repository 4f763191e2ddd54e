"""Synthetic dark corner artifact superimposition.

Features:
- Binary DCA: hard-edged black outside the lens circle
- Realistic DCA: blurred transition band composited around a reduced circle
- Seeded circle sampler that targets a DCA size band
- Reproducible batch driver writing images, masks and an augmented manifest
"""

import argparse
import math
import sys
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import Config
from .dca_mask import (
    Circle,
    DcaSizeCategory,
    SizeThresholds,
    categorize,
    dca_fraction,
    render_mask,
)
from .exceptions import BatchError, DataError, ParameterError
from .image_core import ImageBuffer, gaussian_blur, read_image, write_image
from .logger import setup_logger
from .utils import (
    ForgeArgumentParser,
    add_common_arguments,
    map_rows,
    read_csv_rows,
    write_csv_rows,
    write_errors,
)

logger = setup_logger("DcaSynth", level=Config.LOG_LEVEL)

SYNTH_COLUMNS = ["cx", "cy", "radius", "sigma", "radius_reduction", "area_fraction", "category"]


class SynthMode(Enum):
    """DCA rendering modes."""
    BINARY = "binary"
    REALISTIC = "realistic"


@dataclass(frozen=True)
class RealisticDcaParams:
    """Blur width and inner-circle shrink of a realistic DCA."""

    sigma: float
    radius_reduction: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.sigma > 0 or not math.isfinite(self.sigma):
            raise ParameterError(f"sigma must be positive, got {self.sigma}")
        if self.radius_reduction is None:
            object.__setattr__(self, "radius_reduction", float(math.ceil(3.0 * self.sigma)))
        elif not self.radius_reduction > 0:
            raise ParameterError(
                f"radius_reduction must be positive, got {self.radius_reduction}"
            )

    @classmethod
    def for_circle(
        cls,
        circle: Circle,
        sigma: Optional[float] = None,
        radius_reduction: Optional[float] = None
    ) -> "RealisticDcaParams":
        """Defaults scaled to the circle: sigma = radius/20 clamped to [2, 15]."""
        if sigma is None:
            sigma = min(max(circle.radius / 20.0, 2.0), 15.0)
        return cls(sigma=sigma, radius_reduction=radius_reduction)

    @property
    def reduction(self) -> float:
        assert self.radius_reduction is not None
        return self.radius_reduction


def superimpose_binary(img: ImageBuffer, circle: Circle) -> ImageBuffer:
    """Black out every pixel outside the closed lens disk."""
    inside = circle.membership(img.width, img.height)
    data = img.copy_data()
    data[~inside] = 0
    return ImageBuffer(data)


def superimpose_realistic(
    img: ImageBuffer,
    circle: Circle,
    params: Optional[RealisticDcaParams] = None
) -> ImageBuffer:
    """Realistic DCA with a Gaussian transition band.

    The binary DCA image is blurred; pixels inside the circle shrunk by
    ``radius_reduction`` keep the original content, all others take the
    blurred value.

    Args:
        img: Clean input image
        circle: Lens circle
        params: Blur parameters (default: scaled to the circle)

    Returns:
        Image with realistic DCA

    Raises:
        ParameterError: If the reduced radius is below 1 px
    """
    params = params or RealisticDcaParams.for_circle(circle)
    reduced_radius = circle.radius - params.reduction
    if reduced_radius < 1.0:
        raise ParameterError(
            f"Reduced radius {reduced_radius:.2f} < 1 px "
            f"(radius {circle.radius}, reduction {params.reduction})"
        )
    blurred = gaussian_blur(superimpose_binary(img, circle), params.sigma)
    inner = circle.shrink(params.reduction).membership(img.width, img.height)
    if img.channels == 3:
        inner = inner[:, :, np.newaxis]
    return ImageBuffer(np.where(inner, img.data, blurred.data).astype(np.uint8))


class CircleSampler:
    """Draw lens circles whose rendered DCA falls in a size band.

    Centers are uniform over the middle third of the frame. For a given
    center the DCA fraction decreases monotonically with the radius, so
    the feasible radius interval is found by bisection and the radius is
    drawn uniformly inside it, then verified on the rendered mask.
    """

    def __init__(
        self,
        thresholds: Optional[SizeThresholds] = None,
        min_radius_fraction: float = 0.15,
        max_attempts: int = 50
    ):
        """Initialize sampler.

        Args:
            thresholds: Size band cut points
            min_radius_fraction: Smallest radius as a share of min(width, height)
            max_attempts: Center draws before giving up
        """
        self.thresholds = thresholds or SizeThresholds.from_config()
        self.min_radius_fraction = min_radius_fraction
        self.max_attempts = max_attempts

    @staticmethod
    def _radius_for(
        cx: float, cy: float, width: int, height: int,
        target: float, lo: float, hi: float, iterations: int = 40
    ) -> float:
        # smallest radius whose DCA fraction is below target
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            if dca_fraction(Circle(cx, cy, mid), width, height) < target:
                hi = mid
            else:
                lo = mid
        return hi

    def sample(
        self,
        width: int,
        height: int,
        band: DcaSizeCategory,
        rng: np.random.Generator
    ) -> Circle:
        """Sample one circle for the band.

        Raises:
            ParameterError: If no feasible circle is found
        """
        lo_frac, hi_frac = self.thresholds.band(band)
        r_min = max(2.0, self.min_radius_fraction * min(width, height))
        r_max = math.hypot(width, height)

        for _ in range(self.max_attempts):
            cx = float(rng.uniform(width / 3.0, 2.0 * width / 3.0))
            cy = float(rng.uniform(height / 3.0, 2.0 * height / 3.0))
            # fraction(r) is non-increasing; band is [lo_frac, hi_frac)
            r_low = self._radius_for(cx, cy, width, height, hi_frac, r_min, r_max)
            r_high = (
                r_max if lo_frac <= 0.0
                else self._radius_for(cx, cy, width, height, lo_frac, r_min, r_max)
            )
            r_low = max(r_low, r_min)
            if r_high <= r_low:
                continue
            radius = float(rng.uniform(r_low, r_high))
            circle = Circle(cx, cy, radius)
            if categorize(dca_fraction(circle, width, height), self.thresholds) is band:
                return circle
        raise ParameterError(
            f"No circle in band {band.value} for a {width}x{height} image "
            f"after {self.max_attempts} attempts"
        )


@dataclass(frozen=True)
class SynthJob:
    """One batch row, self-contained so it can cross a process boundary."""

    row: Dict[str, str]
    seed_sequence: np.random.SeedSequence
    mode: SynthMode
    band: DcaSizeCategory
    thresholds: SizeThresholds
    sigma: Optional[float]
    radius_reduction: Optional[float]


SynthOutput = Tuple[ImageBuffer, ImageBuffer, Dict[str, object]]


def _synth_job(job: SynthJob) -> Tuple[Optional[SynthOutput], str]:
    image_id = job.row.get("image_id", "")
    try:
        img = read_image(Path(job.row["path"]))
        rng = np.random.default_rng(job.seed_sequence)
        circle = CircleSampler(job.thresholds).sample(img.width, img.height, job.band, rng)
        mask = render_mask(circle, img.width, img.height)
        if job.mode is SynthMode.BINARY:
            out = superimpose_binary(img, circle)
            sigma: object = None
            reduction: object = None
        else:
            params = RealisticDcaParams.for_circle(circle, job.sigma, job.radius_reduction)
            out = superimpose_realistic(img, circle, params)
            sigma, reduction = params.sigma, params.reduction
        record = {
            "cx": circle.cx,
            "cy": circle.cy,
            "radius": circle.radius,
            "sigma": sigma,
            "radius_reduction": reduction,
            "area_fraction": mask.area_fraction,
            "category": categorize(mask, job.thresholds).value,
        }
        return (out, mask.raster, record), ""
    except (DataError, ParameterError, KeyError) as e:
        logger.debug(f"Row {image_id} failed: {e}")
        return None, str(e)


class DcaSynthesizer:
    """Superimpose synthetic DCA onto every image of a manifest."""

    def __init__(
        self,
        mode: SynthMode = SynthMode.REALISTIC,
        band: DcaSizeCategory = DcaSizeCategory.MEDIUM,
        seed: int = 0,
        sigma: Optional[float] = None,
        radius_reduction: Optional[float] = None,
        thresholds: Optional[SizeThresholds] = None,
        workers: int = 1,
        overwrite: bool = False
    ):
        """Initialize synthesizer.

        Args:
            mode: Binary or realistic DCA
            band: Target DCA size band
            seed: Root seed; each row gets its own spawned stream
            sigma: Fixed blur sigma (default: radius/20 clamped to [2, 15])
            radius_reduction: Fixed shrink (default: ceil(3 sigma))
            thresholds: Size band cut points
            workers: Worker processes
            overwrite: Replace existing outputs
        """
        if sigma is not None and not sigma > 0:
            raise ParameterError(f"sigma must be positive, got {sigma}")
        self.mode = mode
        self.band = band
        self.seed = seed
        self.sigma = sigma
        self.radius_reduction = radius_reduction
        self.thresholds = thresholds or SizeThresholds.from_config()
        self.workers = workers
        self.overwrite = overwrite

    def batch(self, rows: Sequence[Dict[str, str]], out_dir: Path) -> Dict[str, object]:
        """Process manifest rows.

        Writes ``<image_id>.png`` images, ``masks/<image_id>.png`` and
        ``manifest.csv`` (input columns plus circle columns) under out_dir.

        Returns:
            Summary with counts and the manifest path

        Raises:
            BatchError: Empty manifest or no successful row
        """
        if not rows:
            raise BatchError("Empty manifest: nothing to superimpose")
        out_dir = Path(out_dir)
        streams = np.random.SeedSequence(self.seed).spawn(len(rows))
        jobs = [
            SynthJob(
                row=dict(row),
                seed_sequence=stream,
                mode=self.mode,
                band=self.band,
                thresholds=self.thresholds,
                sigma=self.sigma,
                radius_reduction=self.radius_reduction,
            )
            for row, stream in zip(rows, streams)
        ]
        results = map_rows(_synth_job, jobs, workers=self.workers)

        written: List[Dict[str, object]] = []
        errors: List[Dict[str, str]] = []
        for row, (result, error) in zip(rows, results):
            image_id = row.get("image_id") or Path(row.get("path", "")).stem
            if result is None:
                logger.warning(f"Skipping {image_id}: {error}")
                errors.append({"image_id": image_id, "error": error})
                continue
            image, mask, record = result
            image_path = write_image(image, out_dir / f"{image_id}.png", overwrite=self.overwrite)
            write_image(mask, out_dir / "masks" / f"{image_id}.png", overwrite=self.overwrite)
            written.append({**row, "image_id": image_id, "path": str(image_path), **record})

        write_errors(out_dir, errors, overwrite=self.overwrite)
        if not written:
            raise BatchError(f"No row succeeded ({len(errors)} failures)")

        input_columns = [c for c in rows[0].keys() if c not in SYNTH_COLUMNS]
        for column in ("image_id", "path"):
            if column not in input_columns:
                input_columns.insert(0, column)
        manifest = out_dir / "manifest.csv"
        write_csv_rows(manifest, input_columns + SYNTH_COLUMNS, written, overwrite=self.overwrite)
        logger.info(
            f"Superimposed {self.mode.value} DCA ({self.band.value}) on {len(written)} images, "
            f"{len(errors)} failures"
        )
        return {"written": len(written), "failed": len(errors), "manifest": str(manifest)}


def batch_superimpose(
    rows: Sequence[Dict[str, str]],
    out_dir: Path,
    mode: SynthMode = SynthMode.REALISTIC,
    seed: int = 0,
    **params: object
) -> Dict[str, object]:
    """Superimpose DCAs on manifest rows with a synthesizer built from params."""
    synthesizer = DcaSynthesizer(mode=mode, seed=seed, **params)  # type: ignore[arg-type]
    return synthesizer.batch(rows, out_dir)


def build_parser(prog: Optional[str] = None) -> argparse.ArgumentParser:
    """Argument parser for the synth subcommand."""
    parser = ForgeArgumentParser(
        prog=prog,
        description="Superimpose synthetic dark corner artifacts",
        epilog="Examples:\n"
               "  %(prog)s --mode binary --manifest train.csv --out-dir synth/ "
               "--band large --seed 7\n"
               "  %(prog)s --mode realistic --manifest train.csv --out-dir synth/ "
               "--band medium --seed 7 --sigma 4\n",
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument(
        "--mode",
        choices=[m.value for m in SynthMode],
        required=True,
        help="DCA rendering mode"
    )
    parser.add_argument("--manifest", type=Path, required=True, help="Input manifest CSV")
    parser.add_argument("--out-dir", type=Path, required=True, help="Output directory")
    parser.add_argument(
        "--band",
        choices=[c.value for c in DcaSizeCategory],
        default=DcaSizeCategory.MEDIUM.value,
        help="Target DCA size band (default: medium)"
    )
    parser.add_argument("--seed", type=int, required=True, help="Circle sampler seed")
    parser.add_argument("--sigma", type=float, help="Blur sigma (realistic mode)")
    parser.add_argument(
        "--radius-reduction",
        type=float,
        help="Inner circle shrink in px (default: ceil(3 sigma))"
    )
    parser.add_argument(
        "--thresholds",
        default=Config.SIZE_THRESHOLDS,
        help=f"Size cut points (default: {Config.SIZE_THRESHOLDS})"
    )
    parser.add_argument(
        "--workers",
        type=int,
        default=Config.WORKERS,
        help="Worker processes (default: logical CPUs)"
    )
    add_common_arguments(parser)
    return parser


def run(args: argparse.Namespace) -> int:
    """Execute a parsed synth command."""
    if args.verbose:
        logger.setLevel("DEBUG")
    rows = read_csv_rows(args.manifest, required=["path"])
    synthesizer = DcaSynthesizer(
        mode=SynthMode(args.mode),
        band=DcaSizeCategory(args.band),
        seed=args.seed,
        sigma=args.sigma,
        radius_reduction=args.radius_reduction,
        thresholds=SizeThresholds.parse(args.thresholds),
        workers=args.workers,
        overwrite=args.overwrite,
    )
    summary = synthesizer.batch(rows, args.out_dir)
    print(f"Synthesized {summary['written']} images, {summary['failed']} failed")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    """CLI for DCA synthesis."""
    return run(build_parser().parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
