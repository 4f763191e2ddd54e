"""Heatmap region quantification.

Splits each network-focus heatmap into the lesion side (inside the lens
circle) and the DCA side using the image's mask, measures RMS contrast
and mean brightness on both sides and aggregates them per
model / test set / DCA size group.
"""

import argparse
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import Config
from .dca_mask import DcaMask, read_mask
from .exceptions import BatchError, DataError, EmptyRegionError, ShapeError
from .image_core import (
    ImageBuffer,
    PixelRegion,
    ensure_grayscale,
    read_image,
    region_brightness,
    region_rms,
)
from .logger import setup_logger
from .utils import (
    ForgeArgumentParser,
    add_common_arguments,
    read_csv_rows,
    write_csv_rows,
    write_errors,
)

logger = setup_logger("HeatmapQuant", level=Config.LOG_LEVEL)

STATS_COLUMNS = [
    "image_id", "model", "test_set", "dca_size",
    "internal_rms", "external_rms", "rms_diff",
    "internal_brightness", "external_brightness", "brightness_diff",
]
AGGREGATE_COLUMNS = [
    "model", "test_set", "dca_size", "n",
    "rms_internal_mean", "rms_internal_std",
    "rms_external_mean", "rms_external_std",
    "rms_diff_mean",
    "brightness_internal_mean", "brightness_internal_std",
    "brightness_external_mean", "brightness_external_std",
    "brightness_diff_mean",
]
STAT_FIELDS = (
    "internal_rms", "external_rms", "rms_diff",
    "internal_brightness", "external_brightness", "brightness_diff",
)
POOLED_SIZE = "all"
DIFF_FIELDS = {
    "rms_diff": ("internal_rms", "external_rms"),
    "brightness_diff": ("internal_brightness", "external_brightness"),
}

MaskLike = Union[DcaMask, ImageBuffer]


@dataclass(frozen=True)
class RegionStatsRow:
    """Per-heatmap statistics; external values are None when there is no DCA."""

    image_id: str
    internal_rms: float
    internal_brightness: float
    external_rms: Optional[float]
    external_brightness: Optional[float]

    @property
    def has_external(self) -> bool:
        return self.external_rms is not None

    @property
    def rms_diff(self) -> Optional[float]:
        if self.external_rms is None:
            return None
        return self.internal_rms - self.external_rms

    @property
    def brightness_diff(self) -> Optional[float]:
        if self.external_brightness is None:
            return None
        return self.internal_brightness - self.external_brightness

    def values(self) -> Dict[str, Optional[float]]:
        return {name: getattr(self, name) for name in STAT_FIELDS}


@dataclass(frozen=True)
class GroupKey:
    """Aggregation key."""

    model: str
    test_set: str
    dca_size: str


@dataclass
class GroupAggregate:
    """Population mean/std of the six statistics over one group."""

    key: GroupKey
    n: int
    means: Dict[str, float] = field(default_factory=dict)
    stds: Dict[str, float] = field(default_factory=dict)

    def to_row(self) -> Dict[str, object]:
        return {
            "model": self.key.model,
            "test_set": self.key.test_set,
            "dca_size": self.key.dca_size,
            "n": self.n,
            "rms_internal_mean": self.means["internal_rms"],
            "rms_internal_std": self.stds["internal_rms"],
            "rms_external_mean": self.means["external_rms"],
            "rms_external_std": self.stds["external_rms"],
            "rms_diff_mean": self.means["rms_diff"],
            "brightness_internal_mean": self.means["internal_brightness"],
            "brightness_internal_std": self.stds["internal_brightness"],
            "brightness_external_mean": self.means["external_brightness"],
            "brightness_external_std": self.stds["external_brightness"],
            "brightness_diff_mean": self.means["brightness_diff"],
        }


def _mask_raster(mask: MaskLike) -> ImageBuffer:
    return mask.raster if isinstance(mask, DcaMask) else mask


def split_regions(mask: MaskLike) -> Tuple[PixelRegion, PixelRegion]:
    """Internal (raster 255) and external (raster 0) regions."""
    lens = _mask_raster(mask).data == 255
    return PixelRegion(lens), PixelRegion(~lens)


def quantify_heatmap(
    heatmap: ImageBuffer,
    mask: MaskLike,
    image_id: str = "",
    normalized: bool = False
) -> RegionStatsRow:
    """Region statistics of one heatmap.

    Color heatmaps are reduced to luma first.

    Args:
        heatmap: Heatmap image
        mask: DcaMask or a mask raster of the same size
        image_id: Identifier carried into the row
        normalized: Compute RMS on the [0, 1] scale

    Returns:
        RegionStatsRow

    Raises:
        ShapeError: If dimensions differ
        EmptyRegionError: If the lens region is empty
    """
    gray = ensure_grayscale(heatmap)
    raster = _mask_raster(mask)
    if gray.shape != raster.shape:
        raise ShapeError(f"Heatmap {gray.shape} and mask {raster.shape} differ")
    internal, external = split_regions(raster)
    if internal.is_empty:
        raise EmptyRegionError(f"Mask for {image_id or 'heatmap'} has no lens region")
    ext_rms: Optional[float] = None
    ext_brightness: Optional[float] = None
    if not external.is_empty:
        ext_rms = region_rms(gray, external, normalized)
        ext_brightness = region_brightness(gray, external)
    return RegionStatsRow(
        image_id=image_id,
        internal_rms=region_rms(gray, internal, normalized),
        internal_brightness=region_brightness(gray, internal),
        external_rms=ext_rms,
        external_brightness=ext_brightness,
    )


def _population_stats(values: np.ndarray) -> Tuple[float, float]:
    mean = float(values.sum() / values.size)
    return mean, float(math.sqrt(((values - mean) ** 2).sum() / values.size))


def aggregate_groups(
    labelled: Iterable[Tuple[GroupKey, RegionStatsRow]],
    pooled: bool = False
) -> List[GroupAggregate]:
    """Mean and population std per group.

    Rows without an external region are left out so that the mean of the
    differences equals the difference of the means. Groups are returned
    sorted by key, making the result independent of row order.

    Args:
        labelled: (group key, row) pairs
        pooled: Also emit an "all" DCA-size group per model and test set

    Raises:
        BatchError: If no row can be aggregated
    """
    groups: Dict[GroupKey, List[RegionStatsRow]] = {}
    skipped = 0
    for key, row in labelled:
        if not row.has_external:
            skipped += 1
            continue
        groups.setdefault(key, []).append(row)
        if pooled:
            groups.setdefault(GroupKey(key.model, key.test_set, POOLED_SIZE), []).append(row)
    if skipped:
        logger.info(f"Left {skipped} rows without a DCA region out of aggregation")
    if not groups:
        raise BatchError("No rows to aggregate")

    aggregates: List[GroupAggregate] = []
    for key in sorted(groups, key=lambda k: (k.model, k.test_set, k.dca_size)):
        rows = sorted(groups[key], key=lambda r: r.image_id)
        aggregate = GroupAggregate(key=key, n=len(rows))
        for name in STAT_FIELDS:
            values = np.array([getattr(r, name) for r in rows], dtype=np.float64)
            aggregate.means[name], aggregate.stds[name] = _population_stats(values)
        # equal to the mean of per-row diffs up to rounding; kept exact
        for diff, (inner, outer) in DIFF_FIELDS.items():
            aggregate.means[diff] = aggregate.means[inner] - aggregate.means[outer]
        aggregates.append(aggregate)
    return aggregates


def stats_row(key: GroupKey, row: RegionStatsRow) -> Dict[str, object]:
    """Flatten for stats.csv."""
    return {
        "image_id": row.image_id,
        "model": key.model,
        "test_set": key.test_set,
        "dca_size": key.dca_size,
        **row.values(),
    }


class HeatmapQuantifier:
    """Quantify a labelled directory of heatmaps against their DCA masks."""

    LABEL_COLUMNS = ["image_id", "model", "test_set", "dca_size"]

    def __init__(self, normalized: bool = False, overwrite: bool = False):
        """Initialize quantifier.

        Args:
            normalized: RMS on the [0, 1] scale
            overwrite: Replace existing outputs
        """
        self.normalized = normalized
        self.overwrite = overwrite

    def quantify_labels(
        self,
        labels: Sequence[Dict[str, str]],
        heatmaps_dir: Path,
        masks_dir: Path
    ) -> Tuple[List[Tuple[GroupKey, RegionStatsRow]], List[Dict[str, str]]]:
        """Compute one row per label entry.

        The heatmap file defaults to ``<image_id>.png`` unless the label
        row has a ``heatmap`` column; the mask is ``masks_dir/<image_id>.png``.
        """
        results: List[Tuple[GroupKey, RegionStatsRow]] = []
        errors: List[Dict[str, str]] = []
        masks: Dict[str, ImageBuffer] = {}
        for label in labels:
            image_id = label["image_id"]
            key = GroupKey(label["model"], label["test_set"], label["dca_size"])
            heatmap_path = Path(heatmaps_dir) / (label.get("heatmap") or f"{image_id}.png")
            mask_path = Path(masks_dir) / f"{image_id}.png"
            try:
                if image_id not in masks:
                    masks[image_id] = read_mask(mask_path)
                row = quantify_heatmap(
                    read_image(heatmap_path), masks[image_id], image_id, self.normalized
                )
            except (DataError, ShapeError, EmptyRegionError) as e:
                logger.warning(f"Skipping {image_id}: {e}")
                errors.append({"image_id": image_id, "error": str(e)})
                continue
            results.append((key, row))
        return results, errors

    def run(
        self,
        labels_csv: Path,
        heatmaps_dir: Path,
        masks_dir: Path,
        out: Path,
        aggregate_out: Optional[Path] = None,
        pooled: bool = False
    ) -> Dict[str, object]:
        """Write stats.csv and the aggregate CSV.

        Raises:
            BatchError: If no heatmap could be quantified
        """
        for directory in (heatmaps_dir, masks_dir):
            if not Path(directory).is_dir():
                raise DataError(f"Directory not found: {directory}")
        labels = read_csv_rows(labels_csv, required=self.LABEL_COLUMNS)
        results, errors = self.quantify_labels(labels, heatmaps_dir, masks_dir)
        out = Path(out)
        write_errors(out.parent, errors, overwrite=self.overwrite)
        if not results:
            raise BatchError(f"No heatmap quantified ({len(errors)} failures)")

        write_csv_rows(
            out, STATS_COLUMNS, [stats_row(k, r) for k, r in results], overwrite=self.overwrite
        )
        aggregate_out = aggregate_out or out.with_name(f"{out.stem}_aggregate.csv")
        aggregates = aggregate_groups(results, pooled=pooled)
        write_csv_rows(
            aggregate_out,
            AGGREGATE_COLUMNS,
            [a.to_row() for a in aggregates],
            overwrite=self.overwrite,
        )
        logger.info(f"Quantified {len(results)} heatmaps into {len(aggregates)} groups")
        return {
            "rows": len(results),
            "groups": len(aggregates),
            "failed": len(errors),
            "aggregate": str(aggregate_out),
        }


def build_parser(prog: Optional[str] = None) -> argparse.ArgumentParser:
    """Argument parser for the heatmap-stats subcommand."""
    parser = ForgeArgumentParser(
        prog=prog,
        description="RMS contrast and brightness of heatmaps inside and outside the lens",
        epilog="Examples:\n"
               "  %(prog)s --heatmaps-dir cams/ --masks-dir masks/ --labels labels.csv "
               "--out stats.csv\n"
               "  %(prog)s --heatmaps-dir cams/ --masks-dir masks/ --labels labels.csv "
               "--out stats.csv --pooled --normalized\n",
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument("--heatmaps-dir", type=Path, required=True, help="Heatmap images")
    parser.add_argument("--masks-dir", type=Path, required=True, help="Mask PNGs")
    parser.add_argument(
        "--labels",
        type=Path,
        required=True,
        help="CSV with image_id, model, test_set, dca_size [, heatmap]"
    )
    parser.add_argument("--out", type=Path, required=True, help="Per-heatmap stats CSV")
    parser.add_argument(
        "--aggregate-out",
        type=Path,
        help="Group aggregate CSV (default: <out>_aggregate.csv)"
    )
    parser.add_argument(
        "--pooled",
        action="store_true",
        help="Add an 'all' DCA-size group per model and test set"
    )
    parser.add_argument(
        "--normalized",
        action="store_true",
        help="RMS contrast on the [0, 1] intensity scale"
    )
    add_common_arguments(parser)
    return parser


def run(args: argparse.Namespace) -> int:
    """Execute a parsed heatmap-stats command."""
    if args.verbose:
        logger.setLevel("DEBUG")
    quantifier = HeatmapQuantifier(normalized=args.normalized, overwrite=args.overwrite)
    summary = quantifier.run(
        args.labels,
        args.heatmaps_dir,
        args.masks_dir,
        args.out,
        aggregate_out=args.aggregate_out,
        pooled=args.pooled,
    )
    print(f"Quantified {summary['rows']} heatmaps into {summary['groups']} groups")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    """CLI for heatmap quantification."""
    return run(build_parser().parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
