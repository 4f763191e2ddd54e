"""DCA-split dataset manifests and classification metrics.

Features:
- Balanced manifest builder: seeded 90/10 holdout of clean images per
  class, DCA images assigned to per-size test slices
- Manifest summary in the usual class x split table layout
- Confusion counts, Acc/TPR/TNR/Precision/F1 and ROC AUC from prediction CSVs
- Experiment reports (slice x variant x model), pooled "all" slices,
  best-approach comparison and per-size metric pivots
"""

import argparse
import math
import sys
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.metrics import auc, confusion_matrix, roc_curve

from .config import Config
from .dca_mask import MASK_CSV_COLUMNS, SOURCE_IMAGE_COLUMN, DcaSizeCategory
from .exceptions import DataError, ParameterError
from .logger import setup_logger
from .utils import (
    IMAGE_EXTENSIONS,
    ForgeArgumentParser,
    add_common_arguments,
    get_all_files,
    parse_optional_float,
    read_csv_rows,
    write_csv_rows,
)

logger = setup_logger("EvalDataset", level=Config.LOG_LEVEL)

MANIFEST_COLUMNS = ["image_id", "path", "label", "split", "dca_category", "source"]
PREDICTION_COLUMNS = ["image_id", "true_label", "score"]
METRIC_NAMES = ["acc", "tpr", "tnr", "precision", "f1", "auc"]
REPORT_COLUMNS = ["slice", "variant", "model"] + METRIC_NAMES
EXPERIMENT_COLUMNS = ["slice", "variant", "model", "preds"]
POOLED_SLICE = "all"
NO_DCA = "none"
MIN_CLEAN_PER_CLASS = 10

INPAINTED_VARIANTS = ("ns", "telea")
SUPERIMPOSED_MODELS = ("binary", "realistic")


class Label(Enum):
    """Class labels; melanoma is the positive class."""
    MELANOMA = "melanoma"
    NON_MELANOMA = "non_melanoma"


class Split(Enum):
    """Manifest splits."""
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


def _category_values() -> List[str]:
    return [NO_DCA] + [c.value for c in DcaSizeCategory]


@dataclass(frozen=True)
class ManifestRow:
    """One image of the DCA-split balanced dataset."""

    image_id: str
    path: str
    label: Label
    split: Split
    dca_category: str
    source: str

    def __post_init__(self) -> None:
        if self.dca_category not in _category_values():
            raise DataError(f"Unknown DCA category {self.dca_category!r} for {self.image_id}")
        clean = self.dca_category == NO_DCA
        if self.split in (Split.TRAIN, Split.VAL) and not clean:
            raise DataError(f"{self.image_id}: train/val images must be DCA-free")
        if self.split is Split.TEST and clean:
            raise DataError(f"{self.image_id}: test images must carry a DCA category")

    def to_dict(self) -> Dict[str, str]:
        return {
            "image_id": self.image_id,
            "path": self.path,
            "label": self.label.value,
            "split": self.split.value,
            "dca_category": self.dca_category,
            "source": self.source,
        }


@dataclass(frozen=True)
class PredictionRecord:
    """Model output for one test image."""

    image_id: str
    true_label: Label
    score: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0 or math.isnan(self.score):
            raise DataError(f"Score for {self.image_id} outside [0, 1]: {self.score}")

    @property
    def positive(self) -> bool:
        return self.true_label is Label.MELANOMA


@dataclass(frozen=True)
class MetricsReport:
    """Confusion counts and derived metrics; None marks not applicable."""

    tp: int
    fp: int
    tn: int
    fn: int
    acc: float
    tpr: Optional[float]
    tnr: Optional[float]
    precision: Optional[float]
    f1: Optional[float]
    auc: Optional[float]

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def metrics(self) -> Dict[str, Optional[float]]:
        return {name: getattr(self, name) for name in METRIC_NAMES}


# Manifest building

class ManifestBuilder:
    """Build the DCA-split balanced dataset manifest.

    Clean images of each class are sorted, shuffled with the seeded RNG and
    split by ``train_fraction``; the non-melanoma list is truncated to the
    melanoma count first (or the other way round when melanoma is the
    larger class). DCA images all go to the test split, keyed by the
    category recorded in their mask CSV.
    """

    def __init__(
        self,
        seed: int,
        train_fraction: float = Config.TRAIN_FRACTION,
        mask_csv_name: str = Config.MASK_CSV_NAME
    ):
        """Initialize builder.

        Args:
            seed: Shuffle seed
            train_fraction: Share of clean images per class used for training
            mask_csv_name: Circle CSV file name inside each DCA directory
        """
        if not 0.0 < train_fraction < 1.0:
            raise ParameterError(f"train_fraction must be in (0, 1), got {train_fraction}")
        self.seed = seed
        self.train_fraction = train_fraction
        self.mask_csv_name = mask_csv_name

    def _clean_files(self, directory: Path) -> List[Path]:
        if not Path(directory).is_dir():
            raise DataError(f"Clean image directory not found: {directory}")
        return get_all_files(directory, extensions=IMAGE_EXTENSIONS)

    def _dca_rows(self, label: Label, directory: Path) -> List[ManifestRow]:
        directory = Path(directory)
        csv_path = directory / self.mask_csv_name
        entries = read_csv_rows(csv_path, required=MASK_CSV_COLUMNS)
        by_stem: Dict[str, List[Path]] = {}
        for p in get_all_files(directory, extensions=IMAGE_EXTENSIONS):
            by_stem.setdefault(p.stem, []).append(p)
        rows = []
        for entry in sorted(entries, key=lambda e: e["image_id"]):
            image_id = entry["image_id"]
            recorded = (entry.get(SOURCE_IMAGE_COLUMN) or "").strip()
            if recorded:
                image_path = Path(recorded)
                if not image_path.is_absolute():
                    image_path = directory / image_path
                if not image_path.is_file():
                    raise DataError(f"{csv_path} lists {image_id} at {image_path}, not found")
            else:
                candidates = by_stem.get(image_id, [])
                if not candidates:
                    raise DataError(f"{csv_path} lists {image_id} but no image file exists")
                if len(candidates) > 1:
                    names = ", ".join(p.name for p in candidates)
                    raise DataError(
                        f"{csv_path} lists {image_id} but several files match ({names}); "
                        f"add an '{SOURCE_IMAGE_COLUMN}' column"
                    )
                image_path = candidates[0]
            rows.append(ManifestRow(
                image_id=image_id,
                path=str(image_path),
                label=label,
                split=Split.TEST,
                dca_category=entry["category"],
                source=directory.name,
            ))
        return rows

    def split_count(self, n: int) -> int:
        """Training count floor(train_fraction * n)."""
        return int(math.floor(n * self.train_fraction + 1e-9))

    def build(
        self,
        clean_dirs: Dict[Label, Path],
        dca_dirs: Optional[Dict[Label, Path]] = None
    ) -> List[ManifestRow]:
        """Assemble the manifest rows.

        Args:
            clean_dirs: Clean (DCA-free) image directory per class
            dca_dirs: DCA image directory per class, each with its mask CSV

        Returns:
            Rows ordered train, val, test and by class within each split

        Raises:
            DataError: Missing classes, no clean melanoma or fewer than 10
                clean images in a class
        """
        missing = [label.value for label in Label if label not in clean_dirs]
        if missing:
            raise DataError(f"No clean directory for: {', '.join(missing)}")
        rng = np.random.default_rng(self.seed)

        files = {label: self._clean_files(clean_dirs[label]) for label in Label}
        if not files[Label.MELANOMA]:
            raise DataError(f"No clean melanoma images in {clean_dirs[Label.MELANOMA]}")
        for label, found in files.items():
            if len(found) < MIN_CLEAN_PER_CLASS:
                raise DataError(
                    f"{label.value} has {len(found)} clean images, "
                    f"at least {MIN_CLEAN_PER_CLASS} required"
                )

        shuffled = {}
        for label in Label:
            order = rng.permutation(len(files[label]))
            shuffled[label] = [files[label][i] for i in order]
        balanced = min(len(v) for v in shuffled.values())
        for label in Label:
            dropped = len(shuffled[label]) - balanced
            if dropped:
                logger.info(f"Dropping {dropped} {label.value} images to balance classes")
            shuffled[label] = shuffled[label][:balanced]

        n_train = self.split_count(balanced)
        train: List[ManifestRow] = []
        val: List[ManifestRow] = []
        for label in Label:
            for i, path in enumerate(shuffled[label]):
                row = ManifestRow(
                    image_id=path.stem,
                    path=str(path),
                    label=label,
                    split=Split.TRAIN if i < n_train else Split.VAL,
                    dca_category=NO_DCA,
                    source=Path(clean_dirs[label]).name,
                )
                (train if i < n_train else val).append(row)

        test: List[ManifestRow] = []
        for label in Label:
            if dca_dirs and label in dca_dirs:
                test.extend(self._dca_rows(label, dca_dirs[label]))

        logger.info(
            f"Manifest: {len(train)} train, {len(val)} val, {len(test)} test rows"
        )
        return train + val + test


def build_manifest(
    clean_dirs: Dict[Label, Path],
    dca_dirs: Optional[Dict[Label, Path]],
    seed: int,
    train_fraction: float = Config.TRAIN_FRACTION
) -> List[ManifestRow]:
    """Functional wrapper around ManifestBuilder.build."""
    return ManifestBuilder(seed, train_fraction).build(clean_dirs, dca_dirs)


def write_manifest(rows: Sequence[ManifestRow], path: Path, overwrite: bool = False) -> int:
    return write_csv_rows(path, MANIFEST_COLUMNS, [r.to_dict() for r in rows], overwrite)


def read_manifest(path: Path) -> List[ManifestRow]:
    """Parse and validate a manifest CSV."""
    rows = []
    for entry in read_csv_rows(path, required=MANIFEST_COLUMNS):
        try:
            rows.append(ManifestRow(
                image_id=entry["image_id"],
                path=entry["path"],
                label=Label(entry["label"]),
                split=Split(entry["split"]),
                dca_category=entry["dca_category"],
                source=entry["source"],
            ))
        except ValueError as e:
            raise DataError(f"Bad manifest row in {path}: {e}")
    return rows


def summarize_manifest(rows: Iterable[ManifestRow]) -> List[Dict[str, object]]:
    """Count table: one row per class, columns train, val and each DCA size."""
    columns = ["train", "val"] + [c.value for c in DcaSizeCategory]
    table = {label: {c: 0 for c in columns} for label in Label}
    for row in rows:
        column = row.split.value if row.split is not Split.TEST else row.dca_category
        table[row.label][column] += 1
    summary = []
    for label in Label:
        counts = table[label]
        test_total = sum(counts[c.value] for c in DcaSizeCategory)
        summary.append({"label": label.value, **counts, "test_total": test_total})
    return summary


# Metrics

def read_predictions(path: Path) -> List[PredictionRecord]:
    """Parse a predictions CSV (image_id, true_label, score)."""
    records = []
    for entry in read_csv_rows(path, required=PREDICTION_COLUMNS):
        try:
            records.append(PredictionRecord(
                image_id=entry["image_id"],
                true_label=Label(entry["true_label"]),
                score=float(entry["score"]),
            ))
        except ValueError as e:
            raise DataError(f"Bad prediction row in {path}: {e}")
    return records


def _ratio(numerator: int, denominator: int) -> Optional[float]:
    return numerator / denominator if denominator > 0 else None


def compute_auc(preds: Sequence[PredictionRecord]) -> float:
    """Area under the ROC curve over the full threshold sweep.

    Tied scores form one ROC step, so tied positive/negative pairs count
    half.

    Raises:
        DataError: If only one class is present
    """
    y_true = np.array([p.positive for p in preds], dtype=int)
    if y_true.size == 0 or y_true.min() == y_true.max():
        raise DataError("AUC needs at least one positive and one negative prediction")
    scores = np.array([p.score for p in preds], dtype=np.float64)
    fpr, tpr, _ = roc_curve(y_true, scores, drop_intermediate=False)
    return float(auc(fpr, tpr))


def compute_metrics(
    preds: Sequence[PredictionRecord],
    threshold: float = Config.DECISION_THRESHOLD
) -> MetricsReport:
    """Confusion counts and derived metrics; melanoma is positive.

    A prediction is positive when score >= threshold. Ratios with a zero
    denominator are None.

    Raises:
        DataError: If preds is empty
    """
    if not preds:
        raise DataError("No predictions to evaluate")
    y_true = np.array([p.positive for p in preds], dtype=int)
    y_pred = np.array([p.score >= threshold for p in preds], dtype=int)
    tn, fp, fn, tp = (
        int(v) for v in confusion_matrix(y_true, y_pred, labels=[0, 1]).ravel()
    )
    tpr = _ratio(tp, tp + fn)
    precision = _ratio(tp, tp + fp)
    f1 = None
    if tpr is not None and precision is not None and precision + tpr > 0:
        f1 = 2.0 * precision * tpr / (precision + tpr)
    both_classes = 0 < y_true.sum() < y_true.size
    return MetricsReport(
        tp=tp, fp=fp, tn=tn, fn=fn,
        acc=(tp + tn) / float(len(preds)),
        tpr=tpr,
        tnr=_ratio(tn, tn + fp),
        precision=precision,
        f1=f1,
        auc=compute_auc(preds) if both_classes else None,
    )


# Experiment reports

@dataclass(frozen=True)
class ReportRow:
    """One slice x variant x model line of an experiment report."""

    slice: str
    variant: str
    model: str
    report: MetricsReport

    @property
    def key(self) -> Tuple[str, str, str]:
        return self.slice, self.variant, self.model

    def to_dict(self) -> Dict[str, object]:
        return {"slice": self.slice, "variant": self.variant, "model": self.model,
                **self.report.metrics()}


def experiment_report(
    entries: Iterable[Tuple[str, str, str, Sequence[PredictionRecord]]],
    threshold: float = Config.DECISION_THRESHOLD,
    pooled: bool = False
) -> List[ReportRow]:
    """Metrics per (slice, variant, model).

    Args:
        entries: (slice, variant, model, predictions) tuples
        threshold: Decision threshold
        pooled: Add an "all" slice per variant/model over every slice's predictions

    Raises:
        DataError: On duplicate keys
    """
    rows: List[ReportRow] = []
    seen = set()
    pools: Dict[Tuple[str, str], List[PredictionRecord]] = {}
    for slice_name, variant, model, preds in entries:
        key = (slice_name, variant, model)
        if key in seen:
            raise DataError(f"Duplicate experiment key: {'/'.join(key)}")
        seen.add(key)
        rows.append(ReportRow(slice_name, variant, model, compute_metrics(preds, threshold)))
        pools.setdefault((variant, model), []).extend(preds)
    if pooled:
        for (variant, model), preds in pools.items():
            if (POOLED_SLICE, variant, model) in seen:
                raise DataError(f"Slice name '{POOLED_SLICE}' is reserved for pooled rows")
            rows.append(ReportRow(POOLED_SLICE, variant, model, compute_metrics(preds, threshold)))
    return rows


def compare_approaches(
    rows: Sequence[ReportRow],
    metric: str = "tnr"
) -> List[Dict[str, object]]:
    """Best inpainted vs best superimposed configuration per slice.

    "inpainted" rows are the clean model on NS/Telea test sets;
    "superimposed" rows are binary/realistic models on the original test
    set. Rows whose metric is not applicable are ignored.
    """
    if metric not in METRIC_NAMES:
        raise ParameterError(f"Unknown metric {metric!r}; choose from {', '.join(METRIC_NAMES)}")
    approaches = {
        "inpainted": lambda r: r.model == "clean" and r.variant in INPAINTED_VARIANTS,
        "superimposed": lambda r: r.variant == "original" and r.model in SUPERIMPOSED_MODELS,
    }
    out: List[Dict[str, object]] = []
    for slice_name in sorted({r.slice for r in rows}):
        for approach, matches in approaches.items():
            candidates = [
                r for r in rows
                if r.slice == slice_name and matches(r) and getattr(r.report, metric) is not None
            ]
            if not candidates:
                continue
            best = max(candidates, key=lambda r: (getattr(r.report, metric), r.variant, r.model))
            out.append({"approach": approach, **best.to_dict()})
    return out


def metric_pivot(rows: Sequence[ReportRow], metric: str = "acc") -> List[Dict[str, object]]:
    """One row per slice, one column per variant/model pair."""
    if metric not in METRIC_NAMES:
        raise ParameterError(f"Unknown metric {metric!r}")
    pivot: Dict[str, Dict[str, object]] = {}
    for row in rows:
        pivot.setdefault(row.slice, {"slice": row.slice})[
            f"{row.variant}/{row.model}"
        ] = getattr(row.report, metric)
    return [pivot[name] for name in sorted(pivot)]


def load_experiments(path: Path) -> List[Tuple[str, str, str, List[PredictionRecord]]]:
    """Read an experiments CSV (slice, variant, model, preds)."""
    base = Path(path).parent
    entries = []
    for entry in read_csv_rows(path, required=EXPERIMENT_COLUMNS):
        preds_path = Path(entry["preds"])
        if not preds_path.is_absolute():
            preds_path = base / preds_path
        entries.append((entry["slice"], entry["variant"], entry["model"],
                        read_predictions(preds_path)))
    return entries


def read_report(path: Path) -> List[Dict[str, Optional[float]]]:
    """Read a report CSV back, NA cells as None."""
    rows = []
    for entry in read_csv_rows(path, required=REPORT_COLUMNS):
        rows.append({
            **{k: entry[k] for k in ("slice", "variant", "model")},
            **{m: parse_optional_float(entry[m]) for m in METRIC_NAMES},
        })
    return rows


def _format_metric(value: Optional[float]) -> str:
    return "NA" if value is None else f"{value:.6g}"


def _parse_labelled_dirs(values: Optional[List[str]], option: str) -> Dict[Label, Path]:
    dirs: Dict[Label, Path] = {}
    for value in values or []:
        if "=" not in value:
            raise ParameterError(f"{option} expects LABEL=DIR, got {value!r}")
        name, directory = value.split("=", 1)
        try:
            dirs[Label(name)] = Path(directory)
        except ValueError:
            raise ParameterError(f"Unknown label {name!r} in {option}")
    return dirs


def build_parser(prog: Optional[str] = None) -> argparse.ArgumentParser:
    """Argument parser for the metrics and dataset-build subcommands."""
    parser = ForgeArgumentParser(
        prog=prog,
        description="DCA-split dataset manifests and classification metrics",
        epilog="Examples:\n"
               "  %(prog)s metrics --preds preds.csv\n"
               "  %(prog)s metrics --experiments runs.csv --out report.csv --pooled "
               "--compare-out best_tnr.csv\n"
               "  %(prog)s build --clean melanoma=clean/mel --clean non_melanoma=clean/nev "
               "--dca melanoma=dca/mel --dca non_melanoma=dca/nev --seed 1 --out manifest.csv\n",
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    sub = parser.add_subparsers(dest="command", required=True)

    metrics = sub.add_parser("metrics", help="Compute classification metrics")
    source = metrics.add_mutually_exclusive_group(required=True)
    source.add_argument("--preds", type=Path, help="Single predictions CSV")
    source.add_argument(
        "--experiments",
        type=Path,
        help="CSV of slice, variant, model, preds (path to predictions CSV)"
    )
    metrics.add_argument(
        "--threshold",
        type=float,
        default=Config.DECISION_THRESHOLD,
        help=f"Decision threshold (default: {Config.DECISION_THRESHOLD})"
    )
    metrics.add_argument("--out", type=Path, help="Report CSV")
    metrics.add_argument("--pooled", action="store_true", help="Add pooled 'all' slices")
    metrics.add_argument("--compare-out", type=Path, help="Best-approach comparison CSV")
    metrics.add_argument(
        "--compare-metric",
        choices=METRIC_NAMES,
        default="tnr",
        help="Metric for the comparison (default: tnr)"
    )
    metrics.add_argument("--pivot-out", type=Path, help="Per-slice metric pivot CSV")
    metrics.add_argument(
        "--pivot-metric",
        choices=METRIC_NAMES,
        default="acc",
        help="Metric for the pivot (default: acc)"
    )
    add_common_arguments(metrics)

    build = sub.add_parser("build", help="Build the DCA-split balanced manifest")
    build.add_argument("--clean", action="append", required=True, help="LABEL=DIR, per class")
    build.add_argument("--dca", action="append", help="LABEL=DIR with mask CSV, per class")
    build.add_argument("--seed", type=int, required=True, help="Shuffle seed")
    build.add_argument(
        "--train-fraction",
        type=float,
        default=Config.TRAIN_FRACTION,
        help=f"Training share of clean images (default: {Config.TRAIN_FRACTION})"
    )
    build.add_argument("--out", type=Path, required=True, help="Manifest CSV")
    build.add_argument("--summary-out", type=Path, help="Count table CSV")
    add_common_arguments(build)
    return parser


def _run_metrics(args: argparse.Namespace) -> int:
    if args.preds is not None:
        report = compute_metrics(read_predictions(args.preds), args.threshold)
        print(f"tp={report.tp} fp={report.fp} tn={report.tn} fn={report.fn}")
        for name, value in report.metrics().items():
            print(f"{name} {_format_metric(value)}")
        if args.out:
            row = ReportRow(args.preds.stem, "original", "clean", report)
            write_csv_rows(args.out, REPORT_COLUMNS, [row.to_dict()], overwrite=args.overwrite)
        return 0

    rows = experiment_report(load_experiments(args.experiments), args.threshold, args.pooled)
    if args.out:
        write_csv_rows(
            args.out, REPORT_COLUMNS, [r.to_dict() for r in rows], overwrite=args.overwrite
        )
    else:
        for row in rows:
            cells = [_format_metric(v) for v in row.report.metrics().values()]
            print(",".join([row.slice, row.variant, row.model] + cells))
    if args.compare_out:
        comparison = compare_approaches(rows, args.compare_metric)
        write_csv_rows(args.compare_out, ["approach"] + REPORT_COLUMNS, comparison,
                       overwrite=args.overwrite)
    if args.pivot_out:
        pivot = metric_pivot(rows, args.pivot_metric)
        columns = ["slice"] + sorted({k for p in pivot for k in p if k != "slice"})
        write_csv_rows(args.pivot_out, columns, pivot, overwrite=args.overwrite)
    logger.info(f"Report with {len(rows)} rows")
    return 0


def _run_build(args: argparse.Namespace) -> int:
    builder = ManifestBuilder(args.seed, args.train_fraction)
    rows = builder.build(
        _parse_labelled_dirs(args.clean, "--clean"),
        _parse_labelled_dirs(args.dca, "--dca"),
    )
    write_manifest(rows, args.out, overwrite=args.overwrite)
    summary = summarize_manifest(rows)
    if args.summary_out:
        columns = list(summary[0].keys())
        write_csv_rows(args.summary_out, columns, summary, overwrite=args.overwrite)
    for line in summary:
        print(", ".join(f"{k}={v}" for k, v in line.items()))
    return 0


def run(args: argparse.Namespace) -> int:
    """Execute a parsed metrics/build command."""
    if args.verbose:
        logger.setLevel("DEBUG")
    if args.command == "metrics":
        return _run_metrics(args)
    return _run_build(args)


def main(argv: Optional[List[str]] = None) -> int:
    """CLI for dataset building and metrics."""
    return run(build_parser().parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
