"""Tests for eval_dataset module."""

import csv

import numpy as np
import pytest

from dcaforge.dca_mask import MASK_CSV_COLUMNS
from dcaforge.eval_dataset import (
    MANIFEST_COLUMNS,
    REPORT_COLUMNS,
    Label,
    ManifestBuilder,
    ManifestRow,
    PredictionRecord,
    Split,
    build_manifest,
    compare_approaches,
    compute_auc,
    compute_metrics,
    experiment_report,
    load_experiments,
    metric_pivot,
    read_manifest,
    read_predictions,
    read_report,
    summarize_manifest,
    write_manifest,
)
from dcaforge.exceptions import DataError
from dcaforge.utils import write_csv_rows

DCA_SIZE_COUNTS = {"small": 909, "medium": 488, "large": 423, "other": 242}


def record(i, label, score):
    return PredictionRecord(f"p{i}", Label(label), score)


def random_predictions(rng, n, ties=False):
    labels = rng.integers(0, 2, size=n)
    labels[0], labels[1] = 0, 1
    scores = rng.integers(0, 5, size=n) / 4.0 if ties else rng.random(n)
    return [
        record(i, "melanoma" if y else "non_melanoma", float(s))
        for i, (y, s) in enumerate(zip(labels, scores))
    ]


def mann_whitney(preds):
    pos = [p.score for p in preds if p.true_label is Label.MELANOMA]
    neg = [p.score for p in preds if p.true_label is Label.NON_MELANOMA]
    wins = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg)
    return wins / (len(pos) * len(neg))


def make_class_dirs(root, clean_count, dca_counts):
    clean, dca = {}, {}
    for label in Label:
        clean_dir = root / "clean" / label.value
        clean_dir.mkdir(parents=True)
        for i in range(clean_count):
            (clean_dir / f"{label.value}_{i:05d}.jpg").touch()
        clean[label] = clean_dir

        dca_dir = root / "dca" / label.value
        dca_dir.mkdir(parents=True)
        with open(dca_dir / "dca_masks.csv", "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(MASK_CSV_COLUMNS)
            n = 0
            for category, count in dca_counts.items():
                for _ in range(count):
                    image_id = f"{label.value}_dca_{n:05d}"
                    (dca_dir / f"{image_id}.jpg").touch()
                    writer.writerow([image_id, 1.0, 1.0, 10.0, 0.2, category])
                    n += 1
        dca[label] = dca_dir
    return clean, dca


class TestManifestRow:
    """Test manifest row invariants."""

    def test_train_must_be_clean(self):
        """Train rows carry no DCA category."""
        with pytest.raises(DataError):
            ManifestRow("a", "a.png", Label.MELANOMA, Split.TRAIN, "small", "x")

    def test_test_must_have_dca(self):
        """Test rows need a DCA category."""
        with pytest.raises(DataError):
            ManifestRow("a", "a.png", Label.MELANOMA, Split.TEST, "none", "x")


class TestBuildManifest:
    """Test the DCA-split balanced dataset."""

    @pytest.mark.slow
    def test_full_size_split_counts(self, clean_temp_dir):
        """3063 clean per class and 2062 DCA per class."""
        clean, dca = make_class_dirs(clean_temp_dir, 3063, DCA_SIZE_COUNTS)
        rows = build_manifest(clean, dca, seed=42)

        for label in Label:
            mine = [r for r in rows if r.label is label]
            assert sum(r.split is Split.TRAIN for r in mine) == 2756
            assert sum(r.split is Split.VAL for r in mine) == 307
        assert sum(r.split is Split.TEST for r in rows) == 4124

        summary = {line["label"]: line for line in summarize_manifest(rows)}
        assert summary["melanoma"]["large"] == 423
        assert summary["non_melanoma"]["test_total"] == 2062

        first = clean_temp_dir / "first.csv"
        second = clean_temp_dir / "second.csv"
        write_manifest(rows, first)
        write_manifest(build_manifest(clean, dca, seed=42), second)
        assert first.read_bytes() == second.read_bytes()

    def test_balances_classes(self, clean_temp_dir):
        """Larger class is truncated to the smaller one."""
        clean, _ = make_class_dirs(clean_temp_dir, 20, {})
        for i in range(20, 35):
            (clean[Label.NON_MELANOMA] / f"extra_{i}.jpg").touch()
        rows = ManifestBuilder(seed=1).build(clean)
        for split in (Split.TRAIN, Split.VAL):
            counts = [sum(r.split is split and r.label is label for r in rows) for label in Label]
            assert counts[0] == counts[1]
        assert len(rows) == 40

    def test_seed_changes_split(self, clean_temp_dir):
        """Different seeds shuffle differently."""
        clean, _ = make_class_dirs(clean_temp_dir, 30, {})
        a = [r.image_id for r in build_manifest(clean, None, seed=1) if r.split is Split.VAL]
        b = [r.image_id for r in build_manifest(clean, None, seed=2) if r.split is Split.VAL]
        assert a != b

    def test_too_few_clean(self, clean_temp_dir):
        """Fewer than ten clean images in a class is refused."""
        clean, _ = make_class_dirs(clean_temp_dir, 5, {})
        with pytest.raises(DataError):
            build_manifest(clean, None, seed=0)

    def test_missing_dca_image(self, clean_temp_dir):
        """CSV rows must have an image file."""
        clean, dca = make_class_dirs(clean_temp_dir, 10, {"small": 2})
        (dca[Label.MELANOMA] / "melanoma_dca_00000.jpg").unlink()
        with pytest.raises(DataError, match="melanoma_dca_00000"):
            build_manifest(clean, dca, seed=0)

    def test_mask_png_beside_image_is_ambiguous(self, clean_temp_dir):
        """Two files sharing a stem without an image column is refused."""
        clean, dca = make_class_dirs(clean_temp_dir, 10, {"small": 1})
        (dca[Label.MELANOMA] / "melanoma_dca_00000.png").touch()
        with pytest.raises(DataError, match="several files"):
            build_manifest(clean, dca, seed=0)

    def test_image_column_picks_source(self, clean_temp_dir):
        """Recorded image paths win over same-stem mask files."""
        clean, dca = make_class_dirs(clean_temp_dir, 10, {"large": 2})
        for label in Label:
            directory = dca[label]
            rows = []
            for i in range(2):
                image_id = f"{label.value}_dca_{i:05d}"
                (directory / f"{image_id}.png").touch()
                rows.append({"image_id": image_id, "cx": 1.0, "cy": 1.0, "radius": 10.0,
                             "area_fraction": 0.4, "category": "large",
                             "image": f"{image_id}.jpg"})
            write_csv_rows(directory / "dca_masks.csv", MASK_CSV_COLUMNS + ["image"], rows,
                           overwrite=True)
        test_rows = [r for r in build_manifest(clean, dca, seed=0) if r.split is Split.TEST]
        assert len(test_rows) == 4
        assert all(r.path.endswith(".jpg") for r in test_rows)

    def test_round_trip_through_csv(self, clean_temp_dir):
        """Written manifests parse back into the same rows."""
        clean, dca = make_class_dirs(clean_temp_dir, 10, {"medium": 1, "other": 1})
        rows = build_manifest(clean, dca, seed=3)
        path = clean_temp_dir / "manifest.csv"
        write_manifest(rows, path)
        assert path.read_text().splitlines()[0] == ",".join(MANIFEST_COLUMNS)
        assert read_manifest(path) == rows


class TestMetrics:
    """Test compute_metrics and compute_auc."""

    def test_one_of_each(self):
        """TP, FP, TN, FN once each."""
        preds = [
            record(0, "melanoma", 0.9), record(1, "non_melanoma", 0.8),
            record(2, "non_melanoma", 0.1), record(3, "melanoma", 0.2),
        ]
        report = compute_metrics(preds)
        assert (report.tp, report.fp, report.tn, report.fn) == (1, 1, 1, 1)
        for name in ("acc", "tpr", "tnr", "precision", "f1"):
            assert getattr(report, name) == 0.5

    def test_all_correct(self):
        """Perfect predictions."""
        preds = [record(0, "melanoma", 0.7), record(1, "non_melanoma", 0.3)]
        report = compute_metrics(preds)
        assert report.acc == 1.0
        assert report.f1 == 1.0
        assert report.auc == 1.0

    def test_threshold_inclusive(self):
        """Score equal to the threshold is positive."""
        report = compute_metrics([record(0, "melanoma", 0.5)])
        assert report.tp == 1

    def test_undefined_ratios(self):
        """Zero denominators are None, never 0."""
        report = compute_metrics([record(0, "non_melanoma", 0.1)])
        assert report.tpr is None
        assert report.precision is None
        assert report.f1 is None
        assert report.auc is None
        assert report.tnr == 1.0

    def test_threshold_zero(self):
        """Everything positive at threshold 0."""
        preds = random_predictions(np.random.default_rng(3), 30)
        report = compute_metrics(preds, threshold=0.0)
        assert report.tpr == 1.0
        assert report.tnr == 0.0

    def test_empty(self):
        """Empty prediction list is an error."""
        with pytest.raises(DataError):
            compute_metrics([])

    def test_score_range(self):
        """Scores outside [0, 1] are refused."""
        with pytest.raises(DataError):
            record(0, "melanoma", 1.5)

    def test_recount_oracle(self):
        """Counts and ratios equal an independent recount."""
        rng = np.random.default_rng(17)
        for _ in range(100):
            preds = random_predictions(rng, int(rng.integers(2, 60)))
            tp = sum(p.true_label is Label.MELANOMA and p.score >= 0.5 for p in preds)
            fn = sum(p.true_label is Label.MELANOMA and p.score < 0.5 for p in preds)
            fp = sum(p.true_label is Label.NON_MELANOMA and p.score >= 0.5 for p in preds)
            tn = sum(p.true_label is Label.NON_MELANOMA and p.score < 0.5 for p in preds)
            report = compute_metrics(preds)
            assert (report.tp, report.fp, report.tn, report.fn) == (tp, fp, tn, fn)
            assert report.total == len(preds)
            assert report.acc == (tp + tn) / len(preds)
            assert report.tpr == (tp / (tp + fn) if tp + fn else None)
            assert report.tnr == (tn / (tn + fp) if tn + fp else None)
            precision = tp / (tp + fp) if tp + fp else None
            assert report.precision == precision
            if precision is not None and report.tpr is not None and precision + report.tpr > 0:
                assert report.f1 == pytest.approx(
                    2 * precision * report.tpr / (precision + report.tpr), abs=1e-15
                )

    def test_auc_oracle(self):
        """AUC equals the pairwise Mann-Whitney statistic, ties counted half."""
        rng = np.random.default_rng(5)
        for trial in range(100):
            preds = random_predictions(rng, 40, ties=trial % 2 == 0)
            assert compute_auc(preds) == pytest.approx(mann_whitney(preds), abs=1e-12)

    def test_auc_identical_scores(self):
        """All ties give 0.5."""
        preds = [record(i, "melanoma" if i % 2 else "non_melanoma", 0.3) for i in range(6)]
        assert compute_auc(preds) == 0.5

    def test_auc_monotone_invariance(self):
        """Strictly monotone transforms keep the AUC."""
        preds = random_predictions(np.random.default_rng(8), 40)
        squared = [PredictionRecord(p.image_id, p.true_label, p.score ** 2) for p in preds]
        assert compute_auc(squared) == pytest.approx(compute_auc(preds), abs=1e-12)

    def test_auc_single_class(self):
        """One class only is an error."""
        with pytest.raises(DataError):
            compute_auc([record(0, "melanoma", 0.4), record(1, "melanoma", 0.6)])

    def test_read_predictions(self, clean_temp_dir):
        """CSV parsing validates labels and scores."""
        path = clean_temp_dir / "preds.csv"
        path.write_text("image_id,true_label,score\na,melanoma,0.7\nb,benign,0.1\n")
        with pytest.raises(DataError):
            read_predictions(path)


class TestExperimentReport:
    """Test report assembly."""

    def entries(self):
        rng = np.random.default_rng(12)
        out = []
        for size in ("small", "medium", "large", "other"):
            for variant in ("original", "ns", "telea"):
                for model in ("clean", "binary", "realistic"):
                    out.append((size, variant, model, random_predictions(rng, 20)))
        return out

    def test_full_grid(self):
        """4 sizes x 3 variants x 3 models gives 36 rows."""
        rows = experiment_report(self.entries())
        assert len(rows) == 36
        assert list(rows[0].to_dict().keys()) == REPORT_COLUMNS

    def test_duplicate_key(self):
        """Duplicate slice keys are refused."""
        preds = [record(0, "melanoma", 0.9), record(1, "non_melanoma", 0.1)]
        with pytest.raises(DataError):
            experiment_report([("small", "ns", "clean", preds), ("small", "ns", "clean", preds)])

    def test_pooled(self):
        """Pooled rows cover every slice's predictions."""
        entries = self.entries()
        rows = experiment_report(entries, pooled=True)
        pooled = [r for r in rows if r.slice == "all"]
        assert len(pooled) == 9
        ns_clean = [r for r in pooled if r.variant == "ns" and r.model == "clean"][0]
        assert ns_clean.report.total == 80

    def test_compare_approaches(self):
        """Best inpainted and best superimposed row per slice."""
        entries = self.entries()
        rows = experiment_report(entries)
        comparison = compare_approaches(rows, metric="tnr")
        assert len(comparison) == 8
        for line in comparison:
            candidates = [
                r.report.tnr for r in rows
                if r.slice == line["slice"] and r.report.tnr is not None and (
                    (line["approach"] == "inpainted" and r.model == "clean"
                     and r.variant in ("ns", "telea"))
                    or (line["approach"] == "superimposed" and r.variant == "original"
                        and r.model in ("binary", "realistic"))
                )
            ]
            assert line["tnr"] == max(candidates)

    def test_metric_pivot(self):
        """One row per slice, one column per variant/model."""
        pivot = metric_pivot(experiment_report(self.entries()), "acc")
        assert [p["slice"] for p in pivot] == ["large", "medium", "other", "small"]
        assert len(pivot[0]) == 1 + 9


class TestReportFiles:
    """Test experiment and report CSV IO."""

    def test_load_experiments_relative_paths(self, clean_temp_dir):
        """Prediction paths resolve against the experiments file."""
        runs = clean_temp_dir / "runs"
        runs.mkdir()
        with open(runs / "ns_clean.csv", "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["image_id", "true_label", "score"])
            writer.writerow(["a", "melanoma", 0.7])
            writer.writerow(["b", "non_melanoma", 0.2])
        with open(runs / "experiments.csv", "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["slice", "variant", "model", "preds"])
            writer.writerow(["large", "ns", "clean", "ns_clean.csv"])

        entries = load_experiments(runs / "experiments.csv")
        assert [e[:3] for e in entries] == [("large", "ns", "clean")]
        assert [p.image_id for p in entries[0][3]] == ["a", "b"]

    def test_read_report_na(self, clean_temp_dir):
        """NA cells come back as None."""
        only_negatives = [record(0, "non_melanoma", 0.1), record(1, "non_melanoma", 0.8)]
        rows = experiment_report([("small", "telea", "clean", only_negatives)])
        path = clean_temp_dir / "report.csv"
        write_csv_rows(path, REPORT_COLUMNS, [r.to_dict() for r in rows])

        back = read_report(path)
        assert back[0]["tnr"] == 0.5
        assert back[0]["tpr"] is None
        assert back[0]["auc"] is None
        assert back[0]["variant"] == "telea"
