"""Tests for heatmap_quant module."""

import csv
import math

import numpy as np
import pytest

from dcaforge.dca_mask import Circle, render_mask
from dcaforge.exceptions import BatchError, EmptyRegionError, ShapeError
from dcaforge.heatmap_quant import (
    AGGREGATE_COLUMNS,
    STATS_COLUMNS,
    GroupKey,
    HeatmapQuantifier,
    RegionStatsRow,
    aggregate_groups,
    quantify_heatmap,
    split_regions,
)
from dcaforge.image_core import ImageBuffer, write_image
from dcaforge.utils import read_csv_rows


def brute_force(values, members):
    picked = [float(v) for v, m in zip(values.ravel(), members.ravel()) if m]
    mean = sum(picked) / len(picked)
    return math.sqrt(sum((v - mean) ** 2 for v in picked) / len(picked)), mean


class TestQuantifyHeatmap:
    """Test per-heatmap statistics."""

    def test_matches_brute_force(self):
        """Random heatmap/mask pairs against per-pixel loops."""
        rng = np.random.default_rng(21)
        for _ in range(200):
            w, h = rng.integers(8, 33, size=2)
            circle = Circle(*rng.uniform(0, max(w, h), 2), rng.uniform(3, max(w, h)))
            mask = render_mask(circle, int(w), int(h))
            lens = mask.raster.data == 255
            if not lens.any():
                continue
            data = rng.integers(0, 256, size=(h, w), dtype=np.uint8)
            row = quantify_heatmap(ImageBuffer(data), mask, "x")
            rms_in, mean_in = brute_force(data, lens)
            assert row.internal_rms == pytest.approx(rms_in, abs=1e-9)
            assert row.internal_brightness == pytest.approx(mean_in, abs=1e-9)
            if lens.all():
                assert row.external_rms is None
                assert row.rms_diff is None
                continue
            rms_out, mean_out = brute_force(data, ~lens)
            assert row.external_rms == pytest.approx(rms_out, abs=1e-9)
            assert row.external_brightness == pytest.approx(mean_out, abs=1e-9)
            assert row.rms_diff == row.internal_rms - row.external_rms
            assert row.brightness_diff == row.internal_brightness - row.external_brightness

    def test_normalized_scale(self):
        """Normalized RMS is raw RMS over 255."""
        rng = np.random.default_rng(2)
        data = ImageBuffer(rng.integers(0, 256, size=(20, 20), dtype=np.uint8))
        mask = render_mask(Circle(10, 10, 8), 20, 20)
        raw = quantify_heatmap(data, mask)
        norm = quantify_heatmap(data, mask, normalized=True)
        assert raw.internal_rms == pytest.approx(255 * norm.internal_rms, abs=1e-6)
        assert raw.internal_brightness == norm.internal_brightness

    def test_color_heatmap_uses_luma(self):
        """RGB heatmaps are reduced to gray."""
        rgb = np.zeros((10, 10, 3), dtype=np.uint8)
        rgb[..., 0] = 255
        mask = render_mask(Circle(5, 5, 3), 10, 10)
        assert quantify_heatmap(ImageBuffer(rgb), mask).internal_brightness == 76.0

    def test_accepts_raster(self):
        """A bare mask raster works like a DcaMask."""
        mask = render_mask(Circle(6, 6, 4), 12, 12)
        heat = ImageBuffer(np.arange(144, dtype=np.uint8).reshape(12, 12))
        assert quantify_heatmap(heat, mask.raster) == quantify_heatmap(heat, mask)

    def test_brighter_outside_gives_negative_diff(self):
        """Attention on the DCA makes brightness_diff negative, per row and in aggregate."""
        key = GroupKey("clean", "dca", "large")
        labelled = []
        for i, (inner, outer) in enumerate([(40, 200), (90, 120), (10, 250)]):
            mask = render_mask(Circle(16, 16, 12), 32, 32)
            lens = mask.raster.data == 255
            heat = ImageBuffer(np.where(lens, inner, outer).astype(np.uint8))
            row = quantify_heatmap(heat, mask, f"h{i}")
            assert row.brightness_diff == inner - outer
            assert row.brightness_diff < 0
            labelled.append((key, row))
        aggregate = aggregate_groups(labelled)[0]
        assert aggregate.means["brightness_diff"] == pytest.approx(-430.0 / 3)
        assert aggregate.to_row()["brightness_diff_mean"] < 0

    def test_split_regions_partition(self):
        """Lens and DCA regions are disjoint and cover the frame."""
        mask = render_mask(Circle(7, 5, 4), 14, 10)
        internal, external = split_regions(mask)
        assert np.array_equal(internal.membership, mask.raster.data == 255)
        assert not (internal.membership & external.membership).any()
        assert internal.count + external.count == 140

    def test_empty_lens(self):
        """An all-DCA mask has no internal region."""
        with pytest.raises(EmptyRegionError):
            quantify_heatmap(
                ImageBuffer(np.zeros((8, 8), dtype=np.uint8)),
                ImageBuffer(np.zeros((8, 8), dtype=np.uint8)),
            )

    def test_shape_mismatch(self):
        """Heatmap and mask must agree."""
        with pytest.raises(ShapeError):
            quantify_heatmap(
                ImageBuffer(np.zeros((8, 8), dtype=np.uint8)),
                render_mask(Circle(4, 4, 3), 9, 8),
            )


class TestAggregateGroups:
    """Test group aggregation."""

    def rows(self):
        key_a = GroupKey("clean", "original", "large")
        key_b = GroupKey("clean", "original", "small")
        return [
            (key_a, RegionStatsRow("a1", 100.0, 150.0, 40.0, 30.0)),
            (key_a, RegionStatsRow("a2", 110.0, 140.0, 60.0, 50.0)),
            (key_b, RegionStatsRow("b1", 90.0, 120.0, 80.0, 100.0)),
            (key_b, RegionStatsRow("b2", 95.0, 125.0, None, None)),
        ]

    def test_means_and_stds(self):
        """Population statistics per group; rows without DCA skipped."""
        aggregates = aggregate_groups(self.rows())
        assert [a.key.dca_size for a in aggregates] == ["large", "small"]
        large, small = aggregates
        assert large.n == 2
        assert large.means["internal_rms"] == 105.0
        assert large.stds["internal_rms"] == 5.0
        assert large.means["rms_diff"] == 55.0
        assert small.n == 1
        assert small.stds["external_brightness"] == 0.0

    def test_diff_is_exact(self):
        """Aggregate diff means equal internal minus external means."""
        rng = np.random.default_rng(4)
        key = GroupKey("m", "t", "medium")
        rows = [
            (key, RegionStatsRow(str(i), *rng.uniform(0, 255, size=4)))
            for i in range(50)
        ]
        agg = aggregate_groups(rows)[0]
        assert agg.means["rms_diff"] == agg.means["internal_rms"] - agg.means["external_rms"]
        mean_of_diffs = np.mean([r.rms_diff for _, r in rows])
        assert agg.means["rms_diff"] == pytest.approx(mean_of_diffs, abs=1e-9)

    def test_order_independent(self):
        """Shuffled input gives identical aggregates."""
        forward = [a.to_row() for a in aggregate_groups(self.rows())]
        backward = [a.to_row() for a in aggregate_groups(list(reversed(self.rows())))]
        assert forward == backward

    def test_pooled(self):
        """Pooled adds an 'all' group per model and test set."""
        aggregates = aggregate_groups(self.rows(), pooled=True)
        pooled = [a for a in aggregates if a.key.dca_size == "all"]
        assert len(pooled) == 1
        assert pooled[0].n == 3

    def test_nothing_to_aggregate(self):
        """Only DCA-free rows is a batch error."""
        with pytest.raises(BatchError):
            aggregate_groups([(GroupKey("m", "t", "s"), RegionStatsRow("x", 1, 1, None, None))])


class TestHeatmapQuantifier:
    """Test the file-level driver."""

    def test_run(self, clean_temp_dir):
        """Stats and aggregate CSVs with the declared schemas."""
        heatmaps = clean_temp_dir / "heatmaps"
        masks = clean_temp_dir / "masks"
        rng = np.random.default_rng(6)
        labels = clean_temp_dir / "labels.csv"
        with open(labels, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["image_id", "model", "test_set", "dca_size"])
            for i, size in enumerate(["large", "large", "medium", "medium"]):
                image_id = f"h{i}"
                write_image(render_mask(Circle(16, 16, 12 + i), 32, 32).raster,
                            masks / f"{image_id}.png")
                write_image(ImageBuffer(rng.integers(0, 256, (32, 32), dtype=np.uint8)),
                            heatmaps / f"{image_id}.png")
                writer.writerow([image_id, "clean", "ns", size])
            writer.writerow(["missing", "clean", "ns", "large"])

        out = clean_temp_dir / "out" / "stats.csv"
        summary = HeatmapQuantifier().run(labels, heatmaps, masks, out, pooled=True)
        assert summary["rows"] == 4
        assert summary["groups"] == 3
        assert summary["failed"] == 1

        stats = read_csv_rows(out, required=STATS_COLUMNS)
        for row in stats:
            diff = float(row["internal_rms"]) - float(row["external_rms"])
            assert float(row["rms_diff"]) == diff

        aggregate = read_csv_rows(clean_temp_dir / "out" / "stats_aggregate.csv")
        assert list(aggregate[0].keys()) == AGGREGATE_COLUMNS
        assert [r["dca_size"] for r in aggregate] == ["all", "large", "medium"]
        for row in aggregate:
            diff = float(row["rms_internal_mean"]) - float(row["rms_external_mean"])
            assert float(row["rms_diff_mean"]) == diff
        assert read_csv_rows(clean_temp_dir / "out" / "errors.csv")[0]["image_id"] == "missing"
