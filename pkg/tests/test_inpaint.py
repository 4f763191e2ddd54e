"""Tests for inpaint module."""

import numpy as np
import pytest
from scipy import ndimage

from dcaforge.dca_mask import Circle, render_mask
from dcaforge.exceptions import BatchError, NoBoundaryError, ParameterError, ShapeError
from dcaforge.image_core import ImageBuffer, PixelRegion, write_image
from dcaforge.inpaint import (
    REPORT_COLUMNS,
    DcaInpainter,
    InpaintMethod,
    InpaintRequest,
    hole_from_mask,
    inpaint,
    inpaint_batch,
    inpaint_navier_stokes,
    inpaint_telea,
)
from dcaforge.utils import read_csv_rows

METHODS = [InpaintMethod.TELEA, InpaintMethod.NAVIER_STOKES]

# the ramp is real-valued but outputs are uint8: per-pixel error moves by at most half a level
UINT8_ROUNDING = 0.5


def gradient_image(width=128, height=64):
    x = np.arange(width, dtype=np.float64) * 255.0 / (width - 1)
    return np.tile(x, (height, 1))


def centered_hole(width, height, size):
    hole = np.zeros((height, width), dtype=bool)
    y0, x0 = (height - size) // 2, (width - size) // 2
    hole[y0:y0 + size, x0:x0 + size] = True
    return hole


def gradient_error(method, size):
    truth = gradient_image()
    hole = centered_hole(128, 64, size)
    req = InpaintRequest(ImageBuffer.from_array(truth), PixelRegion(hole), method)
    out = inpaint(req).image.data.astype(np.float64)
    return float(np.abs(out[hole] - truth[hole]).mean())


class TestInpaintRequest:
    """Test request validation."""

    def test_total_hole(self):
        """A hole covering everything has no boundary."""
        img = ImageBuffer(np.zeros((8, 8), dtype=np.uint8))
        with pytest.raises(NoBoundaryError):
            InpaintRequest(img, PixelRegion.full(8, 8))

    def test_shape_mismatch(self):
        """Hole must match the image."""
        img = ImageBuffer(np.zeros((8, 8), dtype=np.uint8))
        with pytest.raises(ShapeError):
            InpaintRequest(img, PixelRegion.empty(9, 8))

    @pytest.mark.parametrize("kwargs", [
        {"inpaint_radius": 0.5}, {"ns_iterations": 0}, {"ns_dt": 0.0},
    ])
    def test_bad_parameters(self, kwargs):
        """Out-of-range parameters are refused."""
        img = ImageBuffer(np.zeros((8, 8), dtype=np.uint8))
        with pytest.raises(ParameterError):
            InpaintRequest(img, PixelRegion.empty(8, 8), **kwargs)


class TestInpaintAlgorithms:
    """Behavior shared by Telea and Navier-Stokes."""

    @pytest.mark.parametrize("method", METHODS)
    def test_empty_hole_identity(self, method, texture):
        """Nothing to fill, nothing changes."""
        img = texture(24, 20, channels=3)
        result = inpaint(InpaintRequest(img, PixelRegion.empty(24, 20), method))
        assert result.image.equals(img)
        assert result.fill_pixels == 0
        assert result.converged

    @pytest.mark.parametrize("method", METHODS)
    def test_constant_image(self, method):
        """Constants are recovered through holes up to a quarter of the image."""
        rng = np.random.default_rng(1)
        img = ImageBuffer(np.full((40, 40), 173, dtype=np.uint8))
        for _ in range(5):
            hole = rng.random((40, 40)) < 0.25
            hole |= centered_hole(40, 40, 10)
            out = inpaint(InpaintRequest(img, PixelRegion(hole), method)).image
            assert np.abs(out.data.astype(int) - 173).max() <= (0 if method is METHODS[0] else 1)

    @pytest.mark.parametrize("method", METHODS)
    def test_linear_gradient(self, method):
        """Centered 10x10 hole in a 0-255 ramp."""
        assert gradient_error(method, 10) <= 3.0

    @pytest.mark.parametrize("method", METHODS)
    def test_known_region_preserved(self, method, texture):
        """Pixels outside the hole are bit-exact."""
        img = texture(48, 40, seed=3, channels=3)
        hole = render_mask(Circle(24, 20, 16), 48, 40).dca_region()
        out = inpaint(InpaintRequest(img, hole, method)).image
        keep = ~hole.membership
        assert np.array_equal(out.data[keep], img.data[keep])

    @pytest.mark.parametrize("method", METHODS)
    def test_channel_independence(self, method, texture):
        """RGB equals inpainting each channel on its own."""
        img = texture(32, 32, seed=5, channels=3)
        hole = PixelRegion(centered_hole(32, 32, 9))
        rgb = inpaint(InpaintRequest(img, hole, method)).image.data
        for c in range(3):
            single = ImageBuffer(np.ascontiguousarray(img.data[:, :, c]))
            out = inpaint(InpaintRequest(single, hole, method)).image.data
            assert np.array_equal(rgb[:, :, c], out)

    def test_hole_size_monotonicity(self):
        """Bigger centered holes never reconstruct the ramp better."""
        for method in METHODS:
            errors = [gradient_error(method, size) for size in (4, 8, 16, 32)]
            for smaller, larger in zip(errors, errors[1:]):
                assert larger >= smaller - UINT8_ROUNDING

    def test_telea_maximum_principle(self):
        """Filled values stay within the range of nearby known pixels."""
        rng = np.random.default_rng(7)
        data = rng.integers(60, 190, size=(40, 40), dtype=np.uint8)
        hole = centered_hole(40, 40, 12)
        req = InpaintRequest(ImageBuffer(data), PixelRegion(hole), inpaint_radius=5)
        out = inpaint_telea(req).image.data
        ring = ndimage.binary_dilation(hole, structure=np.ones((3, 3)), iterations=6) & ~hole
        lo, hi = int(data[ring].min()), int(data[ring].max())
        assert out[hole].min() >= lo - 1
        assert out[hole].max() <= hi + 1

    def test_deterministic(self, texture):
        """Repeated runs agree exactly."""
        img = texture(30, 30, seed=9)
        hole = PixelRegion(centered_hole(30, 30, 8))
        a = inpaint_navier_stokes(InpaintRequest(img, hole))
        b = inpaint_navier_stokes(InpaintRequest(img, hole))
        assert a.image.equals(b.image)
        assert a.iterations == b.iterations

    def test_ns_reports_non_convergence(self, texture):
        """Hitting the iteration cap is reported, not raised."""
        img = texture(40, 40, seed=2)
        hole = PixelRegion(centered_hole(40, 40, 16))
        result = inpaint_navier_stokes(
            InpaintRequest(img, hole, InpaintMethod.NAVIER_STOKES, ns_iterations=1),
            tolerance=1e-9,
        )
        assert result.converged is False
        assert result.iterations == 1

    def test_ns_diffusion_range(self, texture):
        """Unstable diffusion weights are refused."""
        img = texture(16, 16)
        with pytest.raises(ParameterError):
            inpaint_navier_stokes(
                InpaintRequest(img, PixelRegion(centered_hole(16, 16, 4))), diffusion=0.5
            )


class TestHoleFromMask:
    """Test hole_from_mask."""

    def test_no_dilation(self):
        """Hole is the non-255 area."""
        mask = render_mask(Circle(10, 10, 8), 20, 20)
        hole = hole_from_mask(mask.raster, dilation=0)
        assert np.array_equal(hole.membership, mask.raster.data != 255)

    def test_dilation_grows(self):
        """Each dilation step grows the hole."""
        raster = render_mask(Circle(10, 10, 8), 20, 20).raster
        counts = [hole_from_mask(raster, d).count for d in range(4)]
        assert counts == sorted(counts)
        assert counts[0] < counts[2]

    def test_all_lens(self):
        """All-255 mask has no hole even when dilated."""
        raster = ImageBuffer(np.full((10, 10), 255, dtype=np.uint8))
        assert hole_from_mask(raster, 2).is_empty


class TestDcaInpainter:
    """Test batch inpainting."""

    @pytest.fixture
    def dataset(self, clean_temp_dir, texture):
        images = clean_temp_dir / "images"
        masks = clean_temp_dir / "masks"
        rows = []
        for i in range(2):
            img = texture(40, 36, seed=i, channels=3)
            path = write_image(img, images / f"im{i}.png")
            rows.append({"image_id": f"im{i}", "path": str(path), "label": "melanoma"})
        write_image(render_mask(Circle(20, 18, 14), 40, 36).raster, masks / "im0.png")
        write_image(ImageBuffer(np.full((36, 40), 255, dtype=np.uint8)), masks / "im1.png")
        rows.append({"image_id": "im2", "path": str(images / "im0.png"), "label": "melanoma"})
        return rows, masks

    def test_batch(self, clean_temp_dir, dataset):
        """Report, manifest, images and errors for a mixed batch."""
        rows, masks = dataset
        out = clean_temp_dir / "telea"
        summary = DcaInpainter(InpaintMethod.TELEA).batch(rows, masks, out)
        assert summary["written"] == 2
        assert summary["failed"] == 1

        report = read_csv_rows(out / "inpaint_report.csv", required=REPORT_COLUMNS)
        assert [r["image_id"] for r in report] == ["im0", "im1"]
        assert report[1]["fill_pixels"] == "0"
        assert {r["converged"] for r in report} == {"true"}
        assert {r["dilation"] for r in report} == {"2"}

        # all-255 mask: output equals input
        original = (clean_temp_dir / "images" / "im1.png").read_bytes()
        assert (out / "im1.png").read_bytes() == original

        errors = read_csv_rows(out / "errors.csv")
        assert errors[0]["image_id"] == "im2"
        assert "im2.png" in errors[0]["error"]

    def test_function_form(self, clean_temp_dir, dataset):
        """inpaint_batch passes parameters through to the inpainter."""
        rows, masks = dataset
        out = clean_temp_dir / "ns"
        summary = inpaint_batch(
            rows[:2], masks, out, InpaintMethod.NAVIER_STOKES, dilation=0, iterations=50
        )
        assert summary["written"] == 2
        report = read_csv_rows(out / "inpaint_report.csv")
        assert {r["method"] for r in report} == {"ns"}
        assert {r["dilation"] for r in report} == {"0"}

    def test_empty_manifest(self, clean_temp_dir):
        """No rows is a batch error."""
        with pytest.raises(BatchError):
            DcaInpainter().batch([], clean_temp_dir, clean_temp_dir / "out")

    def test_invalid_parameters(self):
        """Bad batch parameters are refused early."""
        with pytest.raises(ParameterError):
            DcaInpainter(dilation=-1)
