"""DCA removal by inpainting.

Features:
- Telea fast-marching inpainting (heap-ordered fill, direction / distance /
  level-set weighting)
- Navier-Stokes style inpainting: Laplacian transport along isophotes plus
  Perona-Malik diffusion, warm-started from the Telea fill
- Holes built from DCA mask rasters with optional dilation
- Batch driver writing inpainted images and a timing/convergence report
"""

import argparse
import heapq
import math
import sys
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .config import Config
from .dca_mask import read_mask
from .exceptions import (
    BatchError,
    DataError,
    NoBoundaryError,
    ParameterError,
    ShapeError,
)
from .image_core import ImageBuffer, PixelRegion, read_image, write_image
from .logger import setup_logger
from .utils import (
    ForgeArgumentParser,
    add_common_arguments,
    map_rows,
    read_csv_rows,
    write_csv_rows,
    write_errors,
)

logger = setup_logger("Inpaint", level=Config.LOG_LEVEL)

REPORT_COLUMNS = [
    "image_id", "method", "fill_pixels", "seconds", "converged", "iterations", "dilation"
]

# fast-marching pixel states
KNOWN = 0
BAND = 1
INSIDE = 2
OUTSIDE = 3

_FAR = 1.0e6
_EDGE_KAPPA = 0.1
_CROSS = ndimage.generate_binary_structure(2, 1)


class InpaintMethod(Enum):
    """Inpainting algorithms."""
    TELEA = "telea"
    NAVIER_STOKES = "ns"


@dataclass(frozen=True, eq=False)
class InpaintRequest:
    """Image, hole and parameters of one inpainting call."""

    image: ImageBuffer
    hole: PixelRegion
    method: InpaintMethod = InpaintMethod.TELEA
    inpaint_radius: float = Config.INPAINT_RADIUS
    ns_iterations: int = Config.NS_ITERATIONS
    ns_dt: float = Config.NS_DT

    def __post_init__(self) -> None:
        if self.hole.membership.shape != self.image.shape:
            raise ShapeError(
                f"Hole shape {self.hole.membership.shape} does not match image {self.image.shape}"
            )
        if self.hole.count == self.hole.membership.size:
            raise NoBoundaryError("Hole covers every pixel: nothing to inpaint from")
        if not self.inpaint_radius >= 1.0:
            raise ParameterError(f"inpaint_radius must be >= 1, got {self.inpaint_radius}")
        if self.ns_iterations < 1:
            raise ParameterError(f"ns_iterations must be positive, got {self.ns_iterations}")
        if not self.ns_dt > 0:
            raise ParameterError(f"ns_dt must be positive, got {self.ns_dt}")


@dataclass(frozen=True, eq=False)
class InpaintResult:
    """Inpainted image plus run metadata."""

    image: ImageBuffer
    method: InpaintMethod
    converged: bool
    iterations: int
    fill_pixels: int


class _FastMarcher:
    """Telea fast marching over one hole, shared by all channels.

    The fill order and weights depend only on the hole geometry, so they
    are computed once and applied to every channel plane separately.
    """

    def __init__(self, hole: np.ndarray, radius: float):
        self.half = int(math.ceil(radius))
        self.pad = self.half + 1
        self.hole = np.pad(hole, self.pad, mode="constant", constant_values=False)
        inside_image = np.pad(
            np.ones_like(hole, dtype=bool), self.pad, mode="constant", constant_values=False
        )
        self.flags = np.full(self.hole.shape, OUTSIDE, dtype=np.int8)
        self.flags[inside_image] = KNOWN
        self.flags[self.hole] = INSIDE
        self.T = np.where(self.hole, _FAR, 0.0)

        span = np.arange(-self.half, self.half + 1)
        self.oy, self.ox = np.meshgrid(span, span, indexing="ij")
        dist2 = self.oy ** 2 + self.ox ** 2
        self.disk = (dist2 > 0) & (dist2 <= radius * radius)

    def _solve(self, y1: int, x1: int, y2: int, x2: int) -> float:
        flags, T = self.flags, self.T
        if flags[y1, x1] == KNOWN:
            t1 = T[y1, x1]
            if flags[y2, x2] == KNOWN:
                t2 = T[y2, x2]
                disc = 2.0 - (t1 - t2) ** 2
                if disc < 0:
                    return 1.0 + min(t1, t2)
                r = math.sqrt(disc)
                s = (t1 + t2 - r) / 2.0
                if s >= t1 and s >= t2:
                    return s
                s += r
                if s >= t1 and s >= t2:
                    return s
                return _FAR
            return 1.0 + t1
        if flags[y2, x2] == KNOWN:
            return 1.0 + T[y2, x2]
        return _FAR

    def _arrival(self, y: int, x: int) -> float:
        return min(
            self._solve(y - 1, x, y, x - 1),
            self._solve(y + 1, x, y, x - 1),
            self._solve(y - 1, x, y, x + 1),
            self._solve(y + 1, x, y, x + 1),
        )

    def _has_value(self, y: int, x: int) -> bool:
        return self.flags[y, x] in (KNOWN, BAND)

    def _grad_T(self, y: int, x: int) -> Tuple[float, float]:
        T = self.T
        tp = T[y, x]

        def axis(minus: Tuple[int, int], plus: Tuple[int, int]) -> float:
            has_minus, has_plus = self._has_value(*minus), self._has_value(*plus)
            if has_minus and has_plus:
                return (T[plus] - T[minus]) * 0.5
            if has_plus:
                return T[plus] - tp
            if has_minus:
                return tp - T[minus]
            return 0.0

        gx = axis((y, x - 1), (y, x + 1))
        gy = axis((y - 1, x), (y + 1, x))
        return gx, gy

    def _fill(self, y: int, x: int, planes: List[np.ndarray]) -> None:
        h = self.half
        rows = slice(y - h - 1, y + h + 2)
        cols = slice(x - h - 1, x + h + 2)
        flags = self.flags[rows, cols]
        valued = (flags == KNOWN) | (flags == BAND)
        centre = valued[1:-1, 1:-1]
        sel = centre & self.disk
        if not sel.any():
            return

        gx, gy = self._grad_T(y, x)
        oy = self.oy[sel].astype(np.float64)
        ox = self.ox[sel].astype(np.float64)
        length = np.sqrt(oy * oy + ox * ox)
        # r = p - q = (-ox, -oy)
        direction = np.abs(-(ox * gx) - (oy * gy)) / length
        direction[direction <= 0.01] = 1e-6
        distance = 1.0 / (length * length)
        level = 1.0 / (1.0 + np.abs(self.T[rows, cols][1:-1, 1:-1][sel] - self.T[y, x]))
        weights = direction * distance * level
        total = weights.sum()

        left, right = valued[1:-1, :-2], valued[1:-1, 2:]
        up, down = valued[:-2, 1:-1], valued[2:, 1:-1]
        for plane in planes:
            v = plane[rows, cols]
            vc = v[1:-1, 1:-1]
            vl, vr = v[1:-1, :-2], v[1:-1, 2:]
            vu, vd = v[:-2, 1:-1], v[2:, 1:-1]
            gix = np.where(left & right, (vr - vl) * 0.5,
                           np.where(right, vr - vc, np.where(left, vc - vl, 0.0)))
            giy = np.where(up & down, (vd - vu) * 0.5,
                           np.where(down, vd - vc, np.where(up, vc - vu, 0.0)))
            known_values = vc[sel]
            # first-order estimate I(q) + grad I(q) . (p - q)
            estimate = known_values - gix[sel] * ox - giy[sel] * oy
            value = float(np.dot(weights, estimate) / total)
            plane[y, x] = min(max(value, float(known_values.min())), float(known_values.max()))

    def march(self, planes: List[np.ndarray]) -> None:
        """Fill the hole in every padded plane in place."""
        band = ndimage.binary_dilation(self.hole, structure=_CROSS) & (self.flags == KNOWN)
        self.flags[band] = BAND
        heap: List[Tuple[float, int, int]] = [
            (0.0, int(y), int(x)) for y, x in np.argwhere(band)
        ]
        heapq.heapify(heap)

        while heap:
            _, y, x = heapq.heappop(heap)
            if self.flags[y, x] == KNOWN:
                continue
            self.flags[y, x] = KNOWN
            for ny, nx in ((y - 1, x), (y, x - 1), (y + 1, x), (y, x + 1)):
                if self.flags[ny, nx] != INSIDE:
                    continue
                t = self._arrival(ny, nx)
                self.T[ny, nx] = t
                self._fill(ny, nx, planes)
                self.flags[ny, nx] = BAND
                heapq.heappush(heap, (t, ny, nx))


def _planes(img: ImageBuffer) -> List[np.ndarray]:
    data = img.data.astype(np.float64)
    if img.channels == 1:
        return [np.ascontiguousarray(data)]
    return [np.ascontiguousarray(data[:, :, c]) for c in range(3)]


def _assemble(img: ImageBuffer, hole: np.ndarray, planes: List[np.ndarray]) -> ImageBuffer:
    out = img.copy_data()
    for c, plane in enumerate(planes):
        filled = np.clip(np.floor(plane[hole] + 0.5), 0, 255).astype(np.uint8)
        if img.channels == 1:
            out[hole] = filled
        else:
            out[:, :, c][hole] = filled
    return ImageBuffer(out)


def _telea_planes(req: InpaintRequest) -> List[np.ndarray]:
    hole = req.hole.membership
    marcher = _FastMarcher(hole, req.inpaint_radius)
    p = marcher.pad
    padded = [np.pad(plane, p, mode="constant") for plane in _planes(req.image)]
    marcher.march(padded)
    return [np.ascontiguousarray(plane[p:-p, p:-p]) for plane in padded]


def inpaint_telea(req: InpaintRequest) -> InpaintResult:
    """Fill the hole by Telea's fast marching method.

    Pixels are filled in increasing arrival time from the hole boundary.
    Each value is the weighted mean of first-order estimates from already
    known neighbors within ``inpaint_radius``, clamped to their range.

    Args:
        req: Inpainting request

    Returns:
        InpaintResult (always converged)
    """
    hole = req.hole.membership
    fill = int(hole.sum())
    if fill == 0:
        return InpaintResult(req.image, InpaintMethod.TELEA, True, 0, 0)
    planes = _telea_planes(req)
    return InpaintResult(_assemble(req.image, hole, planes), InpaintMethod.TELEA, True, 1, fill)


def _ns_plane(
    plane: np.ndarray,
    hole: np.ndarray,
    iterations: int,
    dt: float,
    tolerance: float,
    diffusion: float
) -> Tuple[np.ndarray, bool, int]:
    u = plane / 255.0
    limit = tolerance / 255.0
    for it in range(1, iterations + 1):
        p = np.pad(u, 1, mode="edge")
        ux = (p[1:-1, 2:] - p[1:-1, :-2]) * 0.5
        uy = (p[2:, 1:-1] - p[:-2, 1:-1]) * 0.5
        lap = p[1:-1, 2:] + p[1:-1, :-2] + p[2:, 1:-1] + p[:-2, 1:-1] - 4.0 * u
        lp = np.pad(lap, 1, mode="edge")
        lx = (lp[1:-1, 2:] - lp[1:-1, :-2]) * 0.5
        ly = (lp[2:, 1:-1] - lp[:-2, 1:-1]) * 0.5
        # smoothness gradient projected on the isophote direction (-uy, ux)
        transport = ly * ux - lx * uy
        v = np.where(hole, np.clip(u + dt * transport, 0.0, 1.0), u)

        q = np.pad(v, 1, mode="edge")
        flux = np.zeros_like(v)
        for d in (q[1:-1, 2:] - v, q[1:-1, :-2] - v, q[2:, 1:-1] - v, q[:-2, 1:-1] - v):
            flux += np.exp(-((d / _EDGE_KAPPA) ** 2)) * d
        v = np.where(hole, np.clip(v + diffusion * flux, 0.0, 1.0), u)

        delta = float(np.abs(v - u)[hole].max())
        u = v
        if delta < limit:
            return u * 255.0, True, it
    return u * 255.0, False, iterations


def inpaint_navier_stokes(
    req: InpaintRequest,
    tolerance: float = Config.NS_TOLERANCE,
    diffusion: float = Config.NS_DIFFUSION
) -> InpaintResult:
    """Fill the hole by isophote transport, warm-started from Telea.

    Each step moves the Laplacian along level lines with step ``ns_dt``
    and follows with a Perona-Malik diffusion step. Channels iterate
    independently until their largest update drops below ``tolerance``
    intensity levels or ``ns_iterations`` is reached; hitting the limit
    is reported, not raised.

    Args:
        req: Inpainting request
        tolerance: Convergence threshold in intensity levels
        diffusion: Diffusion step weight (stable below 0.25)

    Returns:
        InpaintResult with convergence flag and iteration count
    """
    if not 0 < diffusion <= 0.25:
        raise ParameterError(f"diffusion must be in (0, 0.25], got {diffusion}")
    hole = req.hole.membership
    fill = int(hole.sum())
    if fill == 0:
        return InpaintResult(req.image, InpaintMethod.NAVIER_STOKES, True, 0, 0)

    planes = _telea_planes(req)
    refined: List[np.ndarray] = []
    converged = True
    iterations = 0
    for plane in planes:
        out, done, its = _ns_plane(plane, hole, req.ns_iterations, req.ns_dt, tolerance, diffusion)
        refined.append(out)
        converged = converged and done
        iterations = max(iterations, its)
    if not converged:
        logger.debug(f"Navier-Stokes stopped at {iterations} iterations without converging")
    return InpaintResult(
        _assemble(req.image, hole, refined),
        InpaintMethod.NAVIER_STOKES,
        converged,
        iterations,
        fill,
    )


def inpaint(req: InpaintRequest) -> InpaintResult:
    """Dispatch on req.method."""
    if req.method is InpaintMethod.TELEA:
        return inpaint_telea(req)
    return inpaint_navier_stokes(req)


def hole_from_mask(raster: ImageBuffer, dilation: int = Config.HOLE_DILATION) -> PixelRegion:
    """Hole = complement of the mask's 255 region, dilated by ``dilation`` px."""
    if dilation < 0:
        raise ParameterError(f"dilation must be >= 0, got {dilation}")
    hole = raster.data != 255
    if dilation > 0 and hole.any():
        square = np.ones((3, 3), dtype=bool)
        hole = ndimage.binary_dilation(hole, structure=square, iterations=dilation)
    return PixelRegion(hole)


@dataclass(frozen=True)
class InpaintJob:
    """One batch row."""

    image_id: str
    image_path: Path
    mask_path: Path
    method: InpaintMethod
    radius: float
    iterations: int
    dt: float
    dilation: int


def _inpaint_job(job: InpaintJob) -> Tuple[Optional[Tuple[ImageBuffer, Dict[str, object]]], str]:
    try:
        if not job.mask_path.is_file():
            raise DataError(f"Mask not found: {job.mask_path}")
        img = read_image(job.image_path)
        raster = read_mask(job.mask_path)
        if raster.shape != img.shape:
            raise ShapeError(f"Mask {job.mask_path} is {raster.shape}, image is {img.shape}")
        req = InpaintRequest(
            image=img,
            hole=hole_from_mask(raster, job.dilation),
            method=job.method,
            inpaint_radius=job.radius,
            ns_iterations=job.iterations,
            ns_dt=job.dt,
        )
        started = time.perf_counter()
        result = inpaint(req)
        seconds = time.perf_counter() - started
        record = {
            "image_id": job.image_id,
            "method": job.method.value,
            "fill_pixels": result.fill_pixels,
            "seconds": round(seconds, 4),
            "converged": result.converged,
            "iterations": result.iterations,
            "dilation": job.dilation,
        }
        return (result.image, record), ""
    except (DataError, ShapeError, NoBoundaryError) as e:
        return None, str(e)


class DcaInpainter:
    """Inpaint the DCA region of every manifest row."""

    def __init__(
        self,
        method: InpaintMethod = InpaintMethod.TELEA,
        radius: float = Config.INPAINT_RADIUS,
        iterations: int = Config.NS_ITERATIONS,
        dt: float = Config.NS_DT,
        dilation: int = Config.HOLE_DILATION,
        workers: int = 1,
        overwrite: bool = False
    ):
        """Initialize inpainter.

        Args:
            method: Telea or Navier-Stokes
            radius: Telea neighborhood radius (px)
            iterations: Navier-Stokes iteration cap
            dt: Navier-Stokes time step
            dilation: Hole dilation before filling (px)
            workers: Worker processes
            overwrite: Replace existing outputs
        """
        if radius < 1 or iterations < 1 or dt <= 0 or dilation < 0:
            raise ParameterError(
                f"Invalid inpaint parameters: radius={radius}, iterations={iterations}, "
                f"dt={dt}, dilation={dilation}"
            )
        self.method = method
        self.radius = radius
        self.iterations = iterations
        self.dt = dt
        self.dilation = dilation
        self.workers = workers
        self.overwrite = overwrite

    def batch(
        self,
        rows: Sequence[Dict[str, str]],
        masks_dir: Path,
        out_dir: Path
    ) -> Dict[str, object]:
        """Inpaint rows; masks are looked up as ``masks_dir/<image_id>.png``.

        Writes ``<image_id>.png``, ``manifest.csv`` and ``inpaint_report.csv``
        under out_dir, and errors.csv for failed rows.

        Raises:
            BatchError: Empty manifest or no successful row
        """
        if not rows:
            raise BatchError("Empty manifest: nothing to inpaint")
        out_dir = Path(out_dir)
        jobs = []
        for row in rows:
            image_id = row.get("image_id") or Path(row["path"]).stem
            jobs.append(InpaintJob(
                image_id=image_id,
                image_path=Path(row["path"]),
                mask_path=Path(masks_dir) / f"{image_id}.png",
                method=self.method,
                radius=self.radius,
                iterations=self.iterations,
                dt=self.dt,
                dilation=self.dilation,
            ))
        results = map_rows(_inpaint_job, jobs, workers=self.workers)

        report: List[Dict[str, object]] = []
        manifest: List[Dict[str, object]] = []
        errors: List[Dict[str, str]] = []
        for row, job, (result, error) in zip(rows, jobs, results):
            if result is None:
                logger.warning(f"Skipping {job.image_id}: {error}")
                errors.append({"image_id": job.image_id, "error": error})
                continue
            image, record = result
            path = write_image(image, out_dir / f"{job.image_id}.png", overwrite=self.overwrite)
            report.append(record)
            manifest.append({**row, "image_id": job.image_id, "path": str(path)})

        write_errors(out_dir, errors, overwrite=self.overwrite)
        if not report:
            raise BatchError(f"No row succeeded ({len(errors)} failures)")

        report_path = out_dir / "inpaint_report.csv"
        write_csv_rows(report_path, REPORT_COLUMNS, report, overwrite=self.overwrite)
        columns = list(rows[0].keys())
        if "image_id" not in columns:
            columns.insert(0, "image_id")
        write_csv_rows(out_dir / "manifest.csv", columns, manifest, overwrite=self.overwrite)
        logger.info(
            f"Inpainted {len(report)} images with {self.method.value}, {len(errors)} failures"
        )
        return {"written": len(report), "failed": len(errors), "report": str(report_path)}


def inpaint_batch(
    rows: Sequence[Dict[str, str]],
    masks_dir: Path,
    out_dir: Path,
    method: InpaintMethod = InpaintMethod.TELEA,
    **params: object
) -> Dict[str, object]:
    """Inpaint manifest rows with an inpainter built from params."""
    inpainter = DcaInpainter(method=method, **params)  # type: ignore[arg-type]
    return inpainter.batch(rows, masks_dir, out_dir)


def build_parser(prog: Optional[str] = None) -> argparse.ArgumentParser:
    """Argument parser for the inpaint subcommand."""
    parser = ForgeArgumentParser(
        prog=prog,
        description="Remove dark corner artifacts by inpainting",
        epilog="Examples:\n"
               "  %(prog)s --method telea --manifest test.csv --masks-dir masks/ --out-dir telea/\n"
               "  %(prog)s --method ns --manifest test.csv --masks-dir masks/ --out-dir ns/ "
               "--iters 500 --dt 0.05\n",
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument(
        "--method",
        choices=[m.value for m in InpaintMethod],
        required=True,
        help="Inpainting algorithm"
    )
    parser.add_argument("--manifest", type=Path, required=True, help="Input manifest CSV")
    parser.add_argument("--masks-dir", type=Path, required=True, help="Directory of mask PNGs")
    parser.add_argument("--out-dir", type=Path, required=True, help="Output directory")
    parser.add_argument(
        "--radius",
        type=float,
        default=Config.INPAINT_RADIUS,
        help=f"Telea neighborhood radius (default: {Config.INPAINT_RADIUS})"
    )
    parser.add_argument(
        "--iters",
        type=int,
        default=Config.NS_ITERATIONS,
        help=f"Navier-Stokes iterations (default: {Config.NS_ITERATIONS})"
    )
    parser.add_argument(
        "--dt",
        type=float,
        default=Config.NS_DT,
        help=f"Navier-Stokes time step (default: {Config.NS_DT})"
    )
    parser.add_argument(
        "--dilation",
        type=int,
        default=Config.HOLE_DILATION,
        help=f"Hole dilation in px (default: {Config.HOLE_DILATION})"
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
    """Execute a parsed inpaint command."""
    if args.verbose:
        logger.setLevel("DEBUG")
    if not args.masks_dir.is_dir():
        raise DataError(f"Masks directory not found: {args.masks_dir}")
    rows = read_csv_rows(args.manifest, required=["path"])
    inpainter = DcaInpainter(
        method=InpaintMethod(args.method),
        radius=args.radius,
        iterations=args.iters,
        dt=args.dt,
        dilation=args.dilation,
        workers=args.workers,
        overwrite=args.overwrite,
    )
    summary = inpainter.batch(rows, args.masks_dir, args.out_dir)
    print(f"Inpainted {summary['written']} images, {summary['failed']} failed")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    """CLI for DCA inpainting."""
    return run(build_parser().parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
