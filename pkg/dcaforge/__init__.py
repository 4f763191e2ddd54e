"""dcaforge - dark corner artifact toolkit for dermoscopy images.

Detects, synthesizes and removes the dark vignetting corners (DCA) that
dermatoscope optics leave on skin lesion images, quantifies where
classifier heatmaps focus relative to them, and builds the DCA-split
evaluation datasets and metrics. Each module provides both CLI and
programmatic interfaces.

Modules:
    - image_core: Pixel buffers, blur, contrast and region statistics
    - dca_mask: DCA circle detection, masks and size categories
    - dca_synth: Binary and realistic synthetic DCA superimposition
    - inpaint: Telea fast marching and Navier-Stokes inpainting
    - heatmap_quant: RMS contrast and brightness inside/outside the lens
    - eval_dataset: Balanced DCA-split manifests and classification metrics
    - contrast_probe: Contrast-enhanced panels exposing light leakage

Examples:
    >>> from dcaforge import DcaMaskDetector, read_image
    >>> mask = DcaMaskDetector().detect(read_image("ISIC_0000.jpg"))
    >>> mask.circle, mask.area_fraction

    >>> from dcaforge import InpaintRequest, InpaintMethod, hole_from_mask, inpaint
    >>> hole = hole_from_mask(mask.raster)
    >>> result = inpaint(InpaintRequest(image, hole, InpaintMethod.TELEA))

CLI Usage:
    $ dca-forge mask --images-dir images/ --out-dir masks/
    $ dca-forge synth --mode realistic --manifest clean.csv --out-dir synth/ --seed 7
    $ dca-forge inpaint --method ns --manifest test.csv --masks-dir masks/ --out-dir ns/
    $ dca-forge metrics --preds preds.csv
"""

__version__ = "1.0.0"
__license__ = "MIT"

from .image_core import (
    ImageBuffer,
    PixelRegion,
    ExtremaReport,
    read_image,
    write_image,
)
from .dca_mask import (
    Circle,
    DcaMask,
    DcaMaskDetector,
    DcaSizeCategory,
    SizeThresholds,
    categorize,
    detect_dca_circle,
    render_mask,
)
from .dca_synth import (
    CircleSampler,
    DcaSynthesizer,
    RealisticDcaParams,
    SynthMode,
    batch_superimpose,
    superimpose_binary,
    superimpose_realistic,
)
from .inpaint import (
    DcaInpainter,
    InpaintMethod,
    InpaintRequest,
    InpaintResult,
    hole_from_mask,
    inpaint,
    inpaint_batch,
    inpaint_navier_stokes,
    inpaint_telea,
)
from .heatmap_quant import HeatmapQuantifier, RegionStatsRow, aggregate_groups, quantify_heatmap
from .eval_dataset import (
    Label,
    ManifestBuilder,
    MetricsReport,
    PredictionRecord,
    build_manifest,
    compute_metrics,
    experiment_report,
)
from .contrast_probe import contrast_probe

__all__ = [
    "ImageBuffer",
    "PixelRegion",
    "ExtremaReport",
    "read_image",
    "write_image",
    "Circle",
    "DcaMask",
    "DcaMaskDetector",
    "DcaSizeCategory",
    "SizeThresholds",
    "categorize",
    "detect_dca_circle",
    "render_mask",
    "CircleSampler",
    "DcaSynthesizer",
    "RealisticDcaParams",
    "SynthMode",
    "batch_superimpose",
    "superimpose_binary",
    "superimpose_realistic",
    "DcaInpainter",
    "InpaintMethod",
    "InpaintRequest",
    "InpaintResult",
    "hole_from_mask",
    "inpaint",
    "inpaint_batch",
    "inpaint_navier_stokes",
    "inpaint_telea",
    "HeatmapQuantifier",
    "RegionStatsRow",
    "aggregate_groups",
    "quantify_heatmap",
    "Label",
    "ManifestBuilder",
    "MetricsReport",
    "PredictionRecord",
    "build_manifest",
    "compute_metrics",
    "experiment_report",
    "contrast_probe",
]
