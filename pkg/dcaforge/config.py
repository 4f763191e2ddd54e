"""Configuration management for dcaforge."""

import os
from pathlib import Path
from typing import Tuple
from dotenv import load_dotenv

load_dotenv()


def _env_bool(name: str, default: str) -> bool:
    return os.getenv(name, default).lower() == "true"


class Config:
    """Centralized configuration management.

    Every value can be overridden through a ``DCAFORGE_*`` environment
    variable or a ``.env`` file in the working directory. CLI flags take
    precedence over these defaults.
    """

    HOME: Path = Path(
        os.getenv("DCAFORGE_HOME", str(Path.home() / ".dcaforge"))
    ).expanduser()
    LOGS_DIR: Path = HOME / "logs"
    RUNS_DIR: Path = HOME / "runs"

    LOG_LEVEL: str = os.getenv("DCAFORGE_LOG_LEVEL", "INFO")
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    LOG_TO_FILE: bool = _env_bool("DCAFORGE_LOG_TO_FILE", "true")

    # DCA masking
    DARK_THRESHOLD: int = int(os.getenv("DCAFORGE_DARK_THRESHOLD", "40"))
    MIN_DARK_FRACTION: float = float(
        os.getenv("DCAFORGE_MIN_DARK_FRACTION", "0.01")
    )
    FIT_TRIM_FRACTION: float = float(
        os.getenv("DCAFORGE_FIT_TRIM_FRACTION", "0.10")
    )
    MAX_FIT_RESIDUAL: float = float(os.getenv("DCAFORGE_MAX_FIT_RESIDUAL", "3.0"))
    SIZE_THRESHOLDS: str = os.getenv("DCAFORGE_SIZE_THRESHOLDS", "0.01,0.10,0.30")
    MASK_CSV_NAME: str = os.getenv("DCAFORGE_MASK_CSV_NAME", "dca_masks.csv")

    # Inpainting
    INPAINT_RADIUS: float = float(os.getenv("DCAFORGE_INPAINT_RADIUS", "5.0"))
    NS_ITERATIONS: int = int(os.getenv("DCAFORGE_NS_ITERATIONS", "300"))
    NS_DT: float = float(os.getenv("DCAFORGE_NS_DT", "0.1"))
    NS_TOLERANCE: float = float(os.getenv("DCAFORGE_NS_TOLERANCE", "0.01"))
    NS_DIFFUSION: float = float(os.getenv("DCAFORGE_NS_DIFFUSION", "0.2"))
    HOLE_DILATION: int = int(os.getenv("DCAFORGE_HOLE_DILATION", "2"))

    # Evaluation
    DECISION_THRESHOLD: float = float(
        os.getenv("DCAFORGE_DECISION_THRESHOLD", "0.5")
    )
    TRAIN_FRACTION: float = float(os.getenv("DCAFORGE_TRAIN_FRACTION", "0.9"))

    CONTRAST_FACTOR: float = float(os.getenv("DCAFORGE_CONTRAST_FACTOR", "2.0"))
    WORKERS: int = int(os.getenv("DCAFORGE_WORKERS", str(os.cpu_count() or 1)))

    @classmethod
    def size_thresholds(cls) -> Tuple[float, float, float]:
        """Parse SIZE_THRESHOLDS into three floats."""
        parts = [float(p) for p in cls.SIZE_THRESHOLDS.split(",")]
        if len(parts) != 3:
            raise ValueError(
                f"DCAFORGE_SIZE_THRESHOLDS needs three values, got {cls.SIZE_THRESHOLDS!r}"
            )
        return parts[0], parts[1], parts[2]

    @classmethod
    def create_directories(cls) -> None:
        """Create necessary state directories."""
        for directory in [cls.LOGS_DIR, cls.RUNS_DIR]:
            directory.mkdir(parents=True, exist_ok=True)


Config.create_directories()
