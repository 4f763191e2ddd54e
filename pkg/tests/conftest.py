"""Pytest configuration and fixtures."""

import os
import shutil
import tempfile
from pathlib import Path

# Must be set before dcaforge.config is imported
_STATE_DIR = Path(tempfile.mkdtemp(prefix="dcaforge_home_"))
os.environ.setdefault("DCAFORGE_HOME", str(_STATE_DIR))
os.environ.setdefault("DCAFORGE_LOG_TO_FILE", "false")
os.environ.setdefault("DCAFORGE_WORKERS", "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from dcaforge.image_core import ImageBuffer  # noqa: E402


def smooth_texture(width, height, seed=0, channels=1):
    """Smooth lesion-like texture with every value in [70, 230]."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    planes = []
    for _ in range(channels):
        fx, fy = rng.uniform(0.5, 2.0, size=2)
        phase = rng.uniform(0, 2 * np.pi, size=2)
        wave = (
            np.sin(2 * np.pi * fx * xx / width + phase[0])
            + np.cos(2 * np.pi * fy * yy / height + phase[1])
        )
        planes.append(np.clip(np.floor(150.0 + 40.0 * wave), 70, 230).astype(np.uint8))
    data = planes[0] if channels == 1 else np.stack(planes, axis=2)
    return ImageBuffer(data)


@pytest.fixture(scope="session")
def test_data_dir():
    """Create a temporary directory for test data."""
    temp = Path(tempfile.mkdtemp(prefix="dcaforge_test_"))
    yield temp
    shutil.rmtree(temp, ignore_errors=True)
    shutil.rmtree(_STATE_DIR, ignore_errors=True)


@pytest.fixture
def clean_temp_dir():
    """Create a clean temporary directory for each test."""
    temp = Path(tempfile.mkdtemp(prefix="dcaforge_clean_"))
    yield temp
    shutil.rmtree(temp, ignore_errors=True)


@pytest.fixture
def texture():
    """Factory for smooth test textures."""
    return smooth_texture
