"""Utility functions across dcaforge."""

import argparse
import csv
import hashlib
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, TypeVar

from .exceptions import DataError, UsageError

T = TypeVar("T")
R = TypeVar("R")

IMAGE_EXTENSIONS = ["png", "jpg", "jpeg"]


def get_file_extension(file_path: Path) -> str:
    """Get file extension without dot."""
    return file_path.suffix.lstrip(".").lower() or "no_extension"


def get_file_hash(file_path: Path, algorithm: str = "sha256") -> str:
    """Calculate file hash."""
    hash_func = hashlib.new(algorithm)
    with open(file_path, "rb") as f:
        for chunk in iter(lambda: f.read(4096), b""):
            hash_func.update(chunk)
    return hash_func.hexdigest()


def load_json(file_path: Path) -> dict:
    """Safely load JSON file."""
    try:
        with open(file_path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"Invalid JSON in {file_path}: {e}")


def save_json(data: Any, file_path: Path, indent: int = 2) -> None:
    """Save data to JSON file."""
    file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=indent, sort_keys=True, default=str)


def get_all_files(
    directory: Path,
    recursive: bool = False,
    extensions: Optional[List[str]] = None
) -> List[Path]:
    """Get all files in directory, lexicographically sorted."""
    directory = Path(directory)
    if not directory.is_dir():
        return []

    pattern = "**/*" if recursive else "*"
    files = [f for f in directory.glob(pattern) if f.is_file()]

    if extensions:
        exts = {ext.lower().lstrip(".") for ext in extensions}
        files = [f for f in files if get_file_extension(f) in exts]

    return sorted(files)


def exclusive_write(path: Path, data: bytes, overwrite: bool = False) -> None:
    """Write bytes, refusing to clobber an existing file.

    Raises:
        DataError: If path exists and overwrite is False
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if overwrite else "xb"
    try:
        with open(path, mode) as f:
            f.write(data)
    except FileExistsError:
        raise DataError(f"Refusing to overwrite existing file: {path}")


def read_csv_rows(
    path: Path,
    required: Sequence[str] = ()
) -> List[Dict[str, str]]:
    """Read a UTF-8 CSV with a header row into dicts.

    Raises:
        DataError: If the file is missing or lacks a required column
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"CSV file not found: {path}")
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        missing = [col for col in required if col not in header]
        if missing:
            raise DataError(f"{path} is missing columns: {', '.join(missing)}")
        return [dict(row) for row in reader]


def write_csv_rows(
    path: Path,
    fieldnames: Sequence[str],
    rows: Iterable[Dict[str, Any]],
    overwrite: bool = False
) -> int:
    """Write dict rows as UTF-8 CSV through exclusive creation.

    Returns:
        Number of data rows written
    """
    lines: List[List[str]] = []
    for row in rows:
        lines.append([_csv_cell(row.get(name)) for name in fieldnames])

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(fieldnames)
    writer.writerows(lines)
    exclusive_write(Path(path), buffer.getvalue().encode("utf-8"), overwrite=overwrite)
    return len(lines)


def _csv_cell(value: Any) -> str:
    if value is None:
        return "NA"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_optional_float(value: str) -> Optional[float]:
    """Inverse of the CSV NA convention."""
    if value is None or value.strip() in ("", "NA"):
        return None
    return float(value)


def map_rows(
    func: Callable[[T], R],
    items: Sequence[T],
    workers: int = 1
) -> List[R]:
    """Order-preserving map over a bounded process pool.

    ``func`` must be a module-level function so it pickles. With
    ``workers <= 1`` (or a single item) everything runs in-process.
    """
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as ex:
        return list(ex.map(func, items))


def write_errors(
    out_dir: Path,
    errors: Sequence[Dict[str, str]],
    overwrite: bool = False
) -> Optional[Path]:
    """Write per-row failures as errors.csv; no file when there are none."""
    if not errors:
        return None
    path = Path(out_dir) / "errors.csv"
    write_csv_rows(path, ["image_id", "error"], errors, overwrite=overwrite)
    return path


def input_digests(values: Iterable[Any]) -> Dict[str, str]:
    """SHA-256 digest of every existing file named, directories one level deep."""
    digests: Dict[str, str] = {}
    for value in values:
        if isinstance(value, (list, tuple)):
            digests.update(input_digests(value))
            continue
        if not isinstance(value, (str, Path)):
            continue
        path = _strip_label(value)
        if path.is_dir():
            for child in get_all_files(path):
                digests[str(child)] = get_file_hash(child)
        elif path.is_file():
            digests[str(path)] = get_file_hash(path)
    return digests


def _strip_label(value: Any) -> Path:
    # "melanoma=/data/mel" style arguments carry a label prefix
    text = str(value)
    if "=" in text and not Path(text).exists():
        text = text.split("=", 1)[1]
    return Path(text)


class ForgeArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises UsageError instead of exiting with 2."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    """Flags shared by every subcommand."""
    parser.add_argument(
        "--overwrite",
        action="store_true",
        help="Replace existing output files instead of failing"
    )
    parser.add_argument(
        "--verbose",
        "-v",
        action="store_true",
        help="Verbose output"
    )
