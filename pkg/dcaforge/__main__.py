#!/usr/bin/env python3
"""dcaforge CLI entry point.

Provides a unified command-line interface for all dcaforge modules.
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from . import __version__
from .config import Config
from .exceptions import DcaForgeError, UsageError
from .logger import setup_logger
from .utils import ForgeArgumentParser, input_digests, save_json

logger = setup_logger("DcaForge", level=Config.LOG_LEVEL)

# subcommand -> (module, argv prefix for modules with their own subcommands, help)
SUBCOMMANDS: Dict[str, Tuple[str, List[str], str]] = {
    "mask": ("dca_mask", ["detect"], "Detect DCA circles and write masks"),
    "categorize": ("dca_mask", ["categorize"], "Re-bin a circle CSV by DCA size"),
    "synth": ("dca_synth", [], "Superimpose binary or realistic synthetic DCAs"),
    "inpaint": ("inpaint", [], "Remove DCAs by Telea or Navier-Stokes inpainting"),
    "heatmap-stats": ("heatmap_quant", [], "RMS contrast and brightness of heatmaps"),
    "metrics": ("eval_dataset", ["metrics"], "Classification metrics from predictions"),
    "dataset-build": ("eval_dataset", ["build"], "Build the DCA-split balanced manifest"),
    "contrast-probe": ("contrast_probe", [], "Contrast-enhanced light leakage probe"),
}

# Choices the outputs depend on that are not visible in the arguments
RUN_NOTES: Dict[str, Dict[str, str]] = {
    "heatmap-stats": {
        "heatmap_intensity": "color heatmaps reduced to ITU-R 601 luma",
        "brightness_source": "rendered heatmap intensities, not raw activations",
    },
}

OUTPUT_SUFFIXES = ("out", "out_dir")


def build_parser() -> argparse.ArgumentParser:
    parser = ForgeArgumentParser(
        prog="dca-forge",
        description="dcaforge - dark corner artifact toolkit for dermoscopy images",
        epilog="Run 'dca-forge <subcommand> --help' for subcommand-specific help",
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"dcaforge {__version__}"
    )
    subparsers = parser.add_subparsers(
        dest="subcommand",
        title="Available subcommands",
        help="Subcommand to execute"
    )
    for name, (_, _, help_text) in SUBCOMMANDS.items():
        subparsers.add_parser(name, help=help_text, add_help=False)
    return parser


def metadata_path(subcommand: str, args: Optional[argparse.Namespace]) -> Path:
    """Run metadata goes next to the outputs, else under Config.RUNS_DIR."""
    name = f"run_{subcommand.replace('-', '_')}.json"
    out_dir = getattr(args, "out_dir", None)
    if out_dir is not None:
        return Path(out_dir) / name
    out = getattr(args, "out", None)
    if out is not None:
        return Path(out).parent / name
    return Config.RUNS_DIR / f"{subcommand}.json"


def write_run_metadata(
    subcommand: str,
    argv: List[str],
    args: Optional[argparse.Namespace],
    exit_code: int,
    error: Optional[str] = None,
    digests: Optional[Dict[str, str]] = None
) -> Optional[Path]:
    """Echo parameters, version and input digests into a JSON file."""
    params: Dict[str, Any] = vars(args) if args is not None else {}
    metadata = {
        "subcommand": subcommand,
        "argv": argv,
        "parameters": params,
        "version": __version__,
        "input_digests": digests or {},
        "exit_code": exit_code,
        "error": error,
        "notes": RUN_NOTES.get(subcommand, {}),
    }
    path = metadata_path(subcommand, args)
    try:
        save_json(metadata, path)
    except OSError as e:
        logger.warning(f"Could not write run metadata {path}: {e}")
        return None
    logger.debug(f"Run metadata written to {path}")
    return path


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()

    if not argv:
        parser.print_help()
        write_run_metadata("dca-forge", argv, None, 1, "no subcommand given")
        return 1

    subcommand, remaining = argv[0], argv[1:]
    if subcommand.startswith("-"):
        # --help and --version exit through argparse
        try:
            parser.parse_args(argv)
        except UsageError as e:
            write_run_metadata("dca-forge", argv, None, 1, str(e))
            return 1
    if subcommand not in SUBCOMMANDS:
        print(f"Unknown subcommand: {subcommand}", file=sys.stderr)
        parser.print_help(sys.stderr)
        write_run_metadata("dca-forge", argv, None, 1, f"unknown subcommand {subcommand}")
        return 1

    module_name, prefix, _ = SUBCOMMANDS[subcommand]
    module = __import__(f"dcaforge.{module_name}", fromlist=["build_parser", "run"])

    args = None
    code = 0
    error = None
    digests: Dict[str, str] = {}
    try:
        args = module.build_parser(prog=f"dca-forge {subcommand}").parse_args(
            prefix + remaining
        )
        digests = input_digests(
            v for k, v in vars(args).items() if not k.endswith(OUTPUT_SUFFIXES)
        )
        code = module.run(args)
    except UsageError as e:
        code, error = 1, str(e)
        print(f"Error: {e}", file=sys.stderr)
    except (DcaForgeError, OSError) as e:
        code, error = 2, str(e)
        logger.error(f"{subcommand} failed: {e}")
        print(f"Error: {e}", file=sys.stderr)
    finally:
        write_run_metadata(subcommand, argv, args, code, error, digests)
    return code


if __name__ == "__main__":
    sys.exit(main())
