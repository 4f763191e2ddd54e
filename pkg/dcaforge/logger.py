"""Centralized logging configuration."""

import logging
import logging.handlers
from pathlib import Path
from typing import Optional, Union
from .config import Config


def setup_logger(
    name: str,
    log_file: Optional[Union[str, Path]] = None,
    level: str = "INFO"
) -> logging.Logger:
    """Setup logger with console and rotating file handlers.

    Args:
        name: Logger name, also the default log file stem
        log_file: Explicit log file path (default: Config.LOGS_DIR/<name>.log)
        level: Log level name

    Returns:
        Configured logger
    """
    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, level.upper(), logging.INFO))

    if logger.handlers:
        return logger

    formatter = logging.Formatter(Config.LOG_FORMAT)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if not Config.LOG_TO_FILE and log_file is None:
        return logger

    log_path = Config.LOGS_DIR / f"{name}.log" if log_file is None else Path(log_file)

    try:
        log_path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.handlers.RotatingFileHandler(
            log_path,
            maxBytes=10485760,
            backupCount=5
        )
    except OSError as e:
        logger.warning(f"File logging disabled ({log_path}): {e}")
        return logger

    file_handler.setFormatter(formatter)
    logger.addHandler(file_handler)

    return logger
