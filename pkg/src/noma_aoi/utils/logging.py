"""Loguru wiring for applications using the package."""

from __future__ import annotations

import sys

from loguru import logger

_FORMAT = "<green>{time:HH:mm:ss}</green> | <level>{level: <7}</level> | <cyan>{name}</cyan> - {message}"


def configure_logging(verbose: bool = False) -> None:
    """Enable package logs on a single stderr sink.

    Args:
        verbose: Emit DEBUG records (solver progress) instead of INFO.
    """
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else "INFO", format=_FORMAT)
    logger.enable("noma_aoi")
