"""hybrid-noma-aoi.

Age-of-Information optimal downlink scheduling for a base station that
serves two clients per slot, switching between OMA (one client) and
power-domain NOMA (both clients, SIC at the near client).

The package is a small library (``channel``, ``mdp``, ``solver``,
``policies``, ``evaluation``) plus a Typer CLI in ``noma_aoi.cli``.
"""

from __future__ import annotations

from loguru import logger

__all__ = ["__version__"]

# Keep a single source of truth for the package version.
__version__ = "0.1.0"

# Library code stays silent until an application opts in
# (see ``noma_aoi.utils.logging.configure_logging``).
logger.disable("noma_aoi")
