"""Desk-scale simulator of a cryogenic single-molecule single-photon source."""

from ._backend import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
