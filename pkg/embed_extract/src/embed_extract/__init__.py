"""Offline image feature extraction with pretrained vision backbones.

Writes the binary ``EMBD`` embedding store consumed by the outfit
compatibility engine; the file format is the only contract between the
two packages.
"""

from .extract import BACKBONES, ExtractError, ExtractJob, ExtractResult, extract
from .store import read_store, write_store
from .verify import VerifyReport, verify_store

__all__ = [
    "BACKBONES",
    "ExtractError",
    "ExtractJob",
    "ExtractResult",
    "extract",
    "read_store",
    "write_store",
    "VerifyReport",
    "verify_store",
]
