"""Post-write validation of an EMBD store against its manifest."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .extract import BACKBONES
from .store import StoreFormatError, read_store


@dataclass
class VerifyReport:
    dim: int = 0
    count: int = 0
    issues: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues


def verify_store(path, manifest: dict[str, str] | None = None,
                 backbone: str | None = None) -> VerifyReport:
    """Check structure, id coverage, and finiteness; never raises on a
    well-formed call — problems land in the report's issue list."""
    report = VerifyReport()
    try:
        dim, vectors = read_store(path)
    except (StoreFormatError, OSError) as exc:
        report.issues.append(str(exc))
        return report
    report.dim = dim
    report.count = len(vectors)

    if backbone is not None:
        expected = BACKBONES.get(backbone)
        if expected is None:
            report.issues.append(f"unknown backbone {backbone!r}")
        elif dim != expected:
            report.issues.append(
                f"dim {dim} does not match backbone {backbone} ({expected})")

    for record, (item_id, vec) in enumerate(vectors.items()):
        if not np.all(np.isfinite(vec)):
            report.issues.append(
                f"record {record} ({item_id!r}): non-finite values")

    if manifest is not None:
        missing = sorted(set(manifest) - set(vectors))
        extra = sorted(set(vectors) - set(manifest))
        if missing:
            report.issues.append(f"missing ids: {missing[:10]}")
        if extra:
            report.issues.append(f"ids not in manifest: {extra[:10]}")
    return report
