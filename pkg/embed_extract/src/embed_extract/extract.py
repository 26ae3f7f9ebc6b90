"""Image -> embedding extraction with pretrained torchvision backbones.

inception_v3 contributes its 2048-dim penultimate pooled representation,
vit its 768-dim class-token representation. When pretrained weights are
not downloadable (offline hosts), the backbone falls back to a seeded
random initialization so extraction stays deterministic and the output
format identical; the fallback is recorded on the result.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError
from torchvision import models, transforms

from .store import write_store

_IMAGENET_MEAN = [0.485, 0.456, 0.406]
_IMAGENET_STD = [0.229, 0.224, 0.225]

_FALLBACK_SEED = 0x0E3B  # deterministic weights when downloads are unavailable

#: backbone name -> output dimension
BACKBONES = {"inception_v3": 2048, "vit": 768}


class ExtractError(Exception):
    """Job-level failure: bad manifest, missing backbone, too many bad images."""


@dataclass(frozen=True)
class ExtractJob:
    manifest: dict[str, str]  # item_id -> image path
    backbone: str
    out_path: str
    batch_size: int = 16

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ExtractError(f"unknown backbone {self.backbone!r}; "
                               f"expected one of {sorted(BACKBONES)}")
        if not self.manifest:
            raise ExtractError("manifest is empty")
        if self.batch_size < 1:
            raise ExtractError("batch size must be >= 1")


@dataclass
class ExtractResult:
    out_path: str
    dim: int
    extracted: int
    failures: dict[str, str] = field(default_factory=dict)  # item_id -> reason
    pretrained: bool = True


def read_manifest(path) -> dict[str, str]:
    """Parse ``item_id<TAB>path`` lines; duplicate ids are a validation error."""
    manifest: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if "\t" not in line:
            raise ExtractError(f"{path}:{lineno}: expected 'item_id<TAB>path'")
        item_id, _, image_path = line.partition("\t")
        if item_id in manifest:
            raise ExtractError(f"{path}:{lineno}: duplicate id {item_id!r}")
        manifest[item_id] = image_path
    if not manifest:
        raise ExtractError(f"{path}: manifest has no entries")
    return manifest


def _preprocess(backbone: str) -> transforms.Compose:
    """The backbone's published inference recipe."""
    size, crop = (342, 299) if backbone == "inception_v3" else (256, 224)
    return transforms.Compose([
        transforms.Resize(size),
        transforms.CenterCrop(crop),
        transforms.ToTensor(),
        transforms.Normalize(mean=_IMAGENET_MEAN, std=_IMAGENET_STD),
    ])


def _load_backbone(backbone: str) -> tuple[torch.nn.Module, bool]:
    """Build the headless feature extractor; returns (model, pretrained)."""
    pretrained = True
    if backbone == "inception_v3":
        try:
            model = models.inception_v3(
                weights=models.Inception_V3_Weights.IMAGENET1K_V1)
        except Exception as exc:  # no weight mirror on offline hosts
            warnings.warn(f"pretrained inception_v3 unavailable ({exc}); "
                          "falling back to seeded random initialization")
            torch.manual_seed(_FALLBACK_SEED)
            model = models.inception_v3(weights=None, init_weights=True)
            pretrained = False
        model.fc = torch.nn.Identity()
    else:
        try:
            model = models.vit_b_16(weights=models.ViT_B_16_Weights.IMAGENET1K_V1)
        except Exception as exc:
            warnings.warn(f"pretrained vit_b_16 unavailable ({exc}); "
                          "falling back to seeded random initialization")
            torch.manual_seed(_FALLBACK_SEED)
            model = models.vit_b_16(weights=None)
            pretrained = False
        model.heads = torch.nn.Identity()
    model.eval()
    return model, pretrained


def _load_image(path: str, recipe) -> torch.Tensor:
    with Image.open(path) as img:
        return recipe(img.convert("RGB"))


def extract(job: ExtractJob) -> ExtractResult:
    """Run the job and write the store atomically.

    Unreadable images are quarantined into the failure manifest; if more
    than 10% of the manifest fails, the whole job fails and nothing is
    written.
    """
    recipe = _preprocess(job.backbone)
    dim = BACKBONES[job.backbone]

    tensors: list[torch.Tensor] = []
    ids: list[str] = []
    failures: dict[str, str] = {}
    for item_id, path in job.manifest.items():
        try:
            tensors.append(_load_image(path, recipe))
            ids.append(item_id)
        except (OSError, UnidentifiedImageError, ValueError) as exc:
            failures[item_id] = f"{type(exc).__name__}: {exc}"

    if len(failures) > 0.10 * len(job.manifest):
        raise ExtractError(
            f"{len(failures)}/{len(job.manifest)} images unreadable "
            f"(> 10% threshold): {sorted(failures)[:5]} ...")

    model, pretrained = _load_backbone(job.backbone)
    vectors: dict[str, np.ndarray] = {}
    with torch.inference_mode():
        for start in range(0, len(ids), job.batch_size):
            batch = torch.stack(tensors[start : start + job.batch_size])
            output = model(batch)
            features = output.detach().cpu().numpy().astype(np.float32)
            for offset, item_id in enumerate(ids[start : start + job.batch_size]):
                vectors[item_id] = features[offset]

    write_store(vectors, dim, job.out_path)
    return ExtractResult(
        out_path=str(job.out_path),
        dim=dim,
        extracted=len(vectors),
        failures=failures,
        pretrained=pretrained,
    )
