"""Deterministic desk-scale stand-ins for the pretrained oracle components.

At full scale the scorer, identity embedder and segmenter wrap pretrained
models; these substitutes keep the same contracts (deterministic, unit-norm
embeddings, per-pixel labels) while being cheap and reproducible, so the
whole training/inference stack can be exercised without model downloads.
"""

from __future__ import annotations

import hashlib

import torch
import torch.nn.functional as F


class GridSegmenter:
    """Geometric partition of the image plane into a rows-by-cols grid.

    Ignores image content; the label of a pixel is its grid cell index.
    """

    def __init__(self, rows: int = 2, cols: int = 2):
        if rows < 1 or cols < 1:
            raise ValueError("grid must have at least one cell")
        self.rows = rows
        self.cols = cols
        self.class_count = rows * cols

    @property
    def identity(self) -> str:
        return f"grid:{self.rows}x{self.cols}"

    def segment(self, image: torch.Tensor) -> torch.Tensor:
        h, w = image.shape[-2], image.shape[-1]
        row_idx = torch.div(torch.arange(h) * self.rows, h, rounding_mode="floor")
        col_idx = torch.div(torch.arange(w) * self.cols, w, rounding_mode="floor")
        return row_idx[:, None] * self.cols + col_idx[None, :]


def resolve_segmenter(identity: str):
    """Rebuild a desk segmenter from its identity string (e.g. 'grid:2x2')."""
    kind, _, spec = identity.partition(":")
    if kind == "grid":
        rows, _, cols = spec.partition("x")
        return GridSegmenter(int(rows), int(cols))
    raise ValueError(f"unknown segmenter identity {identity!r}")


def upper_left_quadrant(resolution: int) -> torch.Tensor:
    """Boolean indicator of the upper-left image quadrant."""
    region = torch.zeros(resolution, resolution, dtype=torch.bool)
    region[: resolution // 2, : resolution // 2] = True
    return region


class RegionIntensityScorer:
    """Distance falls as a designated region brightens, rising with spill.

    Per-pixel squared darkness concentrates gradient on the dimmest region
    pixels, so edits must cover the whole region rather than let a few
    bright spots carry the average. The off-region term discounts edits
    whose brightness spills outside the region. Gives toy training runs a
    geometric target an independent oracle can check.
    """

    def __init__(self, region: torch.Tensor, off_weight: float = 0.25):
        self.region = region.bool()
        self.off_weight = off_weight

    def distance(self, image: torch.Tensor, prompt: str):
        region = self.region.to(image.device)
        bright = torch.sigmoid(image)
        darkness = ((1.0 - bright[:, region]) ** 2).mean()
        if self.off_weight == 0.0:
            return darkness
        return darkness + self.off_weight * bright[:, ~region].mean()


def _pooled_embedding(image: torch.Tensor, cells: int = 4) -> torch.Tensor:
    pooled = F.adaptive_avg_pool2d(image[None], (cells, cells))[0]
    flat = pooled.reshape(-1)
    anchor = torch.ones(1, dtype=flat.dtype)
    vec = torch.cat([flat, anchor])
    return vec / torch.linalg.vector_norm(vec)


class PoolingIdentityEmbedder:
    """Downsample-and-normalize identity stub with the unit-norm contract.

    A constant component is appended before normalization so the embedding
    is well defined even for an all-zero image.
    """

    def __init__(self, cells: int = 4):
        self.cells = cells

    def embed(self, image: torch.Tensor) -> torch.Tensor:
        return _pooled_embedding(image, self.cells)


class EmbeddingStubScorer:
    """Distance = 1 - cosine between a pooled image embedding and a text stub.

    The text embedding is a unit vector drawn from a generator seeded by the
    prompt's hash, so scores are stable across processes.
    """

    def __init__(self, cells: int = 4):
        self.cells = cells
        self._dim = cells * cells * 3 + 1

    def text_embedding(self, prompt: str, dtype=torch.float32) -> torch.Tensor:
        digest = hashlib.sha256(prompt.encode("utf-8")).digest()
        seed = int.from_bytes(digest[:8], "little") % (2**63)
        g = torch.Generator().manual_seed(seed)
        vec = torch.randn(self._dim, generator=g).to(dtype)
        return vec / torch.linalg.vector_norm(vec)

    def distance(self, image: torch.Tensor, prompt: str):
        img_vec = _pooled_embedding(image, self.cells)
        txt_vec = self.text_embedding(prompt, dtype=img_vec.dtype)
        return 1.0 - (img_vec * txt_vec).sum()
