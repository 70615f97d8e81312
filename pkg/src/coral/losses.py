"""Training objectives.

Semantic alignment is scored on both the blended image and the fully
edited image so the region selectors learn from a reference that is itself
driven toward the prompt. The remaining terms keep edits small (latent
norm), identity-preserving (embedding cosine), spatially compact (edit
area, one form per selector variant) and smooth (total variation, attention
variant only).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Protocol, runtime_checkable

import torch


@runtime_checkable
class SemanticScorer(Protocol):
    """Distance between an image and a text prompt; deterministic, lower is better."""

    def distance(self, image: torch.Tensor, prompt: str): ...


@runtime_checkable
class IdentityEmbedder(Protocol):
    """Unit-norm identity embedding of an image."""

    def embed(self, image: torch.Tensor) -> torch.Tensor: ...


@dataclass(frozen=True)
class LossWeights:
    lambda_l2: float
    lambda_id: float
    lambda_area: float
    lambda_tv: float = 0.0

    def __post_init__(self):
        for name in ("lambda_l2", "lambda_id", "lambda_area", "lambda_tv"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @staticmethod
    def full_scale_defaults(variant: str, editor: str) -> "LossWeights":
        """Recommended full-scale face-domain weights for each variant/editor pair."""
        table = {
            ("ss", "global"): LossWeights(0.0007, 0.015, 0.10),
            ("ss", "mapper"): LossWeights(0.0002, 0.020, 0.08),
            ("can", "global"): LossWeights(0.0009, 0.08, 0.00009, 0.00003),
            ("can", "mapper"): LossWeights(0.0006, 0.08, 0.00002, 0.00003),
        }
        key = (variant, editor)
        if key not in table:
            raise ValueError(f"no default weights for variant={variant!r} editor={editor!r}")
        return table[key]


@dataclass
class LossReport:
    clip: float
    l2: float
    id: float
    area: float
    tv: float
    total: float


def clip_loss(i_star, i_tilde, prompt: str, scorer: SemanticScorer, dual: bool = True):
    """Semantic alignment: mean of the blended and fully-edited distances.

    With dual off (ablation) only the blended image is scored.
    """
    d_star = scorer.distance(i_star, prompt)
    if not dual:
        return d_star
    d_tilde = scorer.distance(i_tilde, prompt)
    return 0.5 * (d_star + d_tilde)


def l2_loss(delta: torch.Tensor):
    """Squared Euclidean norm of the edit over all layers."""
    return (delta * delta).sum()


def id_loss(i_star, i_orig, embedder: IdentityEmbedder):
    """One minus cosine similarity of identity embeddings; in [0, 2]."""
    e_star = embedder.embed(i_star)
    e_orig = embedder.embed(i_orig)
    return 1.0 - (e_star * e_orig).sum()


def area_loss_ss(selection) -> torch.Tensor:
    """Edit-area penalty for segment selection: sum of all effective weights."""
    logits = selection.logits if hasattr(selection, "logits") else selection
    return torch.sigmoid(logits).sum()


def area_loss_can(masks):
    """Edit-area penalty for attention masks, normalized by each layer's size."""
    total = None
    for m in masks:
        term = m.sum() / m.shape[0]
        total = term if total is None else total + term
    return total


def tv_loss(masks):
    """Squared neighbor differences over interior pairs, both directions."""
    total = None
    for m in masks:
        term = ((m[1:, :] - m[:-1, :]) ** 2).sum() + ((m[:, 1:] - m[:, :-1]) ** 2).sum()
        total = term if total is None else total + term
    return total


def total_loss(parts: Mapping[str, object], weights: LossWeights, variant: str):
    """Combine parts per the variant's objective.

    Returns the total (tensor if any part is a tensor) and a float report.
    Segment selection has no smoothness term; supplying one is an error, as
    is omitting it for the attention variant.
    """
    if variant not in ("ss", "can"):
        raise ValueError(f"unknown variant {variant!r}")
    required = {"clip", "l2", "id", "area"}
    missing = required - parts.keys()
    if missing:
        raise ValueError(f"missing loss parts: {sorted(missing)}")
    if variant == "ss" and "tv" in parts and parts["tv"] is not None:
        raise ValueError("segment-selection objective has no tv term")
    if variant == "can" and parts.get("tv") is None:
        raise ValueError("attention-variant objective requires a tv term")

    clip, l2, ident, area = parts["clip"], parts["l2"], parts["id"], parts["area"]
    total = (clip + weights.lambda_l2 * l2 + weights.lambda_id * ident
             + weights.lambda_area * area)
    tv = parts.get("tv")
    if variant == "can":
        total = total + weights.lambda_tv * tv

    def as_float(x):
        return float(x.detach()) if isinstance(x, torch.Tensor) else float(x)

    report = LossReport(
        clip=as_float(clip), l2=as_float(l2), id=as_float(ident),
        area=as_float(area), tv=as_float(tv) if tv is not None else 0.0,
        total=as_float(total),
    )
    return total, report
