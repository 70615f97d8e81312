"""Region selectors producing one soft spatial mask per generator layer.

Two variants: segment selection weights the classes of a pluggable
segmenter with a trainable class-by-layer confidence matrix; the attention
network predicts each layer's mask directly from that layer's features
with two 1x1 convolutions. Both emit zero masks beyond the edit cutoff.
"""

from __future__ import annotations

from typing import Protocol, runtime_checkable

import torch
import torch.nn.functional as F
from torch import nn

ATTENTION_HIDDEN_CHANNELS = 32


@runtime_checkable
class Segmenter(Protocol):
    """Pluggable per-pixel classifier; deterministic for a fixed input."""

    class_count: int

    def segment(self, image: torch.Tensor) -> torch.Tensor:
        """Return integer class labels of shape (H, W) for an image (3, H, W)."""
        ...


class SegmentSelection(nn.Module):
    """Trainable class-by-layer selection logits; effective weights are sigmoid."""

    def __init__(self, class_count: int, layer_count: int, init_logit: float = 0.0):
        super().__init__()
        self.class_count = class_count
        self.layer_count = layer_count
        self.logits = nn.Parameter(
            torch.full((class_count, layer_count), float(init_logit))
        )

    def weights(self) -> torch.Tensor:
        return torch.sigmoid(self.logits)


def segment_masks(seg_map: torch.Tensor, selection, config, edit_cutoff: int):
    """Convert a segmentation map into per-layer masks.

    The full-resolution soft map takes each pixel's class weight from the
    selection matrix, then is area-average pooled down to every layer's
    feature resolution. Layers beyond the cutoff get zero masks.
    """
    logits = selection.logits if isinstance(selection, SegmentSelection) else selection
    class_count, layer_count = logits.shape
    if layer_count != config.layer_count:
        raise ValueError(
            f"selection matrix covers {layer_count} layers, backbone has {config.layer_count}"
        )
    if seg_map.dim() != 2:
        raise ValueError("segmentation map must be a 2-D label grid")
    labels = seg_map.long()
    if labels.numel() and int(labels.max()) >= class_count:
        raise ValueError(
            f"segment label {int(labels.max())} outside 0..{class_count - 1}"
        )
    if labels.numel() and int(labels.min()) < 0:
        raise ValueError("segment labels must be non-negative")
    full_res = seg_map.shape[0]
    if full_res < max(config.resolutions):
        raise ValueError("segmentation resolution below a layer resolution")

    weights = torch.sigmoid(logits)
    masks = []
    for l in range(1, config.layer_count + 1):
        res = config.resolutions[l - 1]
        if l > edit_cutoff:
            masks.append(torch.zeros(res, res, dtype=weights.dtype))
            continue
        soft = weights[:, l - 1][labels]
        pooled = F.adaptive_avg_pool2d(soft[None, None], (res, res))[0, 0]
        masks.append(pooled)
    return masks


class AttentionNet(nn.Module):
    """Per-layer mask predictor: sigmoid(conv1x1(relu(conv1x1(f)))).

    Each layer's head sees only that layer's features. Weights start small
    and biases at zero so initial masks sit near 0.5 on both sides of the
    sigmoid.
    """

    def __init__(self, channels, resolutions, edit_cutoff: int, seed: int = 0,
                 hidden: int = ATTENTION_HIDDEN_CHANNELS):
        super().__init__()
        self.channels = tuple(channels)
        self.resolutions = tuple(resolutions)
        self.layer_count = len(self.channels)
        if len(self.resolutions) != self.layer_count:
            raise ValueError("channels and resolutions must cover the same layers")
        if not 1 <= edit_cutoff <= self.layer_count:
            raise ValueError(f"edit cutoff {edit_cutoff} outside 1..{self.layer_count}")
        self.edit_cutoff = edit_cutoff
        self.hidden = hidden
        g = torch.Generator().manual_seed(seed)
        heads = []
        for l in range(1, edit_cutoff + 1):
            c = self.channels[l - 1]
            head = nn.ParameterDict({
                "conv1_w": nn.Parameter(torch.randn(hidden, c, 1, 1, generator=g) * 0.2 / c ** 0.5),
                "conv1_b": nn.Parameter(torch.zeros(hidden)),
                "conv2_w": nn.Parameter(torch.randn(1, hidden, 1, 1, generator=g) * 0.2 / hidden ** 0.5),
                "conv2_b": nn.Parameter(torch.zeros(1)),
            })
            heads.append(head)
        self.heads = nn.ModuleList(heads)

    @classmethod
    def for_backbone(cls, config, edit_cutoff: int, seed: int = 0,
                     hidden: int = ATTENTION_HIDDEN_CHANNELS) -> "AttentionNet":
        return cls(config.channels, config.resolutions, edit_cutoff, seed, hidden)

    def layer_mask(self, layer: int, feature: torch.Tensor) -> torch.Tensor:
        head = self.heads[layer - 1]
        if feature.shape[0] != head["conv1_w"].shape[1]:
            raise ValueError(
                f"layer {layer} feature has {feature.shape[0]} channels, "
                f"head expects {head['conv1_w'].shape[1]}"
            )
        x = F.conv2d(feature[None], head["conv1_w"], head["conv1_b"])
        x = F.relu(x)
        x = F.conv2d(x, head["conv2_w"], head["conv2_b"])
        return torch.sigmoid(x)[0, 0]

    def masks(self, features):
        if len(features) != self.layer_count:
            raise ValueError(
                f"expected {self.layer_count} feature maps, got {len(features)}"
            )
        out = []
        for l in range(1, self.layer_count + 1):
            if l > self.edit_cutoff:
                res = self.resolutions[l - 1]
                out.append(torch.zeros(res, res, dtype=features[l - 1].dtype))
            else:
                out.append(self.layer_mask(l, features[l - 1]))
        return out


def attention_masks(features, params: AttentionNet):
    return params.masks(features)


def apply_threshold(masks, tau: float):
    """Zero mask entries below tau; entries at or above keep their soft value."""
    if not 0 <= tau <= 1:
        raise ValueError(f"threshold {tau} outside [0, 1]")
    out = []
    for m in masks:
        keep = (m >= tau).to(m.dtype)
        out.append(m * keep)
    return out
