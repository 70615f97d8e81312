"""Latent edit producers.

A global direction is one trainable vector per editable layer, shared by
all images. The latent mapper predicts an image-conditioned edit from each
layer's code, with separate networks for the coarse (1-4), medium (5-8)
and fine (9..cutoff) layer groups. Rows beyond the edit cutoff are always
zero.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

LEAKY_SLOPE = 0.2
GROUP_BOUNDS = ((1, 4), (5, 8), (9, None))  # fine group extends to the cutoff
GROUP_NAMES = ("coarse", "medium", "fine")


def layer_group(layer: int) -> int:
    if layer <= 4:
        return 0
    if layer <= 8:
        return 1
    return 2


class GlobalDirection(nn.Module):
    """Single learned direction per editable layer, independent of the image."""

    def __init__(self, layer_count: int, latent_dim: int, edit_cutoff: int):
        super().__init__()
        if not 1 <= edit_cutoff <= layer_count:
            raise ValueError(f"edit cutoff {edit_cutoff} outside 1..{layer_count}")
        self.layer_count = layer_count
        self.latent_dim = latent_dim
        self.edit_cutoff = edit_cutoff
        self.direction = nn.Parameter(torch.zeros(edit_cutoff, latent_dim))

    def delta(self, w: torch.Tensor | None = None) -> torch.Tensor:
        tail = torch.zeros(
            self.layer_count - self.edit_cutoff, self.latent_dim,
            dtype=self.direction.dtype,
        )
        return torch.cat([self.direction, tail], dim=0)


class BiEqualLayer(nn.Module):
    """Two parallel linear maps, each through a leaky rectifier, differenced."""

    def __init__(self, dim: int, generator):
        super().__init__()
        self.w_a = nn.Parameter(torch.randn(dim, dim, generator=generator) / dim ** 0.5)
        self.b_a = nn.Parameter(torch.zeros(dim))
        self.w_b = nn.Parameter(torch.randn(dim, dim, generator=generator) / dim ** 0.5)
        self.b_b = nn.Parameter(torch.zeros(dim))

    def forward(self, x):
        a = F.leaky_relu(F.linear(x, self.w_a, self.b_a), LEAKY_SLOPE)
        b = F.leaky_relu(F.linear(x, self.w_b, self.b_b), LEAKY_SLOPE)
        return a - b


class GroupNet(nn.Module):
    """Four BiEqual layers then a final linear layer with no activation.

    The final layer starts at zero so a fresh mapper is the identity edit.
    """

    def __init__(self, dim: int, generator):
        super().__init__()
        self.layers = nn.ModuleList(BiEqualLayer(dim, generator) for _ in range(4))
        self.final_w = nn.Parameter(torch.zeros(dim, dim))
        self.final_b = nn.Parameter(torch.zeros(dim))

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return F.linear(x, self.final_w, self.final_b)


class LatentMapper(nn.Module):
    """Image-conditioned edit: each code row runs through its group's network."""

    def __init__(self, layer_count: int, latent_dim: int, edit_cutoff: int, seed: int = 0):
        super().__init__()
        if not 1 <= edit_cutoff <= layer_count:
            raise ValueError(f"edit cutoff {edit_cutoff} outside 1..{layer_count}")
        self.layer_count = layer_count
        self.latent_dim = latent_dim
        self.edit_cutoff = edit_cutoff
        g = torch.Generator().manual_seed(seed)
        nets: dict[str, GroupNet] = {}
        for name, (lo, hi) in zip(GROUP_NAMES, GROUP_BOUNDS):
            hi = edit_cutoff if hi is None else min(hi, edit_cutoff)
            if lo <= hi:
                nets[name] = GroupNet(latent_dim, g)
        self.groups = nn.ModuleDict(nets)

    def delta(self, w: torch.Tensor) -> torch.Tensor:
        if w.shape != (self.layer_count, self.latent_dim):
            raise ValueError(
                f"code has shape {tuple(w.shape)}, expected "
                f"({self.layer_count}, {self.latent_dim})"
            )
        rows = []
        for l in range(1, self.layer_count + 1):
            if l > self.edit_cutoff:
                rows.append(torch.zeros(self.latent_dim, dtype=w.dtype))
            else:
                net = self.groups[GROUP_NAMES[layer_group(l)]]
                rows.append(net(w[l - 1]))
        return torch.stack(rows, dim=0)


def scale_delta(delta: torch.Tensor, alpha: float) -> torch.Tensor:
    """Elementwise edit-strength scaling; alpha = -1 reverses the edit."""
    return delta * float(alpha)
