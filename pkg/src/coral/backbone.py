"""Progressive synthesis backbone.

A deterministic toy generator stands in for a pretrained full-scale model:
a latent mapper (shared feed-forward map plus per-layer offsets) feeds L
convolutional blocks that grow a learned constant input up to the output
resolution, with skip RGB heads summed into the image. Any object exposing
the same surface (``config``, ``map_latent``, ``run_block``, ``rgb_image``,
``constant_input``, ``fingerprint``) can back the editing stack, so
full-scale pretrained weights plug in behind the same contract. Adapters
wrapping generators with per-block noise must freeze the noise buffers so
parallel passes see identical noise.

Checkpoints are directories holding a key/value manifest plus one float32
blob per parameter tensor (see tensorio).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

from .tensorio import (
    BlobFormatError,
    VersionError,
    ints_csv,
    manifest_get,
    parse_ints_csv,
    read_manifest,
    read_tensor,
    tensor_to_blob,
    write_manifest,
    write_tensor,
)

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class BackboneConfig:
    """Static architecture of a progressive generator."""

    layer_count: int
    latent_dim: int
    resolutions: tuple[int, ...]   # output resolution of each block, layers 1..L
    channels: tuple[int, ...]      # output channels of each block, layers 1..L
    rgb_layers: tuple[int, ...]    # layers with an RGB head (1-based)
    base_size: int = 4
    base_channels: int = field(default=0)  # 0 means channels[0]

    def __post_init__(self):
        if len(self.resolutions) != self.layer_count:
            raise ValueError("resolutions must list one entry per layer")
        if len(self.channels) != self.layer_count:
            raise ValueError("channels must list one entry per layer")
        for a, b in zip(self.resolutions, self.resolutions[1:]):
            if b < a:
                raise ValueError("resolutions must be non-decreasing")
        if self.resolutions[0] not in (self.base_size, self.base_size * 2):
            raise ValueError("first block resolution must match the base tensor")
        for l in self.rgb_layers:
            if not 1 <= l <= self.layer_count:
                raise ValueError(f"rgb layer {l} outside 1..{self.layer_count}")
        if self.base_channels == 0:
            object.__setattr__(self, "base_channels", self.channels[0])

    @property
    def image_resolution(self) -> int:
        return self.resolutions[-1]

    def in_channels(self, layer: int) -> int:
        return self.base_channels if layer == 1 else self.channels[layer - 2]


def toy_config() -> BackboneConfig:
    return BackboneConfig(
        layer_count=6,
        latent_dim=32,
        resolutions=(4, 4, 8, 8, 16, 32),
        channels=(16,) * 6,
        rgb_layers=(2, 4, 6),
    )


def full_scale_config() -> BackboneConfig:
    """18-block, 1024x1024 configuration matching pretrained face generators."""
    resolutions = tuple(4 * 2 ** ((l - 1) // 2) for l in range(1, 19))
    per_res = {4: 512, 8: 512, 16: 512, 32: 512, 64: 512,
               128: 256, 256: 128, 512: 64, 1024: 32}
    channels = tuple(per_res[r] for r in resolutions)
    return BackboneConfig(
        layer_count=18,
        latent_dim=512,
        resolutions=resolutions,
        channels=channels,
        rgb_layers=tuple(range(2, 19, 2)),
    )


class SynthesisBlock(nn.Module):
    """Modulated 3x3 conv: input scaled per-channel by an affine map of w,
    then conv + SiLU, then optional 2x nearest upsample."""

    def __init__(self, in_channels, out_channels, latent_dim, upsample, generator):
        super().__init__()
        g = generator
        self.upsample = upsample
        self.affine_w = nn.Parameter(
            torch.randn(in_channels, latent_dim, generator=g) / latent_dim ** 0.5
        )
        self.affine_b = nn.Parameter(torch.ones(in_channels))
        self.conv_w = nn.Parameter(
            torch.randn(out_channels, in_channels, 3, 3, generator=g)
            / (in_channels * 9) ** 0.5
        )
        self.conv_b = nn.Parameter(torch.zeros(out_channels))

    def forward(self, f, w_row):
        style = F.linear(w_row, self.affine_w, self.affine_b)
        x = f * style[:, None, None]
        x = F.conv2d(x[None], self.conv_w, self.conv_b, padding=1)[0]
        x = F.silu(x)
        if self.upsample:
            x = F.interpolate(x[None], scale_factor=2, mode="nearest")[0]
        return x


class RgbHead(nn.Module):
    def __init__(self, in_channels, generator):
        super().__init__()
        self.weight = nn.Parameter(
            torch.randn(3, in_channels, 1, 1, generator=generator) / in_channels ** 0.5
        )
        self.bias = nn.Parameter(torch.zeros(3))

    def forward(self, f):
        return F.conv2d(f[None], self.weight, self.bias)[0]


class ToyBackbone(nn.Module):
    """Deterministic small-scale generator (frozen; never trained here).

    Instances are immutable after construction: all parameters have
    requires_grad=False, and the forward pass is pure, so concurrent calls
    are safe.
    """

    def __init__(self, config: BackboneConfig | None = None, seed: int = 0,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        self.config = config or toy_config()
        self.seed = seed
        cfg = self.config
        g = torch.Generator().manual_seed(seed)
        d = cfg.latent_dim

        self.mapping_w1 = nn.Parameter(torch.randn(d, d, generator=g) / d ** 0.5)
        self.mapping_b1 = nn.Parameter(torch.zeros(d))
        self.mapping_w2 = nn.Parameter(torch.randn(d, d, generator=g) / d ** 0.5)
        self.mapping_b2 = nn.Parameter(torch.zeros(d))
        self.layer_offsets = nn.Parameter(
            torch.randn(cfg.layer_count, d, generator=g) * 0.1
        )
        self.const = nn.Parameter(
            torch.randn(cfg.base_channels, cfg.base_size, cfg.base_size, generator=g)
        )

        blocks = []
        for l in range(1, cfg.layer_count + 1):
            in_res = cfg.base_size if l == 1 else cfg.resolutions[l - 2]
            blocks.append(SynthesisBlock(
                cfg.in_channels(l), cfg.channels[l - 1], d,
                upsample=cfg.resolutions[l - 1] > in_res, generator=g,
            ))
        self.blocks = nn.ModuleList(blocks)
        self.rgb_heads = nn.ModuleDict({
            str(l): RgbHead(cfg.channels[l - 1], generator=g)
            for l in sorted(cfg.rgb_layers)
        })

        self.to(dtype)
        self._dtype = dtype
        for p in self.parameters():
            p.requires_grad_(False)

    @property
    def latent_dim(self) -> int:
        return self.config.latent_dim

    @property
    def num_layers(self) -> int:
        return self.config.layer_count

    def constant_input(self) -> torch.Tensor:
        return self.const

    def check_code(self, w: torch.Tensor, name: str = "w") -> torch.Tensor:
        cfg = self.config
        if w.shape != (cfg.layer_count, cfg.latent_dim):
            raise ValueError(
                f"{name} has shape {tuple(w.shape)}, expected "
                f"({cfg.layer_count}, {cfg.latent_dim})"
            )
        if not torch.isfinite(w.detach()).all():
            raise ValueError(f"{name} contains non-finite entries")
        return w.to(self._dtype)

    def map_latent(self, z: torch.Tensor) -> torch.Tensor:
        if z.shape != (self.config.latent_dim,):
            raise ValueError(
                f"latent has shape {tuple(z.shape)}, expected ({self.config.latent_dim},)"
            )
        z = z.to(self._dtype)
        h = F.silu(F.linear(z, self.mapping_w1, self.mapping_b1))
        h = F.linear(h, self.mapping_w2, self.mapping_b2)
        return h[None, :] + self.layer_offsets

    def run_block(self, layer: int, f: torch.Tensor, w_row: torch.Tensor) -> torch.Tensor:
        return self.blocks[layer - 1](f, w_row)

    def rgb_image(self, layer: int, f: torch.Tensor) -> torch.Tensor | None:
        """RGB contribution of layer ``layer`` upsampled to image resolution."""
        key = str(layer)
        if key not in self.rgb_heads:
            return None
        out = self.rgb_heads[key](f)
        top = self.config.image_resolution
        if out.shape[-1] != top:
            out = F.interpolate(out[None], size=(top, top), mode="nearest")[0]
        return out

    def forward(self, w: torch.Tensor):
        """Run the full synthesis pass: returns (image, per-layer features)."""
        w = self.check_code(w)
        f = self.const
        top = self.config.image_resolution
        image = torch.zeros(3, top, top, dtype=self._dtype)
        features = []
        for l in range(1, self.config.layer_count + 1):
            f = self.run_block(l, f, w[l - 1])
            features.append(f)
            rgb = self.rgb_image(l, f)
            if rgb is not None:
                image = image + rgb
        return image, features

    def fingerprint(self) -> str:
        cached = getattr(self, "_fingerprint", None)
        if cached is None:
            h = hashlib.sha256()
            h.update(repr(self.config).encode())
            for name, param in sorted(self.state_dict().items()):
                h.update(name.encode())
                h.update(tensor_to_blob(param.float()))
            cached = h.hexdigest()[:16]
            self._fingerprint = cached
        return cached


def save_checkpoint(backbone: ToyBackbone, path: str | Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    cfg = backbone.config
    write_manifest(path / "manifest.txt", {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": "backbone",
        "layer_count": cfg.layer_count,
        "latent_dim": cfg.latent_dim,
        "resolutions": ints_csv(cfg.resolutions),
        "channels": ints_csv(cfg.channels),
        "rgb_layers": ints_csv(sorted(cfg.rgb_layers)),
        "base_size": cfg.base_size,
        "base_channels": cfg.base_channels,
    })
    for name, param in backbone.state_dict().items():
        write_tensor(path / f"{name}.f32", param.float())


def load_pretrained(path: str | Path, expected_layers: int | None = None,
                    dtype: torch.dtype = torch.float32) -> ToyBackbone:
    """Load a backbone checkpoint directory; forward reproduces the source."""
    path = Path(path)
    manifest = read_manifest(path / "manifest.txt")
    if manifest_get(manifest, "kind") != "backbone":
        raise VersionError(f"{path} is not a backbone checkpoint")
    version = int(manifest_get(manifest, "format_version"))
    if version != CHECKPOINT_FORMAT_VERSION:
        raise VersionError(f"unsupported checkpoint format version {version}")
    config = BackboneConfig(
        layer_count=int(manifest_get(manifest, "layer_count")),
        latent_dim=int(manifest_get(manifest, "latent_dim")),
        resolutions=parse_ints_csv(manifest_get(manifest, "resolutions")),
        channels=parse_ints_csv(manifest_get(manifest, "channels")),
        rgb_layers=parse_ints_csv(manifest_get(manifest, "rgb_layers")),
        base_size=int(manifest_get(manifest, "base_size")),
        base_channels=int(manifest_get(manifest, "base_channels")),
    )
    if expected_layers is not None and config.layer_count != expected_layers:
        raise VersionError(
            f"checkpoint has {config.layer_count} layers, expected {expected_layers}"
        )
    backbone = ToyBackbone(config, seed=0, dtype=torch.float32)
    state = {}
    for name, param in backbone.state_dict().items():
        tensor = read_tensor(path / f"{name}.f32")
        if tensor.shape != param.shape:
            raise BlobFormatError(
                f"parameter {name}: blob shape {tuple(tensor.shape)} "
                f"!= expected {tuple(param.shape)}"
            )
        state[name] = tensor
    backbone.load_state_dict(state)
    backbone.to(dtype)
    backbone._dtype = dtype
    for p in backbone.parameters():
        p.requires_grad_(False)
    return backbone
