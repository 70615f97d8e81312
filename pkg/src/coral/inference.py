"""Trained edit artifacts: persistence, application, and simple metrics.

An artifact bundles the trained selector and editor parameters with the
prompt/config metadata needed to reapply the edit: variant, editor kind,
edit cutoff, default threshold, loss weights and the fingerprint of the
backbone it was trained against. Serialization is a manifest plus one
float32 blob per parameter, each guarded by a CRC32 recorded in the
manifest; round trips are byte-exact.

Masks are recomputed at apply time from the current image (segment
variant) or the original pass's features (attention variant), never frozen
from training.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import torch
from PIL import Image

from . import desk
from .blending import blended_forward
from .editors import GlobalDirection, LatentMapper, scale_delta
from .losses import LossWeights
from .selectors import AttentionNet, SegmentSelection, apply_threshold, segment_masks
from .tensorio import (
    BlobFormatError,
    VersionError,
    blob_crc32,
    blob_to_tensor,
    ints_csv,
    manifest_get,
    parse_ints_csv,
    read_manifest,
    tensor_to_blob,
    write_manifest,
)

ARTIFACT_FORMAT_VERSION = 1


class ChecksumError(RuntimeError):
    """Raised when a stored blob fails its recorded CRC32."""


class FingerprintError(RuntimeError):
    """Raised when an artifact is applied against a different backbone."""


@dataclass
class EditArtifact:
    prompt: str
    variant: str
    editor_kind: str
    edit_cutoff: int
    tau_default: float
    weights: LossWeights
    backbone_fingerprint: str
    format_version: int
    layer_count: int
    latent_dim: int
    selector: torch.nn.Module
    editor: torch.nn.Module
    segmenter_identity: str = "none"
    learning_rate: float | None = None


@dataclass
class EditResult:
    edited: torch.Tensor
    original: torch.Tensor
    masks: list
    area_fractions: list
    delta: torch.Tensor


def save_artifact(artifact: EditArtifact, path: str | Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest: dict[str, str] = {
        "format_version": str(artifact.format_version),
        "kind": "edit_artifact",
        "prompt": artifact.prompt,
        "variant": artifact.variant,
        "editor_kind": artifact.editor_kind,
        "edit_cutoff": str(artifact.edit_cutoff),
        "tau_default": repr(float(artifact.tau_default)),
        "lambda_l2": repr(float(artifact.weights.lambda_l2)),
        "lambda_id": repr(float(artifact.weights.lambda_id)),
        "lambda_area": repr(float(artifact.weights.lambda_area)),
        "lambda_tv": repr(float(artifact.weights.lambda_tv)),
        "backbone_fingerprint": artifact.backbone_fingerprint,
        "layer_count": str(artifact.layer_count),
        "latent_dim": str(artifact.latent_dim),
        "segmenter_identity": artifact.segmenter_identity,
        "learning_rate": "none" if artifact.learning_rate is None
                         else repr(float(artifact.learning_rate)),
    }
    selector = artifact.selector
    if isinstance(selector, SegmentSelection):
        manifest["selector_kind"] = "segment_selection"
        manifest["class_count"] = str(selector.class_count)
    elif isinstance(selector, AttentionNet):
        manifest["selector_kind"] = "attention"
        manifest["attention_channels"] = ints_csv(selector.channels)
        manifest["attention_resolutions"] = ints_csv(selector.resolutions)
        manifest["attention_hidden"] = str(selector.hidden)
    else:
        raise ValueError(f"unsupported selector type {type(selector).__name__}")

    blobs: dict[str, bytes] = {}
    for name, param in artifact.selector.state_dict().items():
        blobs[f"selector.{name}"] = tensor_to_blob(param)
    for name, param in artifact.editor.state_dict().items():
        blobs[f"editor.{name}"] = tensor_to_blob(param)
    for name, raw in blobs.items():
        (path / f"{name}.f32").write_bytes(raw)
        manifest[f"crc32.{name}"] = blob_crc32(raw)
    write_manifest(path / "manifest.txt", manifest)


def load_artifact(path: str | Path) -> EditArtifact:
    path = Path(path)
    manifest = read_manifest(path / "manifest.txt")
    if manifest_get(manifest, "kind") != "edit_artifact":
        raise VersionError(f"{path} is not an edit artifact")
    version = int(manifest_get(manifest, "format_version"))
    if version != ARTIFACT_FORMAT_VERSION:
        raise VersionError(f"unsupported artifact format version {version}")

    layer_count = int(manifest_get(manifest, "layer_count"))
    latent_dim = int(manifest_get(manifest, "latent_dim"))
    edit_cutoff = int(manifest_get(manifest, "edit_cutoff"))

    selector_kind = manifest_get(manifest, "selector_kind")
    if selector_kind == "segment_selection":
        selector: torch.nn.Module = SegmentSelection(
            int(manifest_get(manifest, "class_count")), layer_count
        )
    elif selector_kind == "attention":
        selector = AttentionNet(
            parse_ints_csv(manifest_get(manifest, "attention_channels")),
            parse_ints_csv(manifest_get(manifest, "attention_resolutions")),
            edit_cutoff,
            hidden=int(manifest_get(manifest, "attention_hidden")),
        )
    else:
        raise VersionError(f"unknown selector kind {selector_kind!r}")

    editor_kind = manifest_get(manifest, "editor_kind")
    if editor_kind == "global":
        editor: torch.nn.Module = GlobalDirection(layer_count, latent_dim, edit_cutoff)
    elif editor_kind == "mapper":
        editor = LatentMapper(layer_count, latent_dim, edit_cutoff)
    else:
        raise VersionError(f"unknown editor kind {editor_kind!r}")

    def load_module(module: torch.nn.Module, prefix: str) -> None:
        state = {}
        for name, param in module.state_dict().items():
            blob_name = f"{prefix}.{name}"
            blob_path = path / f"{blob_name}.f32"
            if not blob_path.exists():
                raise BlobFormatError(f"missing parameter blob {blob_path}")
            raw = blob_path.read_bytes()
            recorded = manifest_get(manifest, f"crc32.{blob_name}")
            if blob_crc32(raw) != recorded:
                raise ChecksumError(f"checksum mismatch for {blob_name}")
            tensor = blob_to_tensor(raw)
            if tensor.shape != param.shape:
                raise BlobFormatError(
                    f"{blob_name}: blob shape {tuple(tensor.shape)} "
                    f"!= expected {tuple(param.shape)}"
                )
            state[name] = tensor
        module.load_state_dict(state)

    load_module(selector, "selector")
    load_module(editor, "editor")

    lr_text = manifest_get(manifest, "learning_rate")
    return EditArtifact(
        prompt=manifest_get(manifest, "prompt"),
        variant=manifest_get(manifest, "variant"),
        editor_kind=editor_kind,
        edit_cutoff=edit_cutoff,
        tau_default=float(manifest_get(manifest, "tau_default")),
        weights=LossWeights(
            lambda_l2=float(manifest_get(manifest, "lambda_l2")),
            lambda_id=float(manifest_get(manifest, "lambda_id")),
            lambda_area=float(manifest_get(manifest, "lambda_area")),
            lambda_tv=float(manifest_get(manifest, "lambda_tv")),
        ),
        backbone_fingerprint=manifest_get(manifest, "backbone_fingerprint"),
        format_version=version,
        layer_count=layer_count,
        latent_dim=latent_dim,
        selector=selector,
        editor=editor,
        segmenter_identity=manifest_get(manifest, "segmenter_identity"),
        learning_rate=None if lr_text == "none" else float(lr_text),
    )


def _resolve_segmenter(artifact: EditArtifact, segmenter):
    if segmenter is not None:
        return segmenter
    if artifact.segmenter_identity in ("none", ""):
        raise ValueError(
            "segment-selection artifact needs a segmenter (none recorded)"
        )
    return desk.resolve_segmenter(artifact.segmenter_identity)


def apply_edit(backbone, z: torch.Tensor, artifact: EditArtifact,
               alpha: float = 1.0, tau: float | None = None,
               layer_toggles=None, segmenter=None) -> EditResult:
    """Apply a trained edit with strength and threshold controls.

    Pure for fixed inputs. An alpha of zero (or an all-zero delta) returns
    the original synthesis output unchanged.
    """
    if artifact.backbone_fingerprint != backbone.fingerprint():
        raise FingerprintError(
            f"artifact was trained against backbone {artifact.backbone_fingerprint}, "
            f"loaded backbone is {backbone.fingerprint()}"
        )
    if tau is None:
        tau = artifact.tau_default
    if not 0 <= tau <= 1:
        raise ValueError(f"threshold {tau} outside [0, 1]")
    alpha = float(alpha)
    if layer_toggles is not None and len(layer_toggles) != artifact.edit_cutoff:
        raise ValueError(
            f"layer_toggles has {len(layer_toggles)} entries, "
            f"expected {artifact.edit_cutoff}"
        )

    with torch.no_grad():
        w = backbone.map_latent(z)
        original, feats = backbone(w)
        delta = scale_delta(artifact.editor.delta(w), alpha)

        if artifact.variant == "ss":
            seg = _resolve_segmenter(artifact, segmenter).segment(original)
            masks = segment_masks(seg, artifact.selector, backbone.config,
                                  artifact.edit_cutoff)
        else:
            masks = artifact.selector.masks(feats)
        masks = apply_threshold(masks, tau)
        if layer_toggles is not None:
            masks = [m if (l > artifact.edit_cutoff or layer_toggles[l - 1])
                     else torch.zeros_like(m)
                     for l, m in enumerate(masks, start=1)]

        if alpha == 0.0 or not bool((delta != 0).any()):
            edited = original
        else:
            edited, _ = blended_forward(backbone, w, w + delta, masks)

        fractions = [float(m.sum() / m.numel()) for m in masks]
    return EditResult(edited=edited, original=original, masks=masks,
                      area_fractions=fractions, delta=delta)


def edit_metrics(result: EditResult, embedder) -> dict:
    """Pixel mean-squared distance, identity cosine, and area fractions."""
    diff = result.edited - result.original
    pixel_l2 = float((diff * diff).mean())
    e_edit = embedder.embed(result.edited)
    e_orig = embedder.embed(result.original)
    similarity = float((e_edit * e_orig).sum())
    return {
        "pixel_l2": pixel_l2,
        "id_similarity": similarity,
        "area_fractions": list(result.area_fractions),
    }


def image_png_bytes(image: torch.Tensor) -> bytes:
    """Encode a (3, H, W) image as 8-bit PNG after clamping to [0, 1]."""
    arr = (image.detach().float().clamp(0, 1) * 255).round().to(torch.uint8)
    arr = arr.permute(1, 2, 0).numpy()
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def mask_png_bytes(mask: torch.Tensor) -> bytes:
    """Encode a (H, W) mask as an 8-bit grayscale PNG."""
    arr = (mask.detach().float().clamp(0, 1) * 255).round().to(torch.uint8).numpy()
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return buf.getvalue()
