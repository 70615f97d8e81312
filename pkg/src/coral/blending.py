"""Multi-layer feedforwarded feature blending and the single-layer baseline.

The blended pass runs every block twice on the shared blended upstream
feature, once with the original code and once with the edited code, and
mixes the two outputs with that layer's mask. A zero mask at a layer then
feeds the already-edited upstream features forward instead of discarding
them, which is the property the single-layer baseline lacks.

All functions here are pure over immutable inputs and safe to call
concurrently.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F


def validate_mask_stack(backbone, masks) -> None:
    cfg = backbone.config
    if len(masks) != cfg.layer_count:
        raise ValueError(f"mask stack has {len(masks)} layers, expected {cfg.layer_count}")
    for l, mask in enumerate(masks, start=1):
        res = cfg.resolutions[l - 1]
        if mask.shape != (res, res):
            raise ValueError(
                f"mask at layer {l} has shape {tuple(mask.shape)}, expected ({res}, {res})"
            )
        detached = mask.detach()
        if detached.numel() and (detached.min() < 0 or detached.max() > 1):
            raise ValueError(f"mask at layer {l} has entries outside [0, 1]")


def blended_forward(backbone, w1: torch.Tensor, w2: torch.Tensor, masks):
    """Blend the edited and original codes with per-layer spatial masks.

    Per layer, both code rows are applied to the blended upstream feature;
    the mask (broadcast across channels) picks edited content where it is
    high and feedforwarded content where it is low. Returns the image from
    the blended stream's RGB heads and all blended feature maps.
    """
    w1 = backbone.check_code(w1, "w1")
    w2 = backbone.check_code(w2, "w2")
    validate_mask_stack(backbone, masks)
    cfg = backbone.config
    f_star = backbone.constant_input()
    top = cfg.image_resolution
    image = torch.zeros(3, top, top, dtype=f_star.dtype)
    features = []
    for l in range(1, cfg.layer_count + 1):
        f_hat_edit = backbone.run_block(l, f_star, w2[l - 1])
        f_hat_orig = backbone.run_block(l, f_star, w1[l - 1])
        m = masks[l - 1].to(f_star.dtype)[None, :, :]
        f_star = m * f_hat_edit + (1 - m) * f_hat_orig
        features.append(f_star)
        rgb = backbone.rgb_image(l, f_star)
        if rgb is not None:
            image = image + rgb
    return image, features


def edited_forward(backbone, w: torch.Tensor, delta: torch.Tensor):
    """Plain forward of the edited code w + delta (the fully edited image)."""
    w = backbone.check_code(w, "w")
    if delta.shape != w.shape:
        raise ValueError(
            f"delta has shape {tuple(delta.shape)}, expected {tuple(w.shape)}"
        )
    return backbone(w + delta.to(w.dtype))


def feat_blend_forward(backbone, w1: torch.Tensor, w2: torch.Tensor,
                       mask: torch.Tensor, blend_layer: int) -> torch.Tensor:
    """Single-layer blending baseline: edit everything up to one layer.

    Two independent pathways (edited code, original code) run up to
    blend_layer, where their features are mixed once by the mask and the
    partial RGB accumulations are mixed by the mask upsampled to image
    resolution; the merged stream then continues with the original code.
    Edits introduced before the blend layer are discarded wherever the
    mask is low, because the original pathway never saw them.
    """
    w1 = backbone.check_code(w1, "w1")
    w2 = backbone.check_code(w2, "w2")
    cfg = backbone.config
    if not 1 <= blend_layer <= cfg.layer_count:
        raise ValueError(f"blend_layer {blend_layer} outside 1..{cfg.layer_count}")
    res = cfg.resolutions[blend_layer - 1]
    if mask.shape != (res, res):
        raise ValueError(
            f"mask has shape {tuple(mask.shape)}, expected ({res}, {res})"
        )
    detached = mask.detach()
    if detached.numel() and (detached.min() < 0 or detached.max() > 1):
        raise ValueError("mask has entries outside [0, 1]")

    top = cfg.image_resolution
    dtype = backbone.constant_input().dtype
    f_edit = backbone.constant_input()
    f_orig = backbone.constant_input()
    img_edit = torch.zeros(3, top, top, dtype=dtype)
    img_orig = torch.zeros(3, top, top, dtype=dtype)
    for l in range(1, blend_layer):
        f_edit = backbone.run_block(l, f_edit, w2[l - 1])
        f_orig = backbone.run_block(l, f_orig, w1[l - 1])
        rgb = backbone.rgb_image(l, f_edit)
        if rgb is not None:
            img_edit = img_edit + rgb
            img_orig = img_orig + backbone.rgb_image(l, f_orig)

    m = mask.to(dtype)[None, :, :]
    f_edit = backbone.run_block(blend_layer, f_edit, w2[blend_layer - 1])
    f_orig = backbone.run_block(blend_layer, f_orig, w1[blend_layer - 1])
    f = m * f_edit + (1 - m) * f_orig
    m_img = m if m.shape[-1] == top else F.interpolate(m[None], size=(top, top), mode="nearest")[0]
    image = m_img * img_edit + (1 - m_img) * img_orig
    rgb = backbone.rgb_image(blend_layer, f)
    if rgb is not None:
        image = image + rgb

    for l in range(blend_layer + 1, cfg.layer_count + 1):
        f = backbone.run_block(l, f, w1[l - 1])
        rgb = backbone.rgb_image(l, f)
        if rgb is not None:
            image = image + rgb
    return image
