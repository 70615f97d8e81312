"""Joint end-to-end optimization of selector and editor against a frozen backbone.

Each step samples standard-normal latents, synthesizes the original and
fully edited images, recomputes masks from the original image (segment
variant) or its features (attention variant), blends, and takes one
adaptive-gradient step on the selector and editor parameters only. The
optimizer is implemented here so its moments serialize exactly: a resumed
run is bit-identical to an uninterrupted one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import blending, losses, selectors
from .backbone import ToyBackbone
from .desk import PoolingIdentityEmbedder
from .editors import GlobalDirection, LatentMapper
from .inference import ARTIFACT_FORMAT_VERSION, EditArtifact, save_artifact
from .losses import LossReport, LossWeights
from .selectors import AttentionNet, SegmentSelection
from .tensorio import (
    VersionError,
    manifest_get,
    read_manifest,
    read_tensor,
    write_manifest,
    write_tensor,
)

TRAIN_CHECKPOINT_VERSION = 1
EMA_ALPHA = 0.02
PLATEAU_WINDOW = 500
PLATEAU_RELATIVE = 1e-3

CSV_FIELDS = ("iteration", "clip", "l2", "id", "area", "tv", "total")


@dataclass
class TrainConfig:
    prompt: str
    variant: str = "ss"            # "ss" | "can"
    editor: str = "global"         # "global" | "mapper"
    weights: LossWeights | None = None
    batch_size: int = 3
    max_iterations: int = 20000
    learning_rate: float | None = None
    seed: int = 0
    edit_cutoff: int = 13
    eval_every: int = 1
    checkpoint_every: int = 1000
    threshold_default: float = 0.85
    dual_clip: bool = True
    grad_clip: float = 10.0
    early_stop: bool = False

    def __post_init__(self):
        if self.variant not in ("ss", "can"):
            raise ValueError(f"variant must be 'ss' or 'can', got {self.variant!r}")
        if self.editor not in ("global", "mapper"):
            raise ValueError(f"editor must be 'global' or 'mapper', got {self.editor!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.edit_cutoff < 1:
            raise ValueError("edit_cutoff must be >= 1")
        if not 0 <= self.threshold_default <= 1:
            raise ValueError("threshold_default must lie in [0, 1]")
        if self.weights is None:
            self.weights = LossWeights.full_scale_defaults(self.variant, self.editor)
        if self.learning_rate is None:
            fast = self.variant == "ss" and self.editor == "global"
            self.learning_rate = 0.01 if fast else 0.0005


class AdamOptimizer:
    """Standard bias-corrected adaptive-gradient update with exact state I/O."""

    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = [torch.zeros_like(p) for p in self.params]
        self.v = [torch.zeros_like(p) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    @torch.no_grad()
    def step(self):
        self.step_count += 1
        bc1 = 1 - self.beta1 ** self.step_count
        bc2 = 1 - self.beta2 ** self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m.mul_(self.beta1).add_(g, alpha=1 - self.beta1)
            v.mul_(self.beta2).addcmul_(g, g, value=1 - self.beta2)
            p.add_(-self.lr * (m / bc1) / ((v / bc2).sqrt() + self.eps))


@dataclass
class TrainState:
    iteration: int
    selector: torch.nn.Module
    editor: torch.nn.Module
    optimizer: AdamOptimizer
    generator: torch.Generator
    ema: dict = field(default_factory=dict)
    plateau_ref: float | None = None
    plateau_ref_iteration: int = 0


def build_trainables(config: TrainConfig, backbone, segmenter=None):
    cfg = backbone.config
    if config.edit_cutoff > cfg.layer_count:
        raise ValueError(
            f"edit_cutoff {config.edit_cutoff} exceeds backbone layer count {cfg.layer_count}"
        )
    if config.variant == "ss":
        if segmenter is None:
            raise ValueError("segment-selection training requires a segmenter")
        selector = SegmentSelection(segmenter.class_count, cfg.layer_count)
    else:
        selector = AttentionNet.for_backbone(cfg, config.edit_cutoff, seed=config.seed)
    if config.editor == "global":
        editor = GlobalDirection(cfg.layer_count, cfg.latent_dim, config.edit_cutoff)
    else:
        editor = LatentMapper(cfg.layer_count, cfg.latent_dim, config.edit_cutoff,
                              seed=config.seed)
    return selector, editor


def init_state(config: TrainConfig, backbone, segmenter=None) -> TrainState:
    selector, editor = build_trainables(config, backbone, segmenter)
    params = list(selector.parameters()) + list(editor.parameters())
    optimizer = AdamOptimizer(params, lr=config.learning_rate)
    generator = torch.Generator().manual_seed(config.seed)
    return TrainState(
        iteration=0, selector=selector, editor=editor,
        optimizer=optimizer, generator=generator,
    )


def sample_loss(backbone, selector, editor, z, config: TrainConfig,
                scorer, embedder, segmenter=None):
    """Full objective for one latent sample: synthesize, edit, mask, blend, score."""
    with torch.no_grad():
        w = backbone.map_latent(z)
        image, feats = backbone(w)
    delta = editor.delta(w)
    i_tilde, _ = blending.edited_forward(backbone, w, delta)
    if config.variant == "ss":
        seg = segmenter.segment(image)
        masks = selectors.segment_masks(seg, selector, backbone.config, config.edit_cutoff)
        area = losses.area_loss_ss(selector)
        tv = None
    else:
        masks = selector.masks(feats)
        area = losses.area_loss_can(masks)
        tv = losses.tv_loss(masks)
    i_star, _ = blending.blended_forward(backbone, w, w + delta, masks)
    parts = {
        "clip": losses.clip_loss(i_star, i_tilde, config.prompt, scorer,
                                 dual=config.dual_clip),
        "l2": losses.l2_loss(delta),
        "id": losses.id_loss(i_star, image, embedder),
        "area": area,
    }
    if tv is not None:
        parts["tv"] = tv
    return losses.total_loss(parts, config.weights, config.variant)


def _batch_report(reports, weights: LossWeights, variant: str) -> LossReport:
    n = len(reports)
    clip = sum(r.clip for r in reports) / n
    l2 = sum(r.l2 for r in reports) / n
    ident = sum(r.id for r in reports) / n
    area = sum(r.area for r in reports) / n
    tv = sum(r.tv for r in reports) / n
    total = clip + weights.lambda_l2 * l2 + weights.lambda_id * ident + weights.lambda_area * area
    if variant == "can":
        total += weights.lambda_tv * tv
    return LossReport(clip=clip, l2=l2, id=ident, area=area, tv=tv, total=total)


def train_step(state: TrainState, z_batch, config: TrainConfig, backbone,
               scorer, embedder, segmenter=None):
    """One optimizer step over a latent batch; backbone stays frozen."""
    if len(z_batch) != config.batch_size:
        raise ValueError(f"batch has {len(z_batch)} samples, config says {config.batch_size}")
    totals = []
    reports = []
    for z in z_batch:
        total, report = sample_loss(backbone, selector=state.selector,
                                    editor=state.editor, z=z, config=config,
                                    scorer=scorer, embedder=embedder,
                                    segmenter=segmenter)
        totals.append(total)
        reports.append(report)
    batch_total = sum(totals) / len(totals)
    if not torch.isfinite(batch_total.detach()):
        parts = [f"{r.clip=:.4g} {r.l2=:.4g} {r.id=:.4g} {r.area=:.4g} {r.tv=:.4g}"
                 for r in reports]
        raise RuntimeError(
            f"non-finite loss at iteration {state.iteration + 1}: " + "; ".join(parts)
        )
    state.optimizer.zero_grad()
    batch_total.backward()
    torch.nn.utils.clip_grad_norm_(state.optimizer.params, config.grad_clip)
    state.optimizer.step()
    state.iteration += 1

    report = _batch_report(reports, config.weights, config.variant)
    for key in ("clip", "l2", "id", "area", "tv", "total"):
        value = getattr(report, key)
        prev = state.ema.get(key)
        state.ema[key] = value if prev is None else prev + EMA_ALPHA * (value - prev)
    return state, report


def _float_hex(x: float) -> str:
    return float(x).hex()


def save_train_state(state: TrainState, config: TrainConfig, path: str | Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": TRAIN_CHECKPOINT_VERSION,
        "kind": "train_checkpoint",
        "iteration": state.iteration,
        "adam_step": state.optimizer.step_count,
        "plateau_ref": "none" if state.plateau_ref is None else _float_hex(state.plateau_ref),
        "plateau_ref_iteration": state.plateau_ref_iteration,
    }
    for key, value in sorted(state.ema.items()):
        manifest[f"ema.{key}"] = _float_hex(value)
    write_manifest(path / "manifest.txt", manifest)
    for name, param in state.selector.state_dict().items():
        write_tensor(path / f"selector.{name}.f32", param)
    for name, param in state.editor.state_dict().items():
        write_tensor(path / f"editor.{name}.f32", param)
    for idx, (m, v) in enumerate(zip(state.optimizer.m, state.optimizer.v)):
        write_tensor(path / f"adam_m.{idx}.f32", m)
        write_tensor(path / f"adam_v.{idx}.f32", v)
    rng = state.generator.get_state().numpy().tobytes()
    (path / "rng_state.bin").write_bytes(rng)


def load_train_state(path: str | Path, config: TrainConfig, backbone,
                     segmenter=None) -> TrainState:
    path = Path(path)
    manifest = read_manifest(path / "manifest.txt")
    if manifest_get(manifest, "kind") != "train_checkpoint":
        raise VersionError(f"{path} is not a training checkpoint")
    if int(manifest_get(manifest, "format_version")) != TRAIN_CHECKPOINT_VERSION:
        raise VersionError("unsupported training checkpoint version")
    state = init_state(config, backbone, segmenter)
    state.iteration = int(manifest_get(manifest, "iteration"))
    state.optimizer.step_count = int(manifest_get(manifest, "adam_step"))
    ref = manifest_get(manifest, "plateau_ref")
    state.plateau_ref = None if ref == "none" else float.fromhex(ref)
    state.plateau_ref_iteration = int(manifest_get(manifest, "plateau_ref_iteration"))
    state.ema = {key.split(".", 1)[1]: float.fromhex(value)
                 for key, value in manifest.items() if key.startswith("ema.")}

    selector_state = {name: read_tensor(path / f"selector.{name}.f32")
                      for name in state.selector.state_dict()}
    state.selector.load_state_dict(selector_state)
    editor_state = {name: read_tensor(path / f"editor.{name}.f32")
                    for name in state.editor.state_dict()}
    state.editor.load_state_dict(editor_state)
    for idx in range(len(state.optimizer.params)):
        state.optimizer.m[idx] = read_tensor(path / f"adam_m.{idx}.f32")
        state.optimizer.v[idx] = read_tensor(path / f"adam_v.{idx}.f32")
    raw = (path / "rng_state.bin").read_bytes()
    state.generator.set_state(torch.from_numpy(
        np.frombuffer(raw, dtype=np.uint8).copy()
    ))
    return state


def build_artifact(state: TrainState, config: TrainConfig, backbone,
                   segmenter=None) -> EditArtifact:
    cfg = backbone.config
    return EditArtifact(
        prompt=config.prompt,
        variant=config.variant,
        editor_kind=config.editor,
        edit_cutoff=config.edit_cutoff,
        tau_default=config.threshold_default,
        weights=config.weights,
        backbone_fingerprint=backbone.fingerprint(),
        format_version=ARTIFACT_FORMAT_VERSION,
        layer_count=cfg.layer_count,
        latent_dim=cfg.latent_dim,
        selector=state.selector,
        editor=state.editor,
        segmenter_identity=getattr(segmenter, "identity", "none"),
        learning_rate=config.learning_rate,
    )


def train(config: TrainConfig, backbone: ToyBackbone, scorer, embedder=None,
          segmenter=None, out_dir: str | Path | None = None,
          resume_from: str | Path | None = None) -> EditArtifact:
    """Run the optimization loop and emit a final artifact plus checkpoints."""
    if embedder is None:
        embedder = PoolingIdentityEmbedder()
    if resume_from is not None:
        state = load_train_state(resume_from, config, backbone, segmenter)
    else:
        state = init_state(config, backbone, segmenter)

    out_dir = Path(out_dir) if out_dir is not None else None
    csv_file = None
    csv_writer = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / "losses.csv"
        new_file = not csv_path.exists()
        csv_file = csv_path.open("a", newline="")
        csv_writer = csv.writer(csv_file)
        if new_file:
            csv_writer.writerow(CSV_FIELDS)

    d = backbone.config.latent_dim
    try:
        while state.iteration < config.max_iterations:
            z_batch = [torch.randn(d, generator=state.generator)
                       for _ in range(config.batch_size)]
            state, report = train_step(state, z_batch, config, backbone,
                                       scorer, embedder, segmenter)
            if csv_writer is not None and (
                state.iteration % config.eval_every == 0
                or state.iteration == config.max_iterations
            ):
                csv_writer.writerow([
                    state.iteration,
                    repr(report.clip), repr(report.l2), repr(report.id),
                    repr(report.area), repr(report.tv), repr(report.total),
                ])
            if out_dir is not None and config.checkpoint_every > 0 \
                    and state.iteration % config.checkpoint_every == 0 \
                    and state.iteration < config.max_iterations:
                save_train_state(state, config,
                                 out_dir / "checkpoints" / f"iter_{state.iteration:06d}")
            if config.early_stop and state.iteration % PLATEAU_WINDOW == 0:
                current = state.ema.get("clip")
                if state.plateau_ref is not None and current is not None:
                    improvement = (state.plateau_ref - current) / max(abs(state.plateau_ref), 1e-12)
                    if improvement < PLATEAU_RELATIVE:
                        break
                state.plateau_ref = current
                state.plateau_ref_iteration = state.iteration
    finally:
        if csv_file is not None:
            csv_file.close()

    artifact = build_artifact(state, config, backbone, segmenter)
    if out_dir is not None:
        save_artifact(artifact, out_dir / "artifact")
    return artifact
