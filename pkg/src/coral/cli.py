"""Command-line entry points: train an edit, apply it, or serve artifacts.

Training config files are UTF-8 ``key = value`` text mirroring the
TrainConfig fields; flags override file values. Without --backbone the
built-in toy backbone (seed 0) is used, which is also what `coral serve`
falls back to.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path


from .backbone import ToyBackbone, load_pretrained, save_checkpoint
from .desk import EmbeddingStubScorer, GridSegmenter, PoolingIdentityEmbedder, \
    RegionIntensityScorer, upper_left_quadrant
from .inference import apply_edit, edit_metrics, image_png_bytes, load_artifact, mask_png_bytes
from .losses import LossWeights
from .service import latent_from_seed
from .tensorio import read_manifest
from .trainer import TrainConfig, train

CONFIG_FIELD_TYPES = {
    "prompt": str,
    "variant": str,
    "editor": str,
    "batch_size": int,
    "max_iterations": int,
    "learning_rate": float,
    "seed": int,
    "edit_cutoff": int,
    "eval_every": int,
    "checkpoint_every": int,
    "threshold_default": float,
    "dual_clip": lambda s: s.lower() in ("1", "true", "yes", "on"),
    "grad_clip": float,
    "early_stop": lambda s: s.lower() in ("1", "true", "yes", "on"),
}
WEIGHT_FIELDS = ("lambda_l2", "lambda_id", "lambda_area", "lambda_tv")


def load_train_config(path: str | Path | None, overrides: dict) -> TrainConfig:
    values: dict = {}
    weight_values: dict = {}
    if path is not None:
        for key, raw in read_manifest(path).items():
            if key in WEIGHT_FIELDS:
                weight_values[key] = float(raw)
            elif key in CONFIG_FIELD_TYPES:
                values[key] = CONFIG_FIELD_TYPES[key](raw)
            else:
                raise SystemExit(f"unknown config key {key!r} in {path}")
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    if "prompt" not in values:
        raise SystemExit("a prompt is required (--prompt or config file)")
    if weight_values:
        weight_values.setdefault("lambda_tv", 0.0)
        missing = [k for k in WEIGHT_FIELDS[:3] if k not in weight_values]
        if missing:
            raise SystemExit(f"config sets some loss weights but not {missing}")
        values["weights"] = LossWeights(**weight_values)
    return TrainConfig(**values)


def _load_backbone(arg: str | None) -> ToyBackbone:
    if arg is None:
        return ToyBackbone()
    return load_pretrained(arg)


def cmd_train(args) -> int:
    overrides = {
        "prompt": args.prompt,
        "variant": args.variant,
        "editor": args.editor,
        "max_iterations": args.iterations,
        "seed": args.seed,
        "edit_cutoff": args.edit_cutoff,
    }
    config = load_train_config(args.config, overrides)
    backbone = _load_backbone(args.backbone)
    if config.edit_cutoff > backbone.num_layers:
        config.edit_cutoff = backbone.num_layers
        print(f"edit cutoff clamped to backbone layer count {backbone.num_layers}")
    segmenter = GridSegmenter(args.grid_rows, args.grid_cols)
    if args.scorer == "quadrant":
        scorer = RegionIntensityScorer(
            upper_left_quadrant(backbone.config.image_resolution))
    else:
        scorer = EmbeddingStubScorer()
    out_dir = Path(args.out)
    artifact = train(config, backbone, scorer, embedder=PoolingIdentityEmbedder(),
                     segmenter=segmenter, out_dir=out_dir,
                     resume_from=args.resume_from)
    save_checkpoint(backbone, out_dir / "backbone")
    print(f"trained {config.variant}/{config.editor} edit for prompt "
          f"{config.prompt!r} -> {out_dir / 'artifact'}")
    print(f"loss curve: {out_dir / 'losses.csv'}")
    return 0


def _parse_toggles(text: str | None, cutoff: int):
    if text is None:
        return None
    on = {int(part) for part in text.split(",") if part.strip()}
    bad = [l for l in on if not 1 <= l <= cutoff]
    if bad:
        raise SystemExit(f"toggled layers {bad} outside 1..{cutoff}")
    return [l in on for l in range(1, cutoff + 1)]


def cmd_apply(args) -> int:
    if abs(args.alpha) > 1.5:
        raise SystemExit("alpha outside the supported range [-1.5, 1.5]")
    artifact = load_artifact(args.artifact)
    backbone = _load_backbone(args.backbone)
    toggles = _parse_toggles(args.toggle_layers, artifact.edit_cutoff)
    z = latent_from_seed(args.seed, backbone.latent_dim)
    result = apply_edit(backbone, z, artifact, alpha=args.alpha, tau=args.tau,
                        layer_toggles=toggles)
    metrics = edit_metrics(result, PoolingIdentityEmbedder())

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "original.png").write_bytes(image_png_bytes(result.original))
    (out / "edited.png").write_bytes(image_png_bytes(result.edited))
    for l in range(1, artifact.edit_cutoff + 1):
        (out / f"mask_layer_{l}.png").write_bytes(mask_png_bytes(result.masks[l - 1]))
    with (out / "metrics.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        writer.writerow(["pixel_l2", repr(metrics["pixel_l2"])])
        writer.writerow(["id_similarity", repr(metrics["id_similarity"])])
        for l, fraction in enumerate(metrics["area_fractions"], start=1):
            writer.writerow([f"area_fraction_layer_{l}", repr(fraction)])
    print(f"wrote edit outputs to {out}")
    return 0


def cmd_serve(args) -> int:
    from .service import main as serve_main

    argv = []
    if args.port is not None:
        argv += ["--port", str(args.port)]
    if args.artifact_dir is not None:
        argv += ["--artifact-dir", args.artifact_dir]
    if args.backbone is not None:
        argv += ["--backbone", args.backbone]
    serve_main(argv)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coral")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train an edit for a prompt")
    p_train.add_argument("--prompt", default=None)
    p_train.add_argument("--variant", choices=["ss", "can"], default=None)
    p_train.add_argument("--editor", choices=["global", "mapper"], default=None)
    p_train.add_argument("--config", default=None, help="key = value config file")
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--backbone", default=None, help="backbone checkpoint dir")
    p_train.add_argument("--iterations", type=int, default=None)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--edit-cutoff", dest="edit_cutoff", type=int, default=None)
    p_train.add_argument("--scorer", choices=["stub", "quadrant"], default="stub")
    p_train.add_argument("--grid-rows", type=int, default=2)
    p_train.add_argument("--grid-cols", type=int, default=2)
    p_train.add_argument("--resume-from", default=None)
    p_train.set_defaults(func=cmd_train)

    p_apply = sub.add_parser("apply", help="apply a trained edit artifact")
    p_apply.add_argument("--artifact", required=True)
    p_apply.add_argument("--seed", type=int, required=True)
    p_apply.add_argument("--alpha", type=float, default=1.0)
    p_apply.add_argument("--tau", type=float, default=None)
    p_apply.add_argument("--toggle-layers", default=None,
                         help="comma-separated layer numbers to keep enabled")
    p_apply.add_argument("--out", required=True)
    p_apply.add_argument("--backbone", default=None)
    p_apply.set_defaults(func=cmd_apply)

    p_serve = sub.add_parser("serve", help="serve artifacts over HTTP")
    p_serve.add_argument("--port", type=int, default=None)
    p_serve.add_argument("--artifact-dir", default=None)
    p_serve.add_argument("--backbone", default=None)
    p_serve.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
