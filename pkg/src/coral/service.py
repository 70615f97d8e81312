"""Stateless HTTP facade over inference.

Seeds, not latent vectors, cross the wire: the server derives z from the
request seed with a fixed-seed generator, so identical requests produce
byte-identical responses. One model serves the process; inference calls
serialize through a single lock, so responses are independent of request
interleaving.

Configuration: CORAL_PORT (default 8787), CORAL_ARTIFACT_DIR, and
CORAL_BACKBONE_DIR (optional; falls back to <artifact_dir>/backbone if
present, else the built-in toy backbone).
"""

from __future__ import annotations

import base64
import logging
import math
import os
import threading
from contextlib import asynccontextmanager
from pathlib import Path

import torch
from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .backbone import ToyBackbone, load_pretrained
from .desk import PoolingIdentityEmbedder
from .inference import apply_edit, edit_metrics, image_png_bytes, load_artifact, mask_png_bytes

logger = logging.getLogger("coral.service")

DEFAULT_PORT = 8787


class ApplyRequest(BaseModel):
    artifact_id: str
    seed: int
    alpha: float
    tau: float | None = None
    layer_toggles: list[bool] | None = None


def latent_from_seed(seed: int, latent_dim: int) -> torch.Tensor:
    g = torch.Generator().manual_seed(int(seed) % (2**63))
    return torch.randn(latent_dim, generator=g)


def _resolve_backbone(artifact_dir: Path | None, backbone=None, backbone_dir=None):
    if backbone is not None:
        return backbone
    if backbone_dir is None:
        backbone_dir = os.environ.get("CORAL_BACKBONE_DIR")
    if backbone_dir is None and artifact_dir is not None:
        candidate = artifact_dir / "backbone"
        if (candidate / "manifest.txt").exists():
            backbone_dir = candidate
    if backbone_dir is not None:
        return load_pretrained(backbone_dir)
    return ToyBackbone()


def _scan_artifacts(artifact_dir: Path | None) -> dict:
    artifacts = {}
    if artifact_dir is None or not artifact_dir.exists():
        return artifacts
    for entry in sorted(artifact_dir.iterdir()):
        if not entry.is_dir() or not (entry / "manifest.txt").exists():
            continue
        try:
            artifacts[entry.name] = load_artifact(entry)
        except Exception as exc:
            logger.warning("skipping unreadable artifact %s: %s", entry.name, exc)
    return artifacts


def create_app(artifact_dir: str | Path | None = None, backbone=None,
               backbone_dir: str | Path | None = None) -> FastAPI:
    if artifact_dir is None:
        artifact_dir = os.environ.get("CORAL_ARTIFACT_DIR")
    artifact_dir = Path(artifact_dir) if artifact_dir is not None else None

    state: dict = {"ready": False, "backbone": backbone, "artifacts": {}}
    lock = threading.Lock()
    embedder = PoolingIdentityEmbedder()

    @asynccontextmanager
    async def lifespan(_app):
        state["backbone"] = _resolve_backbone(artifact_dir, backbone, backbone_dir)
        state["artifacts"] = _scan_artifacts(artifact_dir)
        state["ready"] = True
        yield

    app = FastAPI(title="coral edit service", lifespan=lifespan)

    @app.get("/health")
    def health():
        if not state["ready"]:
            return JSONResponse(status_code=503, content={"status": "initializing"})
        return {
            "status": "ok",
            "backbone_fingerprint": state["backbone"].fingerprint(),
            "artifact_count": len(state["artifacts"]),
        }

    @app.get("/edits")
    def edits():
        listing = []
        for artifact_id in sorted(state["artifacts"]):
            artifact = state["artifacts"][artifact_id]
            listing.append({
                "id": artifact_id,
                "prompt": artifact.prompt,
                "variant": artifact.variant,
                "editor_kind": artifact.editor_kind,
                "edit_cutoff": artifact.edit_cutoff,
                "default_tau": artifact.tau_default,
            })
        return listing

    @app.post("/apply")
    def apply(request: ApplyRequest):
        if not state["ready"]:
            raise HTTPException(status_code=503, detail="service initializing")
        artifact = state["artifacts"].get(request.artifact_id)
        if artifact is None:
            raise HTTPException(status_code=404,
                                detail=f"unknown artifact {request.artifact_id!r}")
        if not math.isfinite(request.alpha):
            raise HTTPException(status_code=422, detail="alpha must be finite")
        tau = artifact.tau_default if request.tau is None else request.tau
        if not (math.isfinite(tau) and 0 <= tau <= 1):
            raise HTTPException(status_code=422, detail="tau must lie in [0, 1]")
        if request.layer_toggles is not None \
                and len(request.layer_toggles) != artifact.edit_cutoff:
            raise HTTPException(
                status_code=422,
                detail=f"layer_toggles must have {artifact.edit_cutoff} entries",
            )
        try:
            with lock:
                bb = state["backbone"]
                z = latent_from_seed(request.seed, bb.latent_dim)
                result = apply_edit(bb, z, artifact, alpha=request.alpha, tau=tau,
                                    layer_toggles=request.layer_toggles)
                metrics = edit_metrics(result, embedder)
        except HTTPException:
            raise
        except Exception as exc:
            raise HTTPException(status_code=500, detail=f"apply failed: {exc}")

        cutoff = artifact.edit_cutoff
        masks_b64 = [base64.b64encode(mask_png_bytes(m)).decode("ascii")
                     for m in result.masks[:cutoff]]
        return {
            "edited_image": base64.b64encode(image_png_bytes(result.edited)).decode("ascii"),
            "original_image": base64.b64encode(image_png_bytes(result.original)).decode("ascii"),
            "masks": masks_b64,
            "area_fractions": result.area_fractions[:cutoff],
            "metrics": {
                "pixel_l2": metrics["pixel_l2"],
                "id_similarity": metrics["id_similarity"],
            },
        }

    return app


def main(argv=None) -> None:
    import argparse

    import uvicorn

    parser = argparse.ArgumentParser(description="serve trained edits over HTTP")
    parser.add_argument("--port", type=int,
                        default=int(os.environ.get("CORAL_PORT", DEFAULT_PORT)))
    parser.add_argument("--artifact-dir", default=None)
    parser.add_argument("--backbone", default=None)
    args = parser.parse_args(argv)
    app = create_app(artifact_dir=args.artifact_dir, backbone_dir=args.backbone)
    uvicorn.run(app, host="0.0.0.0", port=args.port)


if __name__ == "__main__":
    main()
