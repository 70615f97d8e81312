"""Text-driven generative image editing with jointly learned per-layer
edit regions and latent directions over a progressive synthesis backbone."""

from .backbone import (
    BackboneConfig,
    ToyBackbone,
    full_scale_config,
    load_pretrained,
    save_checkpoint,
    toy_config,
)
from .blending import blended_forward, edited_forward, feat_blend_forward
from .desk import (
    EmbeddingStubScorer,
    GridSegmenter,
    PoolingIdentityEmbedder,
    RegionIntensityScorer,
    upper_left_quadrant,
)
from .editors import GlobalDirection, LatentMapper, scale_delta
from .inference import (
    EditArtifact,
    EditResult,
    apply_edit,
    edit_metrics,
    load_artifact,
    save_artifact,
)
from .losses import (
    LossReport,
    LossWeights,
    area_loss_can,
    area_loss_ss,
    clip_loss,
    id_loss,
    l2_loss,
    total_loss,
    tv_loss,
)
from .selectors import (
    AttentionNet,
    SegmentSelection,
    apply_threshold,
    attention_masks,
    segment_masks,
)
from .service import create_app
from .trainer import TrainConfig, TrainState, sample_loss, train, train_step

__all__ = [
    "AttentionNet", "BackboneConfig", "EditArtifact", "EditResult",
    "EmbeddingStubScorer", "GlobalDirection", "GridSegmenter", "LatentMapper",
    "LossReport", "LossWeights", "PoolingIdentityEmbedder",
    "RegionIntensityScorer", "SegmentSelection", "ToyBackbone", "TrainConfig",
    "TrainState", "apply_edit", "apply_threshold", "area_loss_can",
    "area_loss_ss", "attention_masks", "blended_forward", "clip_loss",
    "create_app", "edit_metrics", "edited_forward", "feat_blend_forward",
    "full_scale_config", "id_loss", "l2_loss", "load_artifact",
    "load_pretrained", "sample_loss", "save_artifact", "save_checkpoint",
    "scale_delta", "segment_masks", "total_loss", "toy_config", "train",
    "train_step", "tv_loss", "upper_left_quadrant",
]

__version__ = "0.1.0"
