import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from coral import LossWeights, ToyBackbone
from coral.desk import GridSegmenter, PoolingIdentityEmbedder, RegionIntensityScorer, upper_left_quadrant
from coral.trainer import TrainConfig, train


@pytest.fixture(scope="session")
def toy():
    return ToyBackbone()


@pytest.fixture(scope="session")
def toy64():
    return ToyBackbone(dtype=torch.float64)


@pytest.fixture()
def rng():
    return torch.Generator().manual_seed(77)


def random_code(backbone, generator):
    z = torch.randn(backbone.latent_dim, generator=generator)
    return backbone.map_latent(z)


@pytest.fixture(scope="session")
def trained_artifact_dir(tmp_path_factory, toy):
    """A small but real segment-selection artifact used by inference/service tests."""
    out = tmp_path_factory.mktemp("artifact_run")
    config = TrainConfig(
        prompt="brighten the upper left",
        variant="ss",
        editor="global",
        weights=LossWeights(0.0007, 0.015, 0.01),
        batch_size=2,
        max_iterations=40,
        learning_rate=0.05,
        seed=11,
        edit_cutoff=6,
        checkpoint_every=0,
    )
    scorer = RegionIntensityScorer(upper_left_quadrant(toy.config.image_resolution))
    train(config, toy, scorer, embedder=PoolingIdentityEmbedder(),
          segmenter=GridSegmenter(2, 2), out_dir=out)
    return out
