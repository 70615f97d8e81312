import pytest
import torch

from coral.desk import (
    EmbeddingStubScorer,
    GridSegmenter,
    PoolingIdentityEmbedder,
    RegionIntensityScorer,
    resolve_segmenter,
    upper_left_quadrant,
)


def test_grid_segmenter_labels_quadrants():
    seg = GridSegmenter(2, 2)
    labels = seg.segment(torch.zeros(3, 32, 32))
    assert labels.shape == (32, 32)
    assert int(labels[0, 0]) == 0
    assert int(labels[0, 31]) == 1
    assert int(labels[31, 0]) == 2
    assert int(labels[31, 31]) == 3
    assert int(labels.max()) == seg.class_count - 1


def test_grid_segmenter_deterministic_and_content_free():
    seg = GridSegmenter(4, 2)
    a = seg.segment(torch.zeros(3, 16, 16))
    b = seg.segment(torch.randn(3, 16, 16, generator=torch.Generator().manual_seed(1)))
    assert torch.equal(a, b)


def test_resolve_segmenter_round_trip():
    seg = GridSegmenter(3, 5)
    back = resolve_segmenter(seg.identity)
    assert back.rows == 3 and back.cols == 5
    with pytest.raises(ValueError):
        resolve_segmenter("mystery:thing")


def test_upper_left_quadrant_shape():
    region = upper_left_quadrant(32)
    assert bool(region[0, 0]) and bool(region[15, 15])
    assert not bool(region[16, 0]) and not bool(region[0, 16])
    assert int(region.sum()) == 256


def test_region_scorer_rewards_bright_region():
    region = upper_left_quadrant(8)
    scorer = RegionIntensityScorer(region)
    dark = torch.zeros(3, 8, 8)
    bright = dark.clone()
    bright[:, :4, :4] = 5.0
    assert float(scorer.distance(bright, "x")) < float(scorer.distance(dark, "x"))


def test_region_scorer_penalizes_outside_brightness():
    region = upper_left_quadrant(8)
    scorer = RegionIntensityScorer(region)
    base = torch.zeros(3, 8, 8)
    spilled = base.clone()
    spilled[:, 4:, 4:] = 5.0
    assert float(scorer.distance(spilled, "x")) > float(scorer.distance(base, "x"))


def test_region_scorer_deterministic_and_nonnegative():
    scorer = RegionIntensityScorer(upper_left_quadrant(8))
    image = torch.randn(3, 8, 8, generator=torch.Generator().manual_seed(2))
    a = float(scorer.distance(image, "p"))
    assert a == float(scorer.distance(image, "p"))
    assert a >= 0.0


def test_stub_scorer_deterministic_across_instances():
    image = torch.randn(3, 32, 32, generator=torch.Generator().manual_seed(3))
    a = EmbeddingStubScorer().distance(image, "mohawk hairstyle")
    b = EmbeddingStubScorer().distance(image, "mohawk hairstyle")
    c = EmbeddingStubScorer().distance(image, "blue eyes")
    assert float(a) == float(b)
    assert float(a) != float(c)
    assert 0.0 <= float(a) <= 2.0


def test_pooling_embedder_distinguishes_images():
    embedder = PoolingIdentityEmbedder()
    g = torch.Generator().manual_seed(4)
    a = embedder.embed(torch.randn(3, 32, 32, generator=g))
    b = embedder.embed(torch.randn(3, 32, 32, generator=g))
    assert float((a - b).abs().max()) > 1e-3
