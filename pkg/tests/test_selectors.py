import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import finite_diff, np_sigmoid
from coral.desk import GridSegmenter
from coral.selectors import (
    AttentionNet,
    SegmentSelection,
    apply_threshold,
    attention_masks,
    segment_masks,
)


def test_segment_masks_saturate_to_zero(toy):
    seg = GridSegmenter(2, 2).segment(torch.zeros(3, 32, 32))
    logits = torch.full((4, 6), -40.0)
    masks = segment_masks(seg, logits, toy.config, edit_cutoff=6)
    for m in masks:
        assert float(m.max()) < 1e-6


def test_segment_masks_zero_logits_give_half(toy):
    seg = GridSegmenter(2, 2).segment(torch.zeros(3, 32, 32))
    masks = segment_masks(seg, torch.zeros(4, 6), toy.config, edit_cutoff=6)
    for m in masks:
        assert torch.allclose(m, torch.full_like(m, 0.5))


def test_segment_masks_left_half_matches_pooling_oracle(toy):
    """Two classes split left/right; selecting only class 0 must equal the
    area-averaged left-half indicator at every layer resolution."""
    seg = torch.zeros(32, 32, dtype=torch.long)
    seg[:, 16:] = 1
    logits = torch.zeros(2, 6)
    logits[0, :] = 40.0
    logits[1, :] = -40.0
    masks = segment_masks(seg, logits, toy.config, edit_cutoff=6)
    for l, m in enumerate(masks, start=1):
        res = toy.config.resolutions[l - 1]
        cell = 32 // res
        expected = np.zeros((res, res))
        for i in range(res):
            for j in range(res):
                block = seg[i * cell:(i + 1) * cell, j * cell:(j + 1) * cell]
                expected[i, j] = float((block == 0).sum()) / block.numel()
        np.testing.assert_allclose(m.numpy(), expected, atol=1e-6)


def test_segment_masks_zero_beyond_cutoff(toy):
    seg = GridSegmenter(2, 2).segment(torch.zeros(3, 32, 32))
    masks = segment_masks(seg, torch.zeros(4, 6), toy.config, edit_cutoff=4)
    assert float(masks[4].abs().sum()) == 0.0
    assert float(masks[5].abs().sum()) == 0.0


def test_segment_masks_rejects_out_of_range_class(toy):
    seg = torch.full((32, 32), 5, dtype=torch.long)
    with pytest.raises(ValueError):
        segment_masks(seg, torch.zeros(4, 6), toy.config, edit_cutoff=6)


def test_segment_masks_class_permutation_equivariance(toy):
    g = torch.Generator().manual_seed(42)
    seg = torch.randint(0, 4, (32, 32), generator=g)
    logits = torch.randn(4, 6, generator=g)
    perm = torch.tensor([2, 0, 3, 1])
    seg_p = perm[seg]
    logits_p = torch.empty_like(logits)
    logits_p[perm] = logits
    masks_a = segment_masks(seg, logits, toy.config, edit_cutoff=6)
    masks_b = segment_masks(seg_p, logits_p, toy.config, edit_cutoff=6)
    for a, b in zip(masks_a, masks_b):
        assert torch.equal(a, b)


def test_attention_masks_zero_params_give_half(toy):
    net = AttentionNet.for_backbone(toy.config, edit_cutoff=6, seed=0)
    with torch.no_grad():
        for p in net.parameters():
            p.zero_()
    _, feats = toy(torch.zeros(6, 32))
    for m in net.masks(feats):
        assert torch.allclose(m, torch.full_like(m, 0.5))


def test_attention_masks_bias_saturation(toy):
    net = AttentionNet.for_backbone(toy.config, edit_cutoff=6, seed=0)
    with torch.no_grad():
        for p in net.parameters():
            p.zero_()
        for head in net.heads:
            head["conv2_b"].fill_(10.0)
    _, feats = toy(torch.zeros(6, 32))
    with torch.no_grad():
        masks = net.masks(feats)
    for m in masks:
        assert float(m.min()) > 0.99


def test_attention_masks_match_conv_oracle(toy64):
    net = AttentionNet.for_backbone(toy64.config, edit_cutoff=6, seed=3).double()
    g = torch.Generator().manual_seed(9)
    with torch.no_grad():
        for p in net.parameters():
            p.normal_(0.0, 0.5, generator=g)
    _, feats = toy64(torch.zeros(6, 32, dtype=torch.float64))
    with torch.no_grad():
        masks = net.masks(feats)
    for l in (1, 4, 6):
        head = net.heads[l - 1]
        f = feats[l - 1].numpy()
        w1 = head["conv1_w"].detach().numpy()[:, :, 0, 0]
        b1 = head["conv1_b"].detach().numpy()
        w2 = head["conv2_w"].detach().numpy()[:, :, 0, 0]
        b2 = head["conv2_b"].detach().numpy()
        res = f.shape[1]
        expected = np.zeros((res, res))
        for i in range(res):
            for j in range(res):
                hidden = np.maximum(w1 @ f[:, i, j] + b1, 0.0)
                expected[i, j] = np_sigmoid((w2 @ hidden + b2)[0])
        np.testing.assert_allclose(masks[l - 1].numpy(), expected, atol=1e-5)


def test_attention_masks_depend_only_on_own_layer(toy):
    net = AttentionNet.for_backbone(toy.config, edit_cutoff=6, seed=1)
    _, feats = toy(toy.map_latent(torch.randn(32, generator=torch.Generator().manual_seed(4))))
    masks_a = net.masks(feats)
    perturbed = [f.clone() for f in feats]
    for l in (0, 1, 3, 4, 5):
        perturbed[l] += 1.0
    masks_b = net.masks(perturbed)
    assert torch.equal(masks_a[2], masks_b[2])
    assert not torch.equal(masks_a[0], masks_b[0])


def test_attention_masks_channel_mismatch(toy):
    net = AttentionNet.for_backbone(toy.config, edit_cutoff=6, seed=0)
    bad = [torch.zeros(5, r, r) for r in toy.config.resolutions]
    with pytest.raises(ValueError):
        net.masks(bad)


def test_attention_masks_zero_beyond_cutoff(toy):
    net = AttentionNet.for_backbone(toy.config, edit_cutoff=3, seed=0)
    _, feats = toy(torch.zeros(6, 32))
    masks = attention_masks(feats, net)
    for m in masks[3:]:
        assert float(m.abs().sum()) == 0.0


def test_threshold_examples():
    mask = torch.tensor([[0.9, 0.84]])
    out = apply_threshold([mask], 0.85)[0]
    assert torch.equal(out, torch.tensor([[0.9, 0.0]]))
    assert torch.equal(apply_threshold([mask], 0.0)[0], mask)
    high = apply_threshold([torch.full((2, 2), 0.99)], 1.0)[0]
    assert float(high.abs().sum()) == 0.0


def test_threshold_rejects_out_of_range():
    with pytest.raises(ValueError):
        apply_threshold([torch.zeros(2, 2)], 1.5)
    with pytest.raises(ValueError):
        apply_threshold([torch.zeros(2, 2)], -0.1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4),
       st.floats(0.0, 1.0))
def test_threshold_idempotent_and_bounded(values, tau):
    mask = torch.tensor(values, dtype=torch.float64).reshape(2, 2)
    once = apply_threshold([mask], tau)[0]
    twice = apply_threshold([once], tau)[0]
    assert torch.equal(once, twice)
    assert float(once.min()) >= 0.0 and float(once.max()) <= 1.0


def test_selector_outputs_stay_in_unit_interval(toy):
    g = torch.Generator().manual_seed(8)
    seg = torch.randint(0, 4, (32, 32), generator=g)
    logits = 3 * torch.randn(4, 6, generator=g)
    net = AttentionNet.for_backbone(toy.config, edit_cutoff=6, seed=2)
    _, feats = toy(toy.map_latent(torch.randn(32, generator=g)))
    with torch.no_grad():
        stacks = [segment_masks(seg, logits, toy.config, edit_cutoff=6),
                  net.masks(feats)]
    for masks in stacks:
        for m in masks:
            assert float(m.min()) >= 0.0 and float(m.max()) <= 1.0


def test_selection_gradients_match_finite_differences(toy64):
    g = torch.Generator().manual_seed(31)
    seg = torch.randint(0, 4, (32, 32), generator=g)
    selection = SegmentSelection(4, 6).double()
    with torch.no_grad():
        selection.logits.normal_(0.0, 1.0, generator=g)

    def scalar():
        masks = segment_masks(seg, selection, toy64.config, edit_cutoff=6)
        return sum((m * m).sum() for m in masks)

    loss = scalar()
    (analytic,) = torch.autograd.grad(loss, selection.logits)
    idx = list(range(0, 24, 5))
    fd = finite_diff(scalar, selection.logits, idx, eps=1e-6)
    for i, expected in zip(idx, fd):
        assert analytic.reshape(-1)[i].item() == pytest.approx(expected, rel=1e-4, abs=1e-10)


def test_attention_gradients_match_finite_differences(toy64):
    net = AttentionNet.for_backbone(toy64.config, edit_cutoff=4, seed=6).double()
    _, feats = toy64(toy64.map_latent(
        torch.randn(32, generator=torch.Generator().manual_seed(12)).double()))

    def scalar():
        masks = net.masks(feats)
        return sum((m * m).sum() for m in masks)

    loss = scalar()
    params = list(net.parameters())
    grads = torch.autograd.grad(loss, params)
    g = torch.Generator().manual_seed(13)
    for p, analytic in zip(params, grads):
        idx = torch.randint(0, p.numel(), (3,), generator=g).tolist()
        fd = finite_diff(scalar, p, idx, eps=1e-6)
        for i, expected in zip(idx, fd):
            assert analytic.reshape(-1)[i].item() == pytest.approx(expected, rel=1e-4, abs=1e-10)
