"""Fusion rules against set-builder oracles, threshold monotonicity,
containment laws, and rectangle enumeration geometry."""
import numpy as np
import pytest

import helpers as H
from srmt import sensitivity
from srmt.errors import EmptyHeatmapList, RectLargerThanImage
from srmt.sensitivity import Rect


def random_stack(rng, k=None, h=8, w=8):
    k = k or int(rng.integers(1, 6))
    return rng.random((k, h, w)).astype(np.float32)


def test_max_selection_example():
    a = np.array([[0.95, 0.2], [0.1, 0.3]], dtype=np.float32)
    b = np.array([[0.1, 0.91], [0.2, 0.3]], dtype=np.float32)
    mask = sensitivity.max_selection(np.stack([a, b]), 0.9)
    np.testing.assert_array_equal(mask, [[True, True], [False, False]])


def test_threshold_zero_selects_everything():
    rng = np.random.default_rng(0)
    stack = random_stack(rng)
    assert sensitivity.max_selection(stack, 0.0).all()


def test_avg_boundary_inclusive():
    stack = np.stack([np.array([[1.0]], dtype=np.float32),
                      np.array([[0.0]], dtype=np.float32)])
    mask = sensitivity.avg_selection(stack, 0.5)
    assert mask[0, 0]


def test_single_map_fusions_coincide():
    rng = np.random.default_rng(1)
    stack = random_stack(rng, k=1)
    t = 0.5
    m_max = sensitivity.max_selection(stack, t)
    m_avg = sensitivity.avg_selection(stack, t)
    m_best = sensitivity.best_selection(stack, 0, t)
    np.testing.assert_array_equal(m_max, m_avg)
    np.testing.assert_array_equal(m_max, m_best)


def test_best_selection_uses_predicted_class():
    rng = np.random.default_rng(2)
    stack = random_stack(rng, k=3)
    mask = sensitivity.best_selection(stack, 1, 0.5)
    np.testing.assert_array_equal(mask, stack[1] >= 0.5)


def test_best_selection_threshold_one():
    stack = np.zeros((2, 4, 4), dtype=np.float32)
    stack[0, 2, 3] = 1.0
    mask = sensitivity.best_selection(stack, 0, 1.0)
    assert mask.sum() == 1 and mask[2, 3]


def test_empty_stack_rejected():
    with pytest.raises(EmptyHeatmapList):
        sensitivity.max_selection(np.zeros((0, 4, 4), dtype=np.float32), 0.5)


def test_selection_rules_match_set_builder_oracle():
    rng = np.random.default_rng(3)
    for _ in range(200):
        stack = random_stack(rng)
        t = float(rng.choice([0.0, 0.3, 0.5, 0.9, 1.0]))
        best = int(rng.integers(0, stack.shape[0]))
        np.testing.assert_array_equal(
            sensitivity.max_selection(stack, t), H.mask_oracle(stack, "max", t))
        np.testing.assert_array_equal(
            sensitivity.avg_selection(stack, t), H.mask_oracle(stack, "avg", t))
        np.testing.assert_array_equal(
            sensitivity.best_selection(stack, best, t),
            H.mask_oracle(stack, "best", t, best))


def test_monotone_in_threshold_and_containments():
    rng = np.random.default_rng(4)
    for _ in range(200):
        stack = random_stack(rng)
        t1, t2 = sorted(rng.random(2))
        best = int(rng.integers(0, stack.shape[0]))
        for rule in ("max", "avg"):
            fn = getattr(sensitivity, f"{rule}_selection")
            loose, tight = fn(stack, t1), fn(stack, t2)
            assert not (tight & ~loose).any(), "higher threshold must shrink the mask"
        loose = sensitivity.best_selection(stack, best, t1)
        tight = sensitivity.best_selection(stack, best, t2)
        assert not (tight & ~loose).any()
        t = float(rng.random())
        m_max = sensitivity.max_selection(stack, t)
        assert not (sensitivity.avg_selection(stack, t) & ~m_max).any()
        assert not (sensitivity.best_selection(stack, best, t) & ~m_max).any()


def test_enumerate_full_mask_20x20():
    mask = np.ones((20, 20), dtype=bool)
    rects = sensitivity.enumerate_rectangles(mask, 10, 10, 5)
    anchors = [(r.top, r.left) for r in rects]
    assert anchors == [(r, c) for r in (0, 5, 10) for c in (0, 5, 10)]


def test_enumerate_empty_mask():
    assert sensitivity.enumerate_rectangles(np.zeros((32, 32), bool), 10, 10, 5) == []


def test_enumerate_single_pixel():
    mask = np.zeros((32, 32), dtype=bool)
    mask[0, 0] = True
    rects = sensitivity.enumerate_rectangles(mask, 10, 10, 1)
    assert len(rects) == 1 and rects[0] == Rect(0, 0, 10, 10)


def test_enumerate_matches_filter_oracle():
    rng = np.random.default_rng(5)
    for _ in range(200):
        mask = rng.random((32, 32)) < 0.3
        stride = int(rng.choice([1, 3, 5]))
        w, h = [(1, 1), (10, 10), (7, 3)][int(rng.integers(0, 3))]
        got = [(r.top, r.left, r.height, r.width)
               for r in sensitivity.enumerate_rectangles(mask, w, h, stride)]
        assert got == H.rects_oracle(mask, w, h, stride)


def test_enumerate_rejects_oversized_rect():
    with pytest.raises(RectLargerThanImage):
        sensitivity.enumerate_rectangles(np.ones((8, 8), bool), 9, 3, 1)


def test_rect_center_convention():
    assert Rect(0, 0, 10, 10).center == (4, 4)
    assert Rect(3, 7, 3, 7).center == (4, 10)
    assert Rect(0, 0, 1, 1).center == (0, 0)


def test_fused_map_rules(model, first_seed, first_prediction):
    from srmt import gradcam
    stack = gradcam.all_class_heatmaps(model, first_seed.pixels,
                                       prediction=first_prediction)
    fmax = sensitivity.fused_map(stack, "max")
    favg = sensitivity.fused_map(stack, "avg")
    fbest = sensitivity.fused_map(stack, "best",
                                  best_class=first_prediction.best_class)
    np.testing.assert_array_equal(fmax, stack.max(axis=0))
    np.testing.assert_allclose(favg, stack.mean(axis=0), atol=1e-7)
    np.testing.assert_array_equal(fbest, stack[first_prediction.best_class])
    assert (favg <= fmax + 1e-6).all()
