"""Tensor-core tests: forward layers against naive oracles, gradients
against finite differences, and the shape algebra."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import helpers as H
from srmt import model as model_io, nn
from srmt.errors import InvalidClass, ShapeMismatch


def naive_conv(image, weight, bias, padding):
    c_in, h, w = image.shape
    c_out, _, kh, kw = weight.shape
    padded = np.zeros((c_in, h + 2 * padding, w + 2 * padding))
    padded[:, padding:padding + h, padding:padding + w] = image
    oh, ow = h + 2 * padding - kh + 1, w + 2 * padding - kw + 1
    out = np.zeros((c_out, oh, ow))
    for o in range(c_out):
        for i in range(oh):
            for j in range(ow):
                acc = 0.0
                for ci in range(c_in):
                    for u in range(kh):
                        for v in range(kw):
                            acc += weight[o, ci, u, v] * padded[ci, i + u, j + v]
                out[o, i, j] = acc + bias[o]
    return out


def test_conv_matches_naive_loops():
    rng = np.random.default_rng(0)
    for pad in (0, 1):
        img = rng.standard_normal((2, 6, 5)).astype(np.float32)
        wt = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
        bias = rng.standard_normal(3).astype(np.float32)
        layer = model_io.conv_layer(3, (3, 3), padding=pad, activation="none",
                                    weight=wt, bias=bias)
        spec = model_io.new_model((2, 6, 5), [
            layer,
            model_io.flatten_layer(),
            model_io.dense_layer(2, weight=rng.standard_normal(
                (2, 3 * (6 + 2 * pad - 2) * (5 + 2 * pad - 2))).astype(np.float32),
                bias=np.zeros(2, dtype=np.float32)),
        ], gradcam_target=0)
        pred = nn.forward(spec, img)
        got = pred.trace[0].out[0]
        want = naive_conv(img, wt, bias, pad)
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-5)


def test_dense_identity_and_zero_weight():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(7).astype(np.float32)
    eye = np.eye(7, dtype=np.float32)
    np.testing.assert_array_equal(nn._dense_batch(x[None], eye, np.zeros(7, np.float32))[0], x)
    b = rng.standard_normal(4).astype(np.float32)
    out = nn._dense_batch(x[None], np.zeros((4, 7), np.float32), b)[0]
    np.testing.assert_array_equal(out, b)


def test_dense_matches_dot_product_oracle():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(7).astype(np.float32)
    w = rng.standard_normal((4, 7)).astype(np.float32)
    b = rng.standard_normal(4).astype(np.float32)
    got = nn._dense_batch(x[None], w, b)[0]
    want = np.array([sum(w[i, j] * x[j] for j in range(7)) + b[i] for i in range(4)])
    np.testing.assert_allclose(got, want, rtol=1e-6, atol=1e-6)


def test_maxpool_values_and_tie_routing():
    x = np.array([[[1, 2], [3, 4]]], dtype=np.float32)
    out, idx = nn._maxpool_batch(x[None])
    assert out[0, 0, 0, 0] == 4.0
    # tie: all equal, gradient must route to the first window element
    tie = np.zeros((1, 1, 2, 2), dtype=np.float32)
    out, idx = nn._maxpool_batch(tie)
    grad = nn._maxpool_backward(np.ones_like(out), idx, (1, 1, 2, 2))
    np.testing.assert_array_equal(grad[0, 0], [[1, 0], [0, 0]])


@settings(max_examples=60, deadline=None)
@given(h=st.integers(3, 40), w=st.integers(3, 40),
       k=st.integers(1, 5), pad=st.integers(0, 2))
def test_conv_shape_algebra(h, w, k, pad):
    if k > h + 2 * pad or k > w + 2 * pad:
        return
    oh, ow = nn.conv_output_hw(h, w, k, k, 1, pad)
    assert oh == h + 2 * pad - k + 1
    assert ow == w + 2 * pad - k + 1


def test_forward_determinism(model, first_seed):
    a = nn.forward(model, first_seed.pixels)
    b = nn.forward(model, first_seed.pixels)
    np.testing.assert_array_equal(a.logits, b.logits)
    np.testing.assert_array_equal(a.target_feature_maps, b.target_feature_maps)


def test_forward_batch_matches_single(model, seed_set):
    # accumulation order differs between batch sizes, so the match is
    # numeric rather than bitwise; the argmax must agree regardless
    batch = np.stack([s.pixels for s in seed_set[:8]])
    got = nn.forward_batch(model, batch)
    for i, seed in enumerate(seed_set[:8]):
        single = nn.forward(model, seed.pixels).logits
        np.testing.assert_allclose(got[i], single, rtol=1e-4, atol=1e-3)
        assert int(np.argmax(got[i])) == int(np.argmax(single))


def test_softmax_sums_to_one():
    rng = np.random.default_rng(3)
    z = rng.standard_normal(10).astype(np.float32) * 10
    p = nn.softmax(z)
    assert abs(float(p.sum()) - 1.0) < 1e-6
    assert int(np.argmax(p)) == int(np.argmax(z))


def _sum_head_model():
    """conv target, then flatten + all-ones dense: logit = sum of the maps."""
    wt = np.zeros((2, 1, 3, 3), dtype=np.float32)
    wt[0, 0, 1, 1] = 1.0
    wt[1, 0, 0, 0] = 0.5
    return model_io.new_model((1, 6, 6), [
        model_io.conv_layer(2, (3, 3), padding=1, activation="relu",
                            weight=wt, bias=np.full(2, 0.1, np.float32)),
        model_io.flatten_layer(),
        model_io.dense_layer(3, weight=np.ones((3, 72), dtype=np.float32),
                             bias=np.zeros(3, np.float32)),
    ])


def test_grad_all_ones_dense_head():
    spec = _sum_head_model()
    rng = np.random.default_rng(4)
    img = rng.random((1, 6, 6)).astype(np.float32)
    g = nn.grad_wrt_feature_maps(spec, img, 1)
    np.testing.assert_array_equal(g, np.ones_like(g))


def test_grad_unaffected_by_other_logit_rows():
    spec = _sum_head_model()
    rng = np.random.default_rng(5)
    img = rng.random((1, 6, 6)).astype(np.float32)
    g1 = nn.grad_wrt_feature_maps(spec, img, 1)
    tampered = spec.layers[-1].weight.copy()
    tampered[0] *= 7.0
    tampered[2] += 3.0
    layers = list(spec.layers)
    layers[-1] = model_io.dense_layer(3, weight=tampered,
                                      bias=spec.layers[-1].bias)
    spec2 = model_io.new_model(spec.input_shape, layers)
    g2 = nn.grad_wrt_feature_maps(spec2, img, 1)
    np.testing.assert_array_equal(g1, g2)


def test_linear_head_row_doubling_doubles_gradient():
    spec = _sum_head_model()
    rng = np.random.default_rng(6)
    img = rng.random((1, 6, 6)).astype(np.float32)
    g1 = nn.grad_wrt_feature_maps(spec, img, 2)
    doubled = spec.layers[-1].weight.copy()
    doubled[2] *= 2.0
    layers = list(spec.layers)
    layers[-1] = model_io.dense_layer(3, weight=doubled, bias=spec.layers[-1].bias)
    g2 = nn.grad_wrt_feature_maps(model_io.new_model(spec.input_shape, layers), img, 2)
    np.testing.assert_allclose(g2, 2.0 * g1, rtol=1e-6)


def test_grad_invalid_class(model, first_seed):
    with pytest.raises(InvalidClass):
        nn.grad_wrt_feature_maps(model, first_seed.pixels, 99)


def test_forward_shape_mismatch(model):
    with pytest.raises(ShapeMismatch):
        nn.forward(model, np.zeros((3, 32, 32), dtype=np.float32))


def test_gradient_matches_finite_differences(model, first_seed, first_prediction):
    """Analytic gradient vs central differences at locally linear cells."""
    fmaps = first_prediction.target_feature_maps
    rng = np.random.default_rng(12345)
    for c in range(model.num_classes):
        g = nn.grad_wrt_feature_maps(model, first_seed.pixels, c,
                                     prediction=first_prediction)
        tested = 0
        for flat in rng.permutation(fmaps.size):
            cell = np.unravel_index(int(flat), fmaps.shape)
            fd, linear = H.fd_logit_gradient(model, fmaps, c, cell, 1e-3)
            if not linear:
                continue
            if not (abs(fd) < 1e-6 and abs(g[cell]) < 1e-6):
                rel = abs(fd - g[cell]) / max(abs(g[cell]), 1e-8)
                assert rel <= 1e-2, f"class {c} cell {cell}: fd {fd} vs {g[cell]}"
            tested += 1
            if tested == 32:
                break
        assert tested == 32
