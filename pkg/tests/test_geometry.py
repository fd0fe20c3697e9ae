import numpy as np
import pytest

from advflow.exceptions import ShapeError
from advflow.geometry import warp, warp_grad_flow, warp_grad_image


def fd_grad_flow(image, flow, upstream, h=1e-6):
    """Independent central-difference oracle for d<upstream, warp>/dflow."""
    image = image.astype(np.float64)
    out = np.zeros_like(flow, dtype=np.float64)
    it = np.nditer(flow, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        fp = flow.astype(np.float64).copy()
        fm = fp.copy()
        fp[idx] += h
        fm[idx] -= h
        lp = float(np.sum(warp(image, fp) * upstream))
        lm = float(np.sum(warp(image, fm) * upstream))
        out[idx] = (lp - lm) / (2 * h)
        it.iternext()
    return out


def fd_grad_image(image, flow, upstream, h=1e-6):
    image = image.astype(np.float64)
    out = np.zeros_like(image)
    it = np.nditer(image, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = image.copy()
        xm = image.copy()
        xp[idx] += h
        xm[idx] -= h
        out[idx] = float(np.sum((warp(xp, flow) - warp(xm, flow)) * upstream)) / (2 * h)
        it.iternext()
    return out


def test_zero_flow_is_exact_identity():
    rng = np.random.default_rng(0)
    img = rng.random((2, 6, 7, 3))
    out = warp(img, np.zeros((2, 6, 7, 2)))
    assert np.array_equal(out, img)


def test_zero_flow_identity_float32():
    rng = np.random.default_rng(1)
    img = rng.random((5, 5, 1)).astype(np.float32)
    assert np.array_equal(warp(img, np.zeros((5, 5, 2))), img)


def test_constant_shift_resamples_neighbors():
    # flow (1, 0) at every pixel pulls the value one column to the right
    img = np.arange(20, dtype=np.float64).reshape(4, 5)[..., None]
    flow = np.zeros((4, 5, 2))
    flow[..., 0] = 1.0
    out = warp(img, flow)
    assert np.array_equal(out[:, :-1, 0], img[:, 1:, 0])
    # last column samples off the edge and replicates the border
    assert np.array_equal(out[:, -1, 0], img[:, -1, 0])


def test_ramp_gradient_is_slope_everywhere():
    # on the ramp image I(y, x) = 3x the x-flow gradient is 3 at every
    # pixel, including the last row/column
    h, w = 5, 6
    img = np.tile(3.0 * np.arange(w), (h, 1))[..., None]
    up = np.ones((h, w, 1))
    g = warp_grad_flow(img, np.zeros((h, w, 2)), up)
    assert np.allclose(g[..., 0], 3.0, atol=1e-12)
    assert np.allclose(g[..., 1], 0.0, atol=1e-12)

    imgy = np.tile(2.0 * np.arange(h)[:, None], (1, w))[..., None]
    gy = warp_grad_flow(imgy, np.zeros((h, w, 2)), up)
    assert np.allclose(gy[..., 1], 2.0, atol=1e-12)


def test_grad_flow_matches_fd():
    rng = np.random.default_rng(7)
    for _ in range(5):
        img = rng.random((5, 5, 2))
        # keep fractional parts away from bilinear kinks
        flow = rng.integers(-1, 2, size=(5, 5, 2)) + rng.uniform(0.2, 0.8, (5, 5, 2))
        up = rng.normal(size=(5, 5, 2))
        got = warp_grad_flow(img, flow, up)
        want = fd_grad_flow(img, flow, up)
        assert np.allclose(got, want, rtol=1e-5, atol=1e-7)


def test_grad_image_matches_fd():
    rng = np.random.default_rng(8)
    for _ in range(5):
        img = rng.random((4, 6, 1))
        flow = rng.integers(-1, 2, size=(4, 6, 2)) + rng.uniform(0.2, 0.8, (4, 6, 2))
        up = rng.normal(size=(4, 6, 1))
        got = warp_grad_image(flow, up)
        want = fd_grad_image(img, flow, up)
        assert np.allclose(got, want, rtol=1e-5, atol=1e-7)


def test_grad_image_is_warp_transpose():
    # <warp(x, w), u> = <x, warp_grad_image(w, u)> exactly (both linear in x)
    rng = np.random.default_rng(9)
    for _ in range(10):
        img = rng.normal(size=(6, 5, 2))
        flow = rng.normal(scale=1.5, size=(6, 5, 2))
        up = rng.normal(size=(6, 5, 2))
        lhs = float(np.sum(warp(img, flow) * up))
        rhs = float(np.sum(img * warp_grad_image(flow, up)))
        assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))


def test_border_replication_far_flow():
    img = np.arange(12, dtype=np.float64).reshape(3, 4)[..., None]
    flow = np.full((3, 4, 2), 100.0)
    out = warp(img, flow)
    # everything samples the bottom-right corner
    assert np.all(out == img[-1, -1, 0])
    flow = np.full((3, 4, 2), -100.0)
    assert np.all(warp(img, flow) == img[0, 0, 0])


def test_batched_matches_loop():
    rng = np.random.default_rng(10)
    imgs = rng.random((4, 5, 5, 3))
    flows = rng.normal(scale=0.7, size=(4, 5, 5, 2))
    batched = warp(imgs, flows)
    for i in range(4):
        assert np.array_equal(batched[i], warp(imgs[i], flows[i]))


def test_dtype_preserved():
    img = np.random.default_rng(3).random((4, 4, 1)).astype(np.float32)
    out = warp(img, np.zeros((4, 4, 2)))
    assert out.dtype == np.float32


def test_shape_errors():
    img = np.zeros((4, 4, 1))
    with pytest.raises(ShapeError):
        warp(img, np.zeros((4, 4, 3)))  # flow trailing dim must be 2
    with pytest.raises(ShapeError):
        warp(img, np.zeros((3, 4, 2)))  # mismatched spatial dims
    with pytest.raises(ShapeError):
        warp(np.zeros((1, 4, 1)), np.zeros((1, 4, 2)))  # H must be >= 2
    with pytest.raises(ShapeError):
        warp(np.zeros((4,)), np.zeros((4, 4, 2)))  # image rank
