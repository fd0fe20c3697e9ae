"""Differentiable image warping under a per-pixel flow field.

A flow field assigns every output pixel a 2-vector ``(u, v)``: the output
at pixel ``(row, col)`` is sampled from the input at ``(row + v, col + u)``
by bilinear interpolation (backward warping, so the map is defined for
every output pixel and no holes appear). Sampling coordinates are clamped
to the image rectangle, which replicates the border; the flow gradient is
zero on any axis whose coordinate was clamped outside the rectangle.

Zero flow is the identity, bit for bit: the sampled corner weights reduce
to exactly one and zero, so no arithmetic perturbs the input values.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ShapeError


def _check_pair(image: np.ndarray, flow: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    """Validate an (image, flow) pair and lift both to batch form."""
    single = image.ndim == 3
    if single:
        image = image[None]
        flow = flow[None] if flow.ndim == 3 else flow
    if image.ndim != 4:
        raise ShapeError(f"image must be (H,W,C) or (N,H,W,C), got shape {image.shape}")
    if flow.ndim != 4 or flow.shape[-1] != 2:
        raise ShapeError(f"flow must be (H,W,2) or (N,H,W,2), got shape {flow.shape}")
    if image.shape[:3] != flow.shape[:3]:
        raise ShapeError(
            f"image {image.shape} and flow {flow.shape} disagree on batch or spatial dims"
        )
    if image.shape[1] < 2 or image.shape[2] < 2:
        raise ShapeError(f"warping needs height and width >= 2, got {image.shape}")
    return image, flow, single


def _corners(flow: np.ndarray, h: int, w: int):
    """Corner indices, interpolation weights, and clamp masks for sampling.

    The integer cell is chosen as ``x0 = clip(floor(sx), 0, W-2)`` with
    ``x1 = x0 + 1``, so both corners are always distinct pixels and the
    weight ``wx = sx - x0`` spans [0, 1]. This makes the gradient formula
    a genuine two-point difference even on the last row and column.
    """
    rows = np.arange(h, dtype=flow.dtype).reshape(1, h, 1)
    cols = np.arange(w, dtype=flow.dtype).reshape(1, 1, w)
    tx = cols + flow[..., 0]
    ty = rows + flow[..., 1]
    # closed-interval masks: gradient survives exactly on the border,
    # dies only where the clamp actually moved the sample point
    mx = (tx >= 0) & (tx <= w - 1)
    my = (ty >= 0) & (ty <= h - 1)
    sx = np.clip(tx, 0, w - 1)
    sy = np.clip(ty, 0, h - 1)
    x0 = np.clip(np.floor(sx), 0, w - 2).astype(np.intp)
    y0 = np.clip(np.floor(sy), 0, h - 2).astype(np.intp)
    wx = sx - x0
    wy = sy - y0
    return x0, y0, x0 + 1, y0 + 1, wx, wy, mx, my


def warp(image: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Bilinearly warp ``image`` by ``flow``.

    Accepts a single (H,W,C) image with an (H,W,2) flow or batches of
    either, and returns an array shaped like ``image``.
    """
    image, flow, single = _check_pair(image, flow)
    n, h, w, _ = image.shape
    x0, y0, x1, y1, wx, wy, _, _ = _corners(flow, h, w)
    b = np.arange(n).reshape(n, 1, 1)
    wx = wx[..., None]
    wy = wy[..., None]
    out = (
        (1 - wy) * ((1 - wx) * image[b, y0, x0] + wx * image[b, y0, x1])
        + wy * ((1 - wx) * image[b, y1, x0] + wx * image[b, y1, x1])
    )
    out = out.astype(image.dtype, copy=False)
    return out[0] if single else out


def warp_grad_flow(image: np.ndarray, flow: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Gradient of ``sum(upstream * warp(image, flow))`` with respect to ``flow``.

    ``upstream`` has the shape of the warped image; the result has the
    shape of ``flow``. Derived by hand from the bilinear kernel: the
    derivative along x is the y-interpolated difference of the two corner
    columns, and symmetrically for y; both are masked to zero where the
    sample coordinate was clamped off the image.
    """
    image, flow, single = _check_pair(image, flow)
    up = upstream[None] if upstream.ndim == 3 else upstream
    if up.shape != image.shape:
        raise ShapeError(f"upstream {upstream.shape} must match image {image.shape}")
    n, h, w, _ = image.shape
    x0, y0, x1, y1, wx, wy, mx, my = _corners(flow, h, w)
    b = np.arange(n).reshape(n, 1, 1)
    i00 = image[b, y0, x0]
    i01 = image[b, y0, x1]
    i10 = image[b, y1, x0]
    i11 = image[b, y1, x1]
    wxc = wx[..., None]
    wyc = wy[..., None]
    dsx = (1 - wyc) * (i01 - i00) + wyc * (i11 - i10)
    dsy = (1 - wxc) * (i10 - i00) + wxc * (i11 - i01)
    gu = (up * dsx).sum(axis=-1) * mx
    gv = (up * dsy).sum(axis=-1) * my
    out = np.stack([gu, gv], axis=-1).astype(flow.dtype, copy=False)
    return out[0] if single else out


def warp_grad_image(flow: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Gradient of ``sum(upstream * warp(image, flow))`` with respect to ``image``.

    The adjoint of the gather: each upstream value is scattered to the four
    corner pixels it sampled, weighted by the same bilinear coefficients.
    With zero flow this returns ``upstream`` unchanged.
    """
    up = upstream
    single = up.ndim == 3
    if single:
        up = up[None]
        flow = flow[None] if flow.ndim == 3 else flow
    if up.ndim != 4:
        raise ShapeError(f"upstream must be (H,W,C) or (N,H,W,C), got {upstream.shape}")
    if flow.ndim != 4 or flow.shape[-1] != 2 or flow.shape[:3] != up.shape[:3]:
        raise ShapeError(f"flow {flow.shape} does not match upstream {upstream.shape}")
    if up.shape[1] < 2 or up.shape[2] < 2:
        raise ShapeError(f"warping needs height and width >= 2, got {up.shape}")
    n, h, w, c = up.shape
    x0, y0, x1, y1, wx, wy, _, _ = _corners(flow, h, w)
    base = np.arange(n).reshape(n, 1, 1) * (h * w)
    flat00 = (base + y0 * w + x0).ravel()
    flat01 = (base + y0 * w + x1).ravel()
    flat10 = (base + y1 * w + x0).ravel()
    flat11 = (base + y1 * w + x1).ravel()
    w00 = ((1 - wy) * (1 - wx)).ravel()
    w01 = ((1 - wy) * wx).ravel()
    w10 = (wy * (1 - wx)).ravel()
    w11 = (wy * wx).ravel()
    out = np.zeros((n * h * w, c), dtype=np.float64)
    size = n * h * w
    for ch in range(c):
        vals = up[..., ch].ravel()
        acc = np.bincount(flat00, weights=w00 * vals, minlength=size)
        acc += np.bincount(flat01, weights=w01 * vals, minlength=size)
        acc += np.bincount(flat10, weights=w10 * vals, minlength=size)
        acc += np.bincount(flat11, weights=w11 * vals, minlength=size)
        out[:, ch] = acc
    out = out.reshape(n, h, w, c).astype(up.dtype, copy=False)
    return out[0] if single else out
