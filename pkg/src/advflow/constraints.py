"""Budgets, feasible sets, and the projection/sign operators that enforce them.

Pixel perturbations live in an l-infinity ball intersected with the valid
value range [-1, 1]. Flow fields live in an l_{2,inf} ball: the maximum
over pixels of the Euclidean norm of that pixel's 2-vector displacement
must not exceed the spatial budget. The steepest-ascent direction under
that geometry normalizes each 2-vector to unit length (a generalized sign:
coordinatewise sign is the same construction for the l-inf ball).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ShapeError

# 2-vectors shorter than this are treated as zero by generalized_sign;
# dividing by them would amplify float noise into arbitrary directions.
ZERO_NORM_GUARD = 1e-12


@dataclass(frozen=True)
class Budget:
    """Attack budget: pixel radius in [-1,1] units, spatial radius in pixels."""

    eps_pixel: float = 0.0
    eps_spatial: float = 0.0

    def __post_init__(self):
        if not (self.eps_pixel >= 0 and np.isfinite(self.eps_pixel)):
            raise ValueError(f"eps_pixel must be finite and >= 0, got {self.eps_pixel}")
        if not (self.eps_spatial >= 0 and np.isfinite(self.eps_spatial)):
            raise ValueError(f"eps_spatial must be finite and >= 0, got {self.eps_spatial}")


def _check_flow(flow: np.ndarray) -> None:
    if flow.ndim < 1 or flow.shape[-1] != 2:
        raise ShapeError(f"flow field must have a trailing axis of size 2, got {flow.shape}")


def scalar_sign(t: np.ndarray) -> np.ndarray:
    """Coordinatewise sign with sign(0) = 0."""
    return np.sign(t)


def generalized_sign(flow: np.ndarray) -> np.ndarray:
    """Normalize each per-pixel 2-vector to unit Euclidean length.

    Vectors with norm below ZERO_NORM_GUARD map to the zero vector. Every
    output 2-vector therefore has norm exactly 0 or approximately 1, and
    the direction of each nonzero vector is preserved.
    """
    _check_flow(flow)
    norms = np.sqrt(np.sum(np.square(flow), axis=-1, keepdims=True))
    out = np.zeros_like(flow)
    np.divide(flow, norms, out=out, where=norms >= ZERO_NORM_GUARD)
    return out


def l2inf_norm(flow: np.ndarray) -> float:
    """Max over pixels of the Euclidean norm of the 2-vector displacement."""
    _check_flow(flow)
    sq = np.sum(np.square(flow, dtype=np.float64), axis=-1)
    return float(np.sqrt(sq.max())) if sq.size else 0.0


def project_l2inf(flow: np.ndarray, eps: float) -> np.ndarray:
    """Project onto the l_{2,inf} ball of radius ``eps``.

    The projection is rowwise: each per-pixel 2-vector with norm above
    ``eps`` is radially shrunk onto the sphere, all others pass through
    bit-exactly (their scale factor is exactly 1.0).
    """
    _check_flow(flow)
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    norms = np.sqrt(np.sum(np.square(flow), axis=-1, keepdims=True))
    scale = np.ones_like(norms)
    np.divide(eps, norms, out=scale, where=norms > eps)
    return flow * scale


def project_linf(delta: np.ndarray, eps: float) -> np.ndarray:
    """Project onto the l-infinity ball of radius ``eps`` (a clip)."""
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    return np.clip(delta, -eps, eps)


def clamp_feasible_delta(delta: np.ndarray, base: np.ndarray, eps: float) -> np.ndarray:
    """Clamp ``delta`` so that |delta| <= eps and base + delta stays in [-1, 1].

    Semantically this is the l-infinity clip followed by the value-range
    clip; it is computed as a single clip against the interval intersection
    [max(-eps, -1-base), min(eps, 1-base)], which makes the operation
    exactly idempotent. For any valid base the interval contains 0, so a
    zero delta always passes through unchanged.
    """
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    if delta.shape != base.shape:
        raise ShapeError(f"delta {delta.shape} and base {base.shape} must match")
    lo = np.maximum(-eps, -1.0 - base)
    hi = np.minimum(eps, 1.0 - base)
    return np.clip(delta, lo, hi)


def random_init_flow(shape: tuple[int, int], eps: float, rng: np.random.Generator) -> np.ndarray:
    """Draw an (H, W, 2) flow with each 2-vector uniform on the eps-disk.

    Per pixel, an angle is drawn uniformly on [0, 2*pi) and then a radius
    as eps * sqrt(U); the sqrt makes the density uniform over the disk
    area rather than clustered at the center. Draw order (angle block,
    then radius block) is part of the reproducibility contract.
    """
    h, w = shape
    angle = rng.uniform(0.0, 2.0 * np.pi, size=(h, w))
    radius = eps * np.sqrt(rng.uniform(0.0, 1.0, size=(h, w)))
    return np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=-1)


def random_init_delta(shape: tuple[int, ...], eps: float, rng: np.random.Generator) -> np.ndarray:
    """Draw a pixel perturbation uniform on the l-infinity ball of radius eps."""
    return rng.uniform(-eps, eps, size=shape)
