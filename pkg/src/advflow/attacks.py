"""Budget-constrained adversarial attack generators.

All attacks share one parameterization: a pixel perturbation ``delta``
bounded in l-infinity norm, a flow field ``omega`` bounded in l_{2,inf}
norm, or both. Joint attacks reparameterize the adversarial image as
``warp(x, omega) + delta`` (or ``warp(x + delta, omega)`` for the
pixel-first order), so the two budgets stay individually auditable and
the pixel variable is clamped so the composed image stays in range.

Iterated attacks accumulate the flow in parameter space and re-warp the
clean image every step, rather than warping warped images, so repeated
interpolation never compounds. With either budget at zero, every
generator collapses exactly (same arithmetic, same random draws on the
surviving variable) onto the corresponding single-constraint attack.

Attack variables are carried in float64 regardless of the model dtype;
inputs are cast at the model boundary. This keeps the feasibility
invariants (flow inside the spatial ball, delta inside the pixel ball,
both to 1e-12) independent of model precision.

Per-example randomness is keyed by (config seed, stream label, example
index), so an example's init noise does not depend on its batch or on
the presence of other examples.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import rng
from .constraints import (
    Budget,
    clamp_feasible_delta,
    generalized_sign,
    l2inf_norm,
    project_l2inf,
    random_init_delta,
    random_init_flow,
    scalar_sign,
)
from .exceptions import ShapeError
from .geometry import warp, warp_grad_flow, warp_grad_image

FEAS_TOL = 1e-12


@dataclass(frozen=True)
class AttackConfig:
    """Shared attack knobs.

    ``pixel_step`` and ``spatial_step`` are the per-iteration step sizes;
    budgets live in ``budget``. ``targeted`` flips the gradient direction:
    untargeted attacks ascend the loss on the true label, targeted attacks
    descend it on a chosen wrong label.
    """

    budget: Budget
    steps: int = 20
    pixel_step: float = 0.0
    spatial_step: float = 0.0
    random_start: bool = True
    targeted: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        for name in ("pixel_step", "spatial_step"):
            v = getattr(self, name)
            if not (v >= 0 and np.isfinite(v)):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


@dataclass
class AttackResult:
    """Adversarial images plus the variables and loss trace that produced them.

    ``images`` is the clean batch composed with ``flow`` and ``delta``
    under the generating attack's composition order, clipped to [-1, 1];
    ``flow`` is feasible for the spatial budget and ``delta`` for the
    pixel budget. ``loss_trace`` has one row per recorded step, one column
    per example (phases concatenate for two-phase attacks).
    """

    images: np.ndarray
    flow: np.ndarray
    delta: np.ndarray
    loss_trace: np.ndarray


def _prepare(x: np.ndarray, target, example_indices):
    single = x.ndim == 3
    xb = x[None] if single else x
    if xb.ndim != 4:
        raise ShapeError(f"input must be (H,W,C) or (N,H,W,C), got {x.shape}")
    n = xb.shape[0]
    if np.isscalar(target):
        tgt = np.full(n, int(target))
    else:
        tgt = np.asarray(target)
        if single and tgt.ndim == 1 and not np.issubdtype(tgt.dtype, np.integer):
            tgt = tgt[None]
    if example_indices is None:
        idx = np.arange(n)
    else:
        idx = np.asarray(example_indices)
        if idx.shape != (n,):
            raise ShapeError(f"example_indices must have shape ({n},), got {idx.shape}")
    return xb, tgt, idx, single


def _f64(a: np.ndarray) -> np.ndarray:
    return a.astype(np.float64, copy=False)


def _init_flow(shape, eps, seed, indices, random_start):
    n, h, w = shape
    if not random_start:
        return np.zeros((n, h, w, 2))
    return np.stack(
        [random_init_flow((h, w), eps, rng.stream(seed, rng.FLOW_INIT, int(i))) for i in indices]
    )


def _init_delta(shape, eps, base64, seed, indices, random_start):
    if not random_start:
        return np.zeros(shape)
    raw = np.stack(
        [
            random_init_delta(shape[1:], eps, rng.stream(seed, rng.DELTA_INIT, int(i)))
            for i in indices
        ]
    )
    return clamp_feasible_delta(raw, base64, eps)


def _delta_update(delta, grad, beta, base64, eps, direction):
    # sign in float64: an f32 sign would drag the step to f32 precision
    # and break the exact equivalences between attack parameterizations
    step = (direction * beta) * scalar_sign(_f64(grad))
    return clamp_feasible_delta(delta + step, base64, eps)


def _flow_update(flow, grad, alpha, eps, direction):
    return project_l2inf(flow + alpha * generalized_sign(direction * _f64(grad)), eps)


def _result(net, images64, flow, delta, trace, single, budget):
    images = np.clip(images64, -1.0, 1.0).astype(net.dtype, copy=False)
    assert l2inf_norm(flow) <= budget.eps_spatial + FEAS_TOL
    assert float(np.abs(delta).max(initial=0.0)) <= budget.eps_pixel + FEAS_TOL
    trace = np.asarray(trace)
    if single:
        return AttackResult(images[0], flow[0], delta[0], trace[:, 0])
    return AttackResult(images, flow, delta, trace)


def pgd_pixel(net, x, target, cfg: AttackConfig, *, example_indices=None) -> AttackResult:
    """Iterated sign-gradient pixel attack inside the l-infinity ball.

    Each step ascends (or descends, if targeted) the loss at the current
    iterate by ``pixel_step`` times the gradient sign, then re-clamps the
    accumulated perturbation to the budget and the valid range.
    """
    xb, tgt, idx, single = _prepare(x, target, example_indices)
    eps = cfg.budget.eps_pixel
    direction = -1.0 if cfg.targeted else 1.0
    x64 = _f64(xb)
    delta = _init_delta(xb.shape, eps, x64, cfg.seed, idx, cfg.random_start)
    trace = []
    for _ in range(cfg.steps):
        losses, grad = net.loss_and_input_grad(xb + delta, tgt)
        trace.append(losses)
        delta = _delta_update(delta, grad, cfg.pixel_step, x64, eps, direction)
    zero_flow = np.zeros(xb.shape[:3] + (2,))
    return _result(net, x64 + delta, zero_flow, delta, trace, single, cfg.budget)


def fgsm(net, x, target, cfg: AttackConfig, *, example_indices=None) -> AttackResult:
    """Single sign-gradient step of size eps_pixel, no random start.

    Exactly pgd_pixel with steps=1, pixel_step=eps_pixel and the random
    start disabled; implemented as such so the equivalence is structural.
    """
    one_step = replace(cfg, steps=1, pixel_step=cfg.budget.eps_pixel, random_start=False)
    return pgd_pixel(net, x, target, one_step, example_indices=example_indices)


def spatial_attack(net, x, target, cfg: AttackConfig, *, example_indices=None) -> AttackResult:
    """Iterated flow attack inside the l_{2,inf} ball.

    Every step re-warps the clean image by the current flow, pulls the
    image-space gradient back through the warp, moves each pixel's
    2-vector along its unit-normalized gradient by ``spatial_step``, and
    projects onto the budget ball.
    """
    xb, tgt, idx, single = _prepare(x, target, example_indices)
    eps = cfg.budget.eps_spatial
    direction = -1.0 if cfg.targeted else 1.0
    x64 = _f64(xb)
    flow = _init_flow(xb.shape[:3], eps, cfg.seed, idx, cfg.random_start)
    trace = []
    for _ in range(cfg.steps):
        warped = warp(x64, flow)
        losses, grad = net.loss_and_input_grad(warped, tgt)
        trace.append(losses)
        gflow = warp_grad_flow(x64, flow, _f64(grad))
        flow = _flow_update(flow, gflow, cfg.spatial_step, eps, direction)
    delta = np.zeros(xb.shape)
    return _result(net, warp(x64, flow) + delta, flow, delta, trace, single, cfg.budget)


def joint_attack_sp(net, x, target, cfg: AttackConfig, *, example_indices=None) -> AttackResult:
    """Joint attack, spatial-then-pixel order within each step.

    Two gradient evaluations per step: the first updates the flow at
    ``warp(x, w) + d``, the second updates the pixel perturbation at the
    freshly warped point ``warp(x, w') + d``. The pixel variable is kept
    feasible relative to the warped clean image, so the composed output
    needs no post-hoc correction.
    """
    xb, tgt, idx, single = _prepare(x, target, example_indices)
    ew, ex = cfg.budget.eps_spatial, cfg.budget.eps_pixel
    direction = -1.0 if cfg.targeted else 1.0
    x64 = _f64(xb)
    flow = _init_flow(xb.shape[:3], ew, cfg.seed, idx, cfg.random_start)
    warped = warp(x64, flow)
    delta = _init_delta(xb.shape, ex, warped, cfg.seed, idx, cfg.random_start)
    trace = []
    for _ in range(cfg.steps):
        losses, grad = net.loss_and_input_grad(warped + delta, tgt)
        trace.append(losses)
        gflow = warp_grad_flow(x64, flow, _f64(grad))
        flow = _flow_update(flow, gflow, cfg.spatial_step, ew, direction)
        warped = warp(x64, flow)
        _, grad2 = net.loss_and_input_grad(warped + delta, tgt)
        delta = _delta_update(delta, grad2, cfg.pixel_step, warped, ex, direction)
    return _result(net, warped + delta, flow, delta, trace, single, cfg.budget)


def joint_attack_ps(net, x, target, cfg: AttackConfig, *, example_indices=None) -> AttackResult:
    """Joint attack, pixel-then-spatial composition ``warp(x + d, w)``.

    The pixel perturbation applies before the warp and is clamped
    relative to the clean image; the warped composition, as a convex
    combination of in-range values, then stays in range automatically.
    Per step the pixel variable moves first (gradient chained through the
    warp adjoint), the flow second on a fresh gradient.
    """
    xb, tgt, idx, single = _prepare(x, target, example_indices)
    ew, ex = cfg.budget.eps_spatial, cfg.budget.eps_pixel
    direction = -1.0 if cfg.targeted else 1.0
    x64 = _f64(xb)
    flow = _init_flow(xb.shape[:3], ew, cfg.seed, idx, cfg.random_start)
    delta = _init_delta(xb.shape, ex, x64, cfg.seed, idx, cfg.random_start)
    trace = []
    for _ in range(cfg.steps):
        losses, grad = net.loss_and_input_grad(warp(x64 + delta, flow), tgt)
        trace.append(losses)
        gdelta = warp_grad_image(flow, _f64(grad))
        delta = _delta_update(delta, gdelta, cfg.pixel_step, x64, ex, direction)
        perturbed = x64 + delta
        _, grad2 = net.loss_and_input_grad(warp(perturbed, flow), tgt)
        gflow = warp_grad_flow(perturbed, flow, _f64(grad2))
        flow = _flow_update(flow, gflow, cfg.spatial_step, ew, direction)
    return _result(net, warp(x64 + delta, flow), flow, delta, trace, single, cfg.budget)


def cascade_attack(net, x, target, cfg: AttackConfig, *, example_indices=None) -> AttackResult:
    """Spatial attack to completion, then a pixel attack on its output.

    A sequential baseline: 2m gradient evaluations for m steps of each
    phase, but no interleaving, so the pixel phase cannot repair what the
    flow phase overcommitted to. The loss trace concatenates both phases.
    """
    xb, tgt, idx, single = _prepare(x, target, example_indices)
    phase1 = spatial_attack(net, xb, tgt, cfg, example_indices=idx)
    phase2 = pgd_pixel(net, phase1.images, tgt, cfg, example_indices=idx)
    trace = np.concatenate([phase1.loss_trace, phase2.loss_trace], axis=0)
    if single:
        return AttackResult(phase2.images[0], phase1.flow[0], phase2.delta[0], trace[:, 0])
    return AttackResult(phase2.images, phase1.flow, phase2.delta, trace)


def one_pass_attack(net, x, target, cfg: AttackConfig, *, example_indices=None) -> AttackResult:
    """Joint attack with a single shared gradient evaluation per step.

    Both variables update from the same backward pass (m evaluations for
    m steps, against 2m for the double-pass joint attacks); each is then
    projected onto its own feasible set, the pixel variable against the
    freshly warped base.
    """
    xb, tgt, idx, single = _prepare(x, target, example_indices)
    ew, ex = cfg.budget.eps_spatial, cfg.budget.eps_pixel
    direction = -1.0 if cfg.targeted else 1.0
    x64 = _f64(xb)
    flow = _init_flow(xb.shape[:3], ew, cfg.seed, idx, cfg.random_start)
    warped = warp(x64, flow)
    delta = _init_delta(xb.shape, ex, warped, cfg.seed, idx, cfg.random_start)
    trace = []
    for _ in range(cfg.steps):
        losses, grad = net.loss_and_input_grad(warped + delta, tgt)
        trace.append(losses)
        gflow = warp_grad_flow(x64, flow, _f64(grad))
        flow = _flow_update(flow, gflow, cfg.spatial_step, ew, direction)
        warped = warp(x64, flow)
        delta = _delta_update(delta, grad, cfg.pixel_step, warped, ex, direction)
    return _result(net, warped + delta, flow, delta, trace, single, cfg.budget)


ATTACKS = {
    "fgsm": fgsm,
    "pgd": pgd_pixel,
    "spatial": spatial_attack,
    "joint-sp": joint_attack_sp,
    "joint-ps": joint_attack_ps,
    "cascade": cascade_attack,
    "one-pass": one_pass_attack,
}
