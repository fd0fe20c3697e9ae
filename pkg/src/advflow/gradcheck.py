"""Finite-difference verification of every hand-derived gradient path.

Four checks: the two warp adjoints (elementwise central differences over
flow and image entries) and the classifier's input and parameter
gradients (central differences along random unit directions, which
catches scaling and wiring errors without perturbing 200k coordinates
one at a time).

Test flows are drawn with fractional parts in [0.2, 0.8] and kept well
away from the sampling clamp thresholds, so no finite-difference step
straddles a bilinear cell boundary; classifier checks rely on random
preactivations being (with probability ~1) far from the ReLU and pooling
kinks at the chosen step size. All draws come from named substreams of
one seed, so a passing configuration passes forever.

``fault`` deliberately corrupts one analytic gradient by a relative
1e-3, for verifying that the harness actually detects a broken path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .classifier import ConvNet, one_hot
from .geometry import warp, warp_grad_flow, warp_grad_image

CHECKS = ("warp_grad_flow", "warp_grad_image", "input_gradient", "param_gradient")

_FAULT_SCALE = 1e-3


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_rel_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol


def _rel_err(analytic: float, fd: float) -> float:
    return abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-10)


def _safe_flow(g: np.random.Generator, h: int, w: int) -> np.ndarray:
    whole = g.integers(-2, 2, size=(h, w, 2)).astype(np.float64)
    frac = g.uniform(0.2, 0.8, size=(h, w, 2))
    return whole + frac


def _check_warp_flow(g: np.random.Generator, corrupt: bool) -> float:
    h = w = 8
    image = g.uniform(-1, 1, size=(h, w, 1))
    flow = _safe_flow(g, h, w)
    upstream = g.normal(size=(h, w, 1))
    analytic = warp_grad_flow(image, flow, upstream)
    if corrupt:
        analytic = analytic * (1 + _FAULT_SCALE)
    step = 1e-6
    fd = np.zeros_like(flow)
    for i in range(h):
        for j in range(w):
            for k in range(2):
                plus = flow.copy()
                plus[i, j, k] += step
                minus = flow.copy()
                minus[i, j, k] -= step
                fd[i, j, k] = (
                    (upstream * warp(image, plus)).sum()
                    - (upstream * warp(image, minus)).sum()
                ) / (2 * step)
    scale = max(np.abs(fd).max(), np.abs(analytic).max(), 1e-10)
    return float(np.abs(analytic - fd).max() / scale)


def _check_warp_image(g: np.random.Generator, corrupt: bool) -> float:
    h = w = 8
    image = g.uniform(-1, 1, size=(h, w, 1))
    flow = _safe_flow(g, h, w)
    upstream = g.normal(size=(h, w, 1))
    analytic = warp_grad_image(flow, upstream)
    if corrupt:
        analytic = analytic * (1 + _FAULT_SCALE)
    step = 1e-6
    fd = np.zeros_like(image)
    for i in range(h):
        for j in range(w):
            plus = image.copy()
            plus[i, j, 0] += step
            minus = image.copy()
            minus[i, j, 0] -= step
            fd[i, j, 0] = (
                (upstream * warp(plus, flow)).sum() - (upstream * warp(minus, flow)).sum()
            ) / (2 * step)
    scale = max(np.abs(fd).max(), np.abs(analytic).max(), 1e-10)
    return float(np.abs(analytic - fd).max() / scale)


def _fresh_net(g: np.random.Generator) -> ConvNet:
    return ConvNet(8, 8, 1, 4, dtype=np.float64, init_seed=int(g.integers(2**31)))


def _loss_sum(net: ConvNet, x: np.ndarray, t: np.ndarray) -> float:
    from .classifier import _log_softmax  # forward-only loss, no counter

    logits = net.logits(x)
    logp = _log_softmax(logits)
    return float(-(t * logp).sum())


def _check_input_grad(g: np.random.Generator, corrupt: bool) -> float:
    net = _fresh_net(g)
    x = g.uniform(-1, 1, size=(3, 8, 8, 1))
    t = one_hot(g.integers(0, 4, size=3), 4)
    _, grad = net.loss_and_input_grad(x, t)
    if corrupt:
        grad = grad * (1 + _FAULT_SCALE)
    step = 1e-5
    worst = 0.0
    for _ in range(4):
        d = g.normal(size=x.shape)
        d /= np.sqrt((d**2).sum())
        fd = (_loss_sum(net, x + step * d, t) - _loss_sum(net, x - step * d, t)) / (2 * step)
        worst = max(worst, _rel_err(float((grad * d).sum()), fd))
    return worst


def _check_param_grad(g: np.random.Generator, corrupt: bool) -> float:
    net = _fresh_net(g)
    x = g.uniform(-1, 1, size=(3, 8, 8, 1))
    t = one_hot(g.integers(0, 4, size=3), 4)
    _, grads = net.loss_and_param_grads(x, t)
    step = 1e-5
    worst = 0.0
    for name, grad in grads.items():
        if corrupt:
            grad = grad * (1 + _FAULT_SCALE)
        for _ in range(2):
            d = g.normal(size=grad.shape)
            d /= np.sqrt((d**2).sum())
            saved = net.params[name].copy()
            net.params[name] = saved + step * d
            lp = _mean_loss(net, x, t)
            net.params[name] = saved - step * d
            lm = _mean_loss(net, x, t)
            net.params[name] = saved
            fd = (lp - lm) / (2 * step)
            worst = max(worst, _rel_err(float((grad * d).sum()), fd))
    return worst


def _mean_loss(net: ConvNet, x: np.ndarray, t: np.ndarray) -> float:
    return _loss_sum(net, x, t) / x.shape[0]


_CHECK_FNS = {
    "warp_grad_flow": _check_warp_flow,
    "warp_grad_image": _check_warp_image,
    "input_gradient": _check_input_grad,
    "param_gradient": _check_param_grad,
}


def run_gradcheck(
    seed: int = 0, instances: int = 20, tol: float = 1e-4, fault: str | None = None
) -> list[CheckResult]:
    """Run every check on ``instances`` fresh random instances each.

    Returns one result per checked operation with its worst relative
    error. ``fault`` names an operation whose analytic gradient is
    corrupted before comparison (the harness must then report a failure).
    """
    if fault is not None and fault not in CHECKS:
        raise ValueError(f"fault must be one of {CHECKS}, got {fault!r}")
    results = []
    for name in CHECKS:
        fn = _CHECK_FNS[name]
        worst = 0.0
        for i in range(instances):
            g = rng.stream(seed, "gradcheck", name, i)
            worst = max(worst, fn(g, corrupt=(fault == name)))
        results.append(CheckResult(name, worst, tol))
    return results
