import numpy as np
import pytest

from advflow import rng
from advflow.constraints import (
    Budget,
    clamp_feasible_delta,
    generalized_sign,
    l2inf_norm,
    project_l2inf,
    project_linf,
    random_init_delta,
    random_init_flow,
)


def oracle_project_l2inf(flow, eps):
    """Row-wise closed form: shrink each 2-vector onto the eps disk."""
    out = flow.astype(np.float64).copy()
    flat = out.reshape(-1, 2)
    for i in range(flat.shape[0]):
        n = np.sqrt(flat[i, 0] ** 2 + flat[i, 1] ** 2)
        if n > eps:
            flat[i] *= eps / n
    return out


def test_generalized_sign_unit_norm():
    g = np.random.default_rng(0)
    flow = g.normal(size=(50, 2)) * 3
    s = generalized_sign(flow)
    norms = np.sqrt((s**2).sum(-1))
    assert np.allclose(norms, 1.0, atol=1e-12)
    # direction preserved
    cross = flow[:, 0] * s[:, 1] - flow[:, 1] * s[:, 0]
    assert np.allclose(cross, 0.0, atol=1e-9)
    dots = (flow * s).sum(-1)
    assert np.all(dots > 0)


def test_generalized_sign_zero_rows():
    flow = np.zeros((4, 2))
    flow[2] = [1e-15, 0]  # below the guard
    s = generalized_sign(flow)
    assert np.array_equal(s, np.zeros((4, 2)))


def test_project_l2inf_matches_oracle():
    g = np.random.default_rng(1)
    for _ in range(100):
        flow = g.normal(size=(8, 8, 2)) * g.uniform(0.1, 4)
        eps = g.uniform(0.05, 2.0)
        got = project_l2inf(flow, eps)
        want = oracle_project_l2inf(flow, eps)
        assert np.max(np.abs(got - want)) <= 1e-12
        assert l2inf_norm(got) <= eps + 1e-12


def test_project_l2inf_idempotent():
    g = np.random.default_rng(2)
    for _ in range(100):
        flow = g.normal(size=(6, 7, 2)) * 2
        eps = g.uniform(0.1, 1.5)
        once = project_l2inf(flow, eps)
        twice = project_l2inf(once, eps)
        assert np.max(np.abs(twice - once)) <= 1e-12


def test_project_l2inf_feasible_untouched():
    g = np.random.default_rng(3)
    flow = g.normal(size=(5, 5, 2))
    flow = project_l2inf(flow, 0.4)
    # already inside: projection is the identity bit for bit
    assert np.array_equal(project_l2inf(flow, 0.5), flow)


def test_project_l2inf_is_nearest_point():
    # projection beats 1000 random feasible candidates in euclidean distance
    g = np.random.default_rng(4)
    for _ in range(100):
        flow = g.normal(size=(4, 4, 2)) * 2
        eps = g.uniform(0.2, 1.0)
        proj = project_l2inf(flow, eps)
        d_proj = np.linalg.norm((proj - flow).ravel())
        cand = g.normal(size=(1000,) + flow.shape)
        norms = np.sqrt((cand**2).sum(-1, keepdims=True))
        cand = np.where(norms > eps, cand * (eps / np.maximum(norms, 1e-30)), cand)
        d_cand = np.linalg.norm((cand - flow).reshape(1000, -1), axis=1)
        assert np.all(d_proj <= d_cand + 1e-9)


def test_project_l2inf_zero_budget():
    flow = np.random.default_rng(5).normal(size=(3, 3, 2))
    assert np.array_equal(project_l2inf(flow, 0.0), np.zeros_like(flow))


def test_project_linf():
    d = np.array([-2.0, -0.1, 0.0, 0.1, 2.0])
    assert np.array_equal(project_linf(d, 0.5), [-0.5, -0.1, 0.0, 0.1, 0.5])


def test_clamp_feasible_delta_properties():
    g = np.random.default_rng(6)
    for _ in range(100):
        base = g.uniform(-1, 1, size=(6, 6, 1))
        delta = g.normal(size=(6, 6, 1))
        eps = g.uniform(0.01, 0.5)
        c = clamp_feasible_delta(delta, base, eps)
        assert np.max(np.abs(c)) <= eps
        assert np.all(base + c >= -1.0) and np.all(base + c <= 1.0)
        # exactly idempotent
        assert np.array_equal(clamp_feasible_delta(c, base, eps), c)


def test_clamp_feasible_delta_is_nearest_point():
    g = np.random.default_rng(7)
    for _ in range(100):
        base = g.uniform(-1, 1, size=(16,))
        delta = g.normal(size=(16,))
        eps = 0.3
        c = clamp_feasible_delta(delta, base, eps)
        d_c = np.linalg.norm(c - delta)
        cand = g.uniform(-eps, eps, size=(1000, 16))
        cand = np.clip(cand, -1.0 - base, 1.0 - base)
        d_cand = np.linalg.norm(cand - delta, axis=1)
        assert np.all(d_c <= d_cand + 1e-9)


def test_clamp_matches_sequential_form():
    # one-clip implementation agrees with clip-then-clip wording
    g = np.random.default_rng(8)
    base = g.uniform(-1, 1, size=(100,))
    delta = g.normal(size=(100,)) * 2
    eps = 0.25
    got = clamp_feasible_delta(delta, base, eps)
    step1 = np.clip(delta, -eps, eps)
    want = np.clip(base + step1, -1.0, 1.0) - base
    assert np.max(np.abs(got - want)) <= 1e-12


def test_l2inf_norm_values():
    flow = np.zeros((2, 2, 2))
    flow[0, 0] = [3.0, 4.0]
    assert l2inf_norm(flow) == 5.0
    assert l2inf_norm(np.zeros((3, 3, 2))) == 0.0


def test_budget_validation():
    Budget(0.0, 0.0)
    Budget(0.1, 0.5)
    with pytest.raises(ValueError):
        Budget(-0.1, 0.0)
    with pytest.raises(ValueError):
        Budget(0.0, np.inf)


def test_random_init_flow_in_disk():
    g = rng.stream(0, "t")
    flow = random_init_flow((9, 9), 0.3, g)
    assert flow.shape == (9, 9, 2)
    norms = np.sqrt((flow**2).sum(-1))
    assert np.all(norms <= 0.3 + 1e-12)


def test_random_init_flow_covers_disk():
    # area-uniform in the disk: E[r^2] = eps^2/2, check within 3 sigma
    g = rng.stream(1, "t")
    eps = 1.0
    flow = random_init_flow((200, 200), eps, g)
    r2 = (flow**2).sum(-1).ravel()
    n = r2.size
    # var(r^2) for area-uniform disk = eps^4/12
    se = np.sqrt(1.0 / 12 / n)
    assert abs(r2.mean() - 0.5) < 3 * se
    assert np.all(np.sqrt(r2) <= eps)


def test_random_init_delta_bounds():
    g = rng.stream(2, "t")
    d = random_init_delta((5, 5, 1), 0.2, g)
    assert d.shape == (5, 5, 1)
    assert np.max(np.abs(d)) <= 0.2
    assert d.std() > 0


def test_init_zero_eps():
    g = rng.stream(3, "t")
    assert np.array_equal(random_init_flow((4, 4), 0.0, g), np.zeros((4, 4, 2)))
    g = rng.stream(3, "t")
    assert np.array_equal(random_init_delta((4, 4, 1), 0.0, g), np.zeros((4, 4, 1)))
