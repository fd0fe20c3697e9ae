import numpy as np
import pytest

from advflow import rng
from advflow.classifier import (
    ConvNet,
    label_smooth,
    label_smooth_batch,
    one_hot,
    sample_target,
    softmax_cross_entropy,
)
from advflow.exceptions import FormatError


def small_net(seed=0, classes=4):
    return ConvNet(8, 8, 1, classes, init_seed=seed, dtype=np.float64)


def rand_x(g, n=3, h=8, w=8, c=1):
    return g.uniform(-1, 1, size=(n, h, w, c))


def test_label_smooth():
    t = label_smooth(2, 10, 0.5)
    assert t.shape == (10,)
    assert abs(t.sum() - 1.0) < 1e-12
    assert t[2] == 0.5
    others = np.delete(t, 2)
    assert np.allclose(others, 0.5 / 9)
    # factor 0 reduces to one-hot
    assert np.array_equal(label_smooth(3, 5, 0.0), one_hot(np.array([3]), 5)[0])


def test_label_smooth_batch():
    labels = np.array([0, 2, 1])
    t = label_smooth_batch(labels, 3, 0.3)
    assert t.shape == (3, 3)
    for i, y in enumerate(labels):
        assert t[i, y] == 0.7


def test_label_smooth_rejects_bad_factor():
    with pytest.raises(ValueError):
        label_smooth(0, 10, 1.0)
    with pytest.raises(ValueError):
        label_smooth(0, 10, -0.1)


def test_sample_target_never_true_label():
    g = rng.stream(0, "t")
    for label in range(5):
        draws = [sample_target(label, 5, g) for _ in range(200)]
        assert label not in draws
        assert set(draws) == set(range(5)) - {label}


def test_sample_target_uniform():
    g = rng.stream(1, "t")
    counts = np.zeros(4)
    n = 8000
    for _ in range(n):
        counts[sample_target(2, 4, g)] += 1
    assert counts[2] == 0
    expect = n / 3
    # 4 sigma binomial window
    sigma = np.sqrt(n * (1 / 3) * (2 / 3))
    assert np.all(np.abs(counts[[0, 1, 3]] - expect) < 4 * sigma)


def test_softmax_cross_entropy_matches_manual():
    g = np.random.default_rng(2)
    logits = g.normal(size=(6, 5))
    labels = g.integers(0, 5, size=6)
    t = one_hot(labels, 5)
    want = 0.0
    for i in range(6):
        z = logits[i] - logits[i].max()
        p = np.exp(z) / np.exp(z).sum()
        want -= np.log(p[labels[i]])
    want /= 6
    assert abs(softmax_cross_entropy(logits, t) - want) < 1e-12


def test_softmax_cross_entropy_gibbs_bound():
    # at fixed target, loss over logits is minimized where softmax(logits)
    # equals the target, with value equal to the target entropy
    g = np.random.default_rng(3)
    target = g.dirichlet(np.ones(6), size=1)
    entropy = -np.sum(target * np.log(target))
    opt = np.log(target)  # softmax(log p) = p
    assert abs(softmax_cross_entropy(opt, target) - entropy) < 1e-12
    for _ in range(50):
        other = g.normal(size=(1, 6)) * 3
        assert softmax_cross_entropy(other, target) >= entropy - 1e-12


def test_logits_shape_and_determinism():
    net = small_net()
    g = np.random.default_rng(4)
    x = rand_x(g)
    z1 = net.logits(x)
    z2 = net.logits(x)
    assert z1.shape == (3, 4)
    assert np.array_equal(z1, z2)


def test_same_seed_same_params():
    a = small_net(seed=7)
    b = small_net(seed=7)
    for k in a.params:
        assert np.array_equal(a.params[k], b.params[k])
    c = small_net(seed=8)
    assert any(not np.array_equal(a.params[k], c.params[k]) for k in a.params)


def test_input_gradient_fd():
    net = small_net()
    g = np.random.default_rng(5)
    x = rand_x(g, n=2)
    t = one_hot(np.array([1, 3]), 4)
    _, grad = net.loss_and_input_grad(x, t)
    assert grad.shape == x.shape
    h = 1e-6
    for _ in range(20):
        i = g.integers(0, 2)
        idx = (i,) + tuple(g.integers(0, s) for s in x.shape[1:])
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        lp, _ = net.loss_and_input_grad(xp[i : i + 1], t[i : i + 1])
        lm, _ = net.loss_and_input_grad(xm[i : i + 1], t[i : i + 1])
        fd = (float(lp[0]) - float(lm[0])) / (2 * h)
        assert abs(fd - grad[idx]) < 1e-5 * max(1.0, abs(fd))


def test_param_gradient_fd():
    net = small_net(seed=1)
    g = np.random.default_rng(6)
    x = rand_x(g, n=4)
    t = one_hot(g.integers(0, 4, size=4), 4)
    _, grads = net.loss_and_param_grads(x, t)
    assert set(grads) == set(net.params)
    h = 1e-6
    for name in ("conv1_w", "fc2_b", "fc1_w"):
        p = net.params[name]
        for _ in range(5):
            idx = tuple(g.integers(0, s) for s in p.shape)
            orig = p[idx]
            p[idx] = orig + h
            lp = net.loss_and_param_grads(x, t)[0]
            p[idx] = orig - h
            lm = net.loss_and_param_grads(x, t)[0]
            p[idx] = orig
            fd = (lp - lm) / (2 * h)
            assert abs(fd - grads[name][idx]) < 1e-5 * max(1.0, abs(fd))


def test_per_example_input_grads_independent():
    # duplicated example gets the same per-example gradient regardless of
    # what else is in the batch
    net = small_net()
    g = np.random.default_rng(7)
    x = rand_x(g, n=4)
    x[2] = x[0]
    t = one_hot(np.array([0, 1, 0, 2]), 4)
    _, grad = net.loss_and_input_grad(x, t)
    assert np.array_equal(grad[0], grad[2])
    _, solo = net.loss_and_input_grad(x[0], t[0])
    assert np.allclose(solo, grad[0], atol=1e-12)


def test_grad_evals_counter():
    net = small_net()
    g = np.random.default_rng(8)
    x = rand_x(g)
    t = one_hot(np.array([0, 1, 2]), 4)
    before = net.grad_evals
    net.loss_and_input_grad(x, t)
    assert net.grad_evals == before + 1
    net.logits(x)
    assert net.grad_evals == before + 1  # forward-only, not counted


def test_predict_tie_breaks_low_index():
    net = small_net()
    # force identical logits by zeroing the last layer
    net.params["fc2_w"][:] = 0
    net.params["fc2_b"][:] = 0
    x = rand_x(np.random.default_rng(9))
    assert np.array_equal(net.predict(x), np.zeros(3, dtype=np.int64))


def test_checkpoint_roundtrip(tmp_path):
    net = small_net(seed=3)
    path = tmp_path / "m.ckpt"
    net.save(path)
    loaded = ConvNet.load(path, dtype=np.float64)
    for k in net.params:
        assert np.allclose(loaded.params[k], net.params[k], atol=1e-7)
    g = np.random.default_rng(10)
    x = rand_x(g)
    # f32 container storage rounds, so compare through the same round trip
    net.save(tmp_path / "m2.ckpt")
    again = ConvNet.load(tmp_path / "m2.ckpt", dtype=np.float64)
    assert np.array_equal(loaded.logits(x), again.logits(x))


def test_checkpoint_deterministic_bytes(tmp_path):
    net = small_net(seed=4)
    net.save(tmp_path / "a.ckpt")
    net.save(tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(FormatError):
        ConvNet.load(path)


def test_checkpoint_rejects_wrong_kind(tmp_path):
    from advflow.container import write_container

    write_container(tmp_path / "w.ckpt", {"kind": "other"}, {"x": np.zeros(1, np.float32)})
    with pytest.raises(FormatError):
        ConvNet.load(tmp_path / "w.ckpt")


def test_input_shape_validation():
    net = small_net()
    with pytest.raises(ValueError):
        net.logits(np.zeros((2, 8, 9, 1)))
    with pytest.raises(ValueError):
        ConvNet(6, 8, 1, 4, init_seed=0)  # height not a multiple of 4
