"""Small convolutional classifier with hand-derived backpropagation.

Architecture (fixed): two 3x3 same-padded conv layers of 16 and 32
channels, each followed by ReLU and 2x2 max pooling, then a 128-unit
ReLU dense layer and a linear class head. Inputs are NHWC floats in
[-1, 1]; height and width must be divisible by 4.

Both gradient paths are closed-form and deterministic: ReLU uses
subgradient 0 at 0, max pooling breaks ties by the first index in
window order, and the loss is softmax cross-entropy against a target
distribution. Input gradients are per-example (each example's own loss),
parameter gradients are mean-reduced over the batch.
"""

from __future__ import annotations

import numpy as np

from . import container, rng
from .exceptions import FormatError, ShapeError

CONV1_CHANNELS = 16
CONV2_CHANNELS = 32
HIDDEN_UNITS = 128
KERNEL = 3

_PARAM_ORDER = (
    "conv1_w",
    "conv1_b",
    "conv2_w",
    "conv2_b",
    "fc1_w",
    "fc1_b",
    "fc2_w",
    "fc2_b",
)


def label_smooth(label: int, classes: int, factor: float = 0.5) -> np.ndarray:
    """Smoothed one-hot target: 1 - factor on the true class, the rest uniform."""
    if not 0 <= label < classes:
        raise ValueError(f"label {label} out of range for {classes} classes")
    if not 0.0 <= factor < 1.0:
        raise ValueError(f"smoothing factor must be in [0, 1), got {factor}")
    vec = np.full(classes, factor / (classes - 1), dtype=np.float64)
    vec[label] = 1.0 - factor
    return vec


def label_smooth_batch(labels: np.ndarray, classes: int, factor: float = 0.5) -> np.ndarray:
    """Row-stacked label_smooth for a vector of class indices."""
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= classes:
        raise ValueError("labels out of range")
    if not 0.0 <= factor < 1.0:
        raise ValueError(f"smoothing factor must be in [0, 1), got {factor}")
    out = np.full((labels.shape[0], classes), factor / (classes - 1), dtype=np.float64)
    out[np.arange(labels.shape[0]), labels] = 1.0 - factor
    return out


def sample_target(label: int, classes: int, generator: np.random.Generator) -> int:
    """Uniform draw over the classes other than ``label``."""
    if classes < 2:
        raise ValueError("need at least two classes to sample a wrong one")
    draw = int(generator.integers(classes - 1))
    return draw + (draw >= label)


def one_hot(labels: np.ndarray, classes: int) -> np.ndarray:
    out = np.zeros((len(labels), classes), dtype=np.float64)
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _as_distribution(target, classes: int, n: int) -> np.ndarray:
    """Accept int labels (N,) or a distribution (N, C); return (N, C)."""
    t = np.asarray(target)
    if t.ndim == 1 and np.issubdtype(t.dtype, np.integer):
        if t.shape[0] != n:
            raise ShapeError(f"expected {n} labels, got {t.shape}")
        return one_hot(t, classes)
    if t.ndim == 2 and t.shape == (n, classes):
        return t.astype(np.float64, copy=False)
    raise ShapeError(f"target must be (N,) int labels or (N,{classes}) rows, got {t.shape}")


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax_cross_entropy(logits: np.ndarray, target: np.ndarray) -> float:
    """Mean cross-entropy of softmax(logits) against target distributions.

    At a fixed target the minimum over logits is attained exactly when
    softmax(logits) equals the target, where the loss equals the target's
    entropy; it is strictly positive for any non-degenerate target.
    """
    t = _as_distribution(target, logits.shape[1], logits.shape[0])
    logp = _log_softmax(np.asarray(logits, dtype=np.float64))
    return float(-(t * logp).sum(axis=1).mean())


def _im2col(x: np.ndarray) -> np.ndarray:
    """Unfold 3x3 same-padded patches; rows indexed by (n, i, j), cols by (ki, kj, c)."""
    n, h, w, c = x.shape
    xp = np.zeros((n, h + 2, w + 2, c), dtype=x.dtype)
    xp[:, 1 : h + 1, 1 : w + 1] = x
    win = np.lib.stride_tricks.sliding_window_view(xp, (KERNEL, KERNEL), axis=(1, 2))
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * w, KERNEL * KERNEL * c)


def _col2im(dcols: np.ndarray, n: int, h: int, w: int, c: int) -> np.ndarray:
    """Adjoint of _im2col: fold patch gradients back onto the padded image."""
    d = dcols.reshape(n, h, w, KERNEL, KERNEL, c)
    dxp = np.zeros((n, h + 2, w + 2, c), dtype=dcols.dtype)
    for ki in range(KERNEL):
        for kj in range(KERNEL):
            dxp[:, ki : ki + h, kj : kj + w] += d[:, :, :, ki, kj]
    return dxp[:, 1 : h + 1, 1 : w + 1]


def _maxpool(x: np.ndarray):
    n, h, w, c = x.shape
    xr = (
        x.reshape(n, h // 2, 2, w // 2, 2, c)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(n, h // 2, w // 2, 4, c)
    )
    idx = xr.argmax(axis=3)
    out = np.take_along_axis(xr, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    return out, idx


def _unpool(g: np.ndarray, idx: np.ndarray, h: int, w: int) -> np.ndarray:
    n, ho, wo, c = g.shape
    gr = np.zeros((n, ho, wo, 4, c), dtype=g.dtype)
    np.put_along_axis(gr, idx[:, :, :, None, :], g[:, :, :, None, :], axis=3)
    return gr.reshape(n, ho, wo, 2, 2, c).transpose(0, 1, 3, 2, 4, 5).reshape(n, h, w, c)


class ConvNet:
    """Conv-pool-conv-pool-dense classifier over NHWC inputs in [-1, 1]."""

    def __init__(
        self,
        height: int,
        width: int,
        channels: int,
        classes: int,
        *,
        dtype=np.float32,
        init_seed: int = 0,
    ):
        if height % 4 or width % 4 or height < 4 or width < 4:
            raise ShapeError(f"height and width must be multiples of 4, got {height}x{width}")
        if classes < 2:
            raise ValueError("need at least 2 classes")
        self.height = height
        self.width = width
        self.channels = channels
        self.classes = classes
        self.dtype = np.dtype(dtype)
        self.init_seed = init_seed
        self.grad_evals = 0
        flat = (height // 4) * (width // 4) * CONV2_CHANNELS
        self.flat_features = flat
        g = rng.stream(init_seed, "params")
        self.params: dict[str, np.ndarray] = {}

        def kaiming(shape, fan_in):
            w = g.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
            return w.astype(self.dtype)

        self.params["conv1_w"] = kaiming(
            (KERNEL, KERNEL, channels, CONV1_CHANNELS), KERNEL * KERNEL * channels
        )
        self.params["conv1_b"] = np.zeros(CONV1_CHANNELS, dtype=self.dtype)
        self.params["conv2_w"] = kaiming(
            (KERNEL, KERNEL, CONV1_CHANNELS, CONV2_CHANNELS), KERNEL * KERNEL * CONV1_CHANNELS
        )
        self.params["conv2_b"] = np.zeros(CONV2_CHANNELS, dtype=self.dtype)
        self.params["fc1_w"] = kaiming((flat, HIDDEN_UNITS), flat)
        self.params["fc1_b"] = np.zeros(HIDDEN_UNITS, dtype=self.dtype)
        self.params["fc2_w"] = kaiming((HIDDEN_UNITS, classes), HIDDEN_UNITS)
        self.params["fc2_b"] = np.zeros(classes, dtype=self.dtype)

    @property
    def num_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        single = x.ndim == 3
        if single:
            x = x[None]
        if x.ndim != 4 or x.shape[1:] != (self.height, self.width, self.channels):
            raise ShapeError(
                f"expected (N,{self.height},{self.width},{self.channels}) input, got {x.shape}"
            )
        return np.ascontiguousarray(x, dtype=self.dtype)

    def _forward(self, x: np.ndarray):
        p = self.params
        n = x.shape[0]
        h, w = self.height, self.width
        cols1 = _im2col(x)
        pre1 = cols1 @ p["conv1_w"].reshape(-1, CONV1_CHANNELS) + p["conv1_b"]
        pre1 = pre1.reshape(n, h, w, CONV1_CHANNELS)
        act1 = np.maximum(pre1, 0)
        pool1, idx1 = _maxpool(act1)
        cols2 = _im2col(pool1)
        pre2 = cols2 @ p["conv2_w"].reshape(-1, CONV2_CHANNELS) + p["conv2_b"]
        pre2 = pre2.reshape(n, h // 2, w // 2, CONV2_CHANNELS)
        act2 = np.maximum(pre2, 0)
        pool2, idx2 = _maxpool(act2)
        feats = pool2.reshape(n, self.flat_features)
        pre3 = feats @ p["fc1_w"] + p["fc1_b"]
        act3 = np.maximum(pre3, 0)
        logits = act3 @ p["fc2_w"] + p["fc2_b"]
        cache = dict(
            x=x, cols1=cols1, pre1=pre1, idx1=idx1, pool1=pool1, cols2=cols2,
            pre2=pre2, idx2=idx2, feats=feats, pre3=pre3, act3=act3,
        )
        return logits, cache

    def _backward(self, cache, dlogits, *, need_input: bool, need_params: bool):
        p = self.params
        n = dlogits.shape[0]
        h, w = self.height, self.width
        grads = {}
        act3 = cache["act3"]
        if need_params:
            grads["fc2_w"] = act3.T @ dlogits
            grads["fc2_b"] = dlogits.sum(axis=0)
        dact3 = dlogits @ p["fc2_w"].T
        dpre3 = dact3 * (cache["pre3"] > 0)
        if need_params:
            grads["fc1_w"] = cache["feats"].T @ dpre3
            grads["fc1_b"] = dpre3.sum(axis=0)
        dfeats = dpre3 @ p["fc1_w"].T
        dpool2 = dfeats.reshape(n, h // 4, w // 4, CONV2_CHANNELS)
        dact2 = _unpool(dpool2, cache["idx2"], h // 2, w // 2)
        dpre2 = dact2 * (cache["pre2"] > 0)
        dpre2_flat = dpre2.reshape(-1, CONV2_CHANNELS)
        if need_params:
            grads["conv2_w"] = (cache["cols2"].T @ dpre2_flat).reshape(p["conv2_w"].shape)
            grads["conv2_b"] = dpre2_flat.sum(axis=0)
        dcols2 = dpre2_flat @ p["conv2_w"].reshape(-1, CONV2_CHANNELS).T
        dpool1 = _col2im(dcols2, n, h // 2, w // 2, CONV1_CHANNELS)
        dact1 = _unpool(dpool1, cache["idx1"], h, w)
        dpre1 = dact1 * (cache["pre1"] > 0)
        dpre1_flat = dpre1.reshape(-1, CONV1_CHANNELS)
        if need_params:
            grads["conv1_w"] = (cache["cols1"].T @ dpre1_flat).reshape(p["conv1_w"].shape)
            grads["conv1_b"] = dpre1_flat.sum(axis=0)
        dx = None
        if need_input:
            dcols1 = dpre1_flat @ p["conv1_w"].reshape(-1, CONV1_CHANNELS).T
            dx = _col2im(dcols1, n, h, w, self.channels)
        return dx, grads

    def logits(self, x: np.ndarray) -> np.ndarray:
        single = x.ndim == 3
        out, _ = self._forward(self._check_input(x))
        return out[0] if single else out

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Argmax class per example; ties resolve to the lowest index."""
        single = x.ndim == 3
        out = self.logits(x if not single else x[None])
        pred = out.argmax(axis=1)
        return int(pred[0]) if single else pred

    def _losses_and_dlogits(self, xb, target):
        logits, cache = self._forward(xb)
        t = _as_distribution(target, self.classes, xb.shape[0])
        logp = _log_softmax(logits.astype(np.float64, copy=False))
        losses = -(t * logp).sum(axis=1)
        dlogits = (np.exp(logp) - t).astype(self.dtype)
        return logits, cache, losses, dlogits

    def loss_and_input_grad(self, x, target):
        """Per-example losses and the gradient of each example's own loss
        with respect to its input.

        Returns (losses (N,), grad shaped like x). Unscaled by the batch
        size: duplicating an example leaves its gradient row unchanged, so
        batched attack steps match per-example ones exactly. Counts one
        gradient evaluation.
        """
        single = x.ndim == 3
        xb = self._check_input(x)
        tgt = target
        if single and np.isscalar(target):
            tgt = np.array([target])
        elif single and np.asarray(target).ndim == 1 and not np.issubdtype(
            np.asarray(target).dtype, np.integer
        ):
            tgt = np.asarray(target)[None]
        _, cache, losses, dlogits = self._losses_and_dlogits(xb, tgt)
        dx, _ = self._backward(cache, dlogits, need_input=True, need_params=False)
        self.grad_evals += 1
        if single:
            return float(losses[0]), dx[0]
        return losses, dx

    def loss_and_param_grads(self, x, target):
        """Mean loss over the batch and mean-reduced parameter gradients."""
        xb = self._check_input(x)
        _, cache, losses, dlogits = self._losses_and_dlogits(xb, target)
        _, grads = self._backward(
            cache, dlogits / xb.shape[0], need_input=False, need_params=True
        )
        return float(losses.mean()), grads

    def save(self, path) -> None:
        desc = {
            "kind": "convnet",
            "format": 1,
            "height": self.height,
            "width": self.width,
            "channels": self.channels,
            "classes": self.classes,
            "conv_channels": [CONV1_CHANNELS, CONV2_CHANNELS],
            "hidden": HIDDEN_UNITS,
            "kernel": KERNEL,
        }
        container.write_container(path, desc, {k: self.params[k] for k in _PARAM_ORDER})

    @classmethod
    def load(cls, path, *, dtype=np.float32) -> "ConvNet":
        desc, tensors = container.read_container(path)
        if desc.get("kind") != "convnet":
            raise FormatError(f"{path}: not a classifier checkpoint (kind={desc.get('kind')!r})")
        if desc.get("conv_channels") != [CONV1_CHANNELS, CONV2_CHANNELS] or desc.get(
            "hidden"
        ) != HIDDEN_UNITS or desc.get("kernel") != KERNEL:
            raise FormatError(f"{path}: architecture mismatch in descriptor {desc}")
        net = cls(
            desc["height"], desc["width"], desc["channels"], desc["classes"], dtype=dtype
        )
        for name in _PARAM_ORDER:
            if name not in tensors:
                raise FormatError(f"{path}: missing tensor {name!r}")
            if tensors[name].shape != net.params[name].shape:
                raise FormatError(
                    f"{path}: tensor {name!r} has shape {tensors[name].shape}, "
                    f"expected {net.params[name].shape}"
                )
            net.params[name] = tensors[name].astype(dtype)
        return net
