"""A small CNN patch classifier with hand-written backpropagation.

Layer stack for the default configuration::

    28x28x1 -> conv 3x3 (4 kernels) + ReLU -> 26x26x4
            -> [optional 2x2 max pool]
            -> dense 100 + ReLU (+ dropout while training)
            -> dense M + softmax

Everything runs in float64 on batches shaped ``(batch, channels, h, w)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from histseg.tensor import Rng, ShapeError, check_finite

KERNEL_SIDE = 3
LOG_EPS = 1e-12


@dataclass(frozen=True)
class NetworkConfig:
    conv_kernel_counts: tuple[int, ...] = (4,)
    use_max_pool: bool = False
    dense_width: int = 100
    num_classes: int = 5
    input_side: int = 28

    def __post_init__(self):
        object.__setattr__(self, "conv_kernel_counts", tuple(int(k) for k in self.conv_kernel_counts))
        if not self.conv_kernel_counts or min(self.conv_kernel_counts) < 1:
            raise ValueError("need at least one conv layer with >= 1 kernel")
        if self.dense_width < 1 or self.num_classes < 2:
            raise ValueError("dense_width must be >= 1 and num_classes >= 2")
        side = self.input_side - (KERNEL_SIDE - 1) * len(self.conv_kernel_counts)
        if side < 1 or (self.use_max_pool and side < 2):
            raise ValueError(f"input side {self.input_side} is too small for this layer stack")

    @classmethod
    def with_depth(cls, depth: int, first_kernels: int = 4, **kw) -> "NetworkConfig":
        """``depth`` conv layers, each with two more kernels than the one before."""
        if depth < 1:
            raise ValueError("depth must be >= 1")
        return cls(conv_kernel_counts=tuple(first_kernels + 2 * i for i in range(depth)), **kw)

    def shape_chain(self) -> list[tuple[int, ...]]:
        """Activation shapes from input to output, as ``(h, w, channels)`` or ``(units,)``."""
        side = self.input_side
        shapes: list[tuple[int, ...]] = [(side, side, 1)]
        for k in self.conv_kernel_counts:
            side -= KERNEL_SIDE - 1
            shapes.append((side, side, k))
        if self.use_max_pool:
            side //= 2
            shapes.append((side, side, self.conv_kernel_counts[-1]))
        shapes.append((self.dense_width,))
        shapes.append((self.num_classes,))
        return shapes

    @property
    def flat_features(self) -> int:
        h, w, c = self.shape_chain()[-3]
        return h * w * c

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_kernel_counts"] = list(self.conv_kernel_counts)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(**d)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 128
    num_batches: int = 5000
    dropout_p: float = 0.5
    seed: int = 42
    validate_every: int = 500

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.num_batches < 0:
            raise ValueError("batch_size must be >= 1 and num_batches >= 0")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must lie in [0, 1)")


@dataclass
class ConvLayer:
    kernels: np.ndarray  # (K, C_in, 3, 3)
    biases: np.ndarray  # (K,)

    def __post_init__(self):
        k, _, kh, kw = self.kernels.shape
        if (kh, kw) != (KERNEL_SIDE, KERNEL_SIDE) or self.biases.shape != (k,):
            raise ShapeError(f"conv layer shapes {self.kernels.shape} / {self.biases.shape}")


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray  # (out,)

    def __post_init__(self):
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ShapeError(f"dense layer shapes {self.weights.shape} / {self.biases.shape}")


# ---------------------------------------------------------------------------
# layer primitives


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax over the last axis, shifted by the max for stability."""
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, labels) -> float:
    """Mean of ``-ln(max(p[label], 1e-12))`` over the rows of ``probs``."""
    probs = np.atleast_2d(probs)
    labels = np.atleast_1d(np.asarray(labels))
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(picked, LOG_EPS)).mean())


def conv_forward(layer: ConvLayer, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Valid 3x3 cross-correlation, stride 1.

    ``x`` is ``(B, C, H, W)``; returns the ``(B, K, H-2, W-2)`` output and the
    im2col matrix needed by :func:`conv_backward`.
    """
    b, c, h, w = x.shape
    if h < KERNEL_SIDE or w < KERNEL_SIDE:
        raise ShapeError(f"conv input {h}x{w} is smaller than the 3x3 kernel")
    if c != layer.kernels.shape[1]:
        raise ShapeError(f"conv expects {layer.kernels.shape[1]} channels, got {c}")
    ho, wo = h - 2, w - 2
    win = sliding_window_view(x, (KERNEL_SIDE, KERNEL_SIDE), axis=(2, 3))  # (B,C,ho,wo,3,3)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * 9)
    k = layer.kernels.shape[0]
    out = cols @ layer.kernels.reshape(k, -1).T + layer.biases
    return out.reshape(b, ho, wo, k).transpose(0, 3, 1, 2), cols


def conv_backward(layer: ConvLayer, cols: np.ndarray, x_shape, dout: np.ndarray, need_dx=True):
    b, c, h, w = x_shape
    k = layer.kernels.shape[0]
    ho, wo = h - 2, w - 2
    d2 = dout.transpose(0, 2, 3, 1).reshape(-1, k)
    dk = (d2.T @ cols).reshape(layer.kernels.shape)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dk, db
    dcols = (d2 @ layer.kernels.reshape(k, -1)).reshape(b, ho, wo, c, 3, 3)
    dx = np.zeros(x_shape)
    for u in range(KERNEL_SIDE):
        for v in range(KERNEL_SIDE):
            dx[:, :, u : u + ho, v : v + wo] += dcols[:, :, :, :, u, v].transpose(0, 3, 1, 2)
    return dx, dk, db


def maxpool_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Non-overlapping 2x2 max pool; an odd trailing row/column is dropped.

    Returns the pooled array and, per output cell, the flat index (0..3) of the
    winning input in its block (first maximum on ties).
    """
    b, c, h, w = x.shape
    if h < 2 or w < 2:
        raise ShapeError(f"max pool needs at least 2x2 input, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    blocks = x[:, :, : 2 * h2, : 2 * w2].reshape(b, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(b, c, h2, w2, 4)
    idx = blocks.argmax(axis=-1)
    return np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0], idx


def maxpool_backward(idx: np.ndarray, x_shape, dout: np.ndarray) -> np.ndarray:
    b, c, h, w = x_shape
    h2, w2 = h // 2, w // 2
    dblocks = np.zeros((b, c, h2, w2, 4))
    np.put_along_axis(dblocks, idx[..., None], dout[..., None], axis=-1)
    dx = np.zeros(x_shape)
    dx[:, :, : 2 * h2, : 2 * w2] = (
        dblocks.reshape(b, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, 2 * h2, 2 * w2)
    )
    return dx


def dropout_mask(shape, p: float, rng: Rng) -> np.ndarray:
    """Inverted-dropout mask: 0 with probability ``p``, else ``1 / (1 - p)``."""
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout probability must lie in [0, 1)")
    if p == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= p) / (1.0 - p)


def apply_dropout(act: np.ndarray, p: float, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    mask = dropout_mask(act.shape, p, rng)
    return act * mask, mask


# ---------------------------------------------------------------------------
# network


def _glorot(rng: Rng, shape, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(shape, -bound, bound)


@dataclass
class _Cache:
    inputs: list = field(default_factory=list)  # per conv layer: (x_shape, cols)
    conv_out: list = field(default_factory=list)  # pre-ReLU conv outputs
    pool: tuple | None = None
    flat: np.ndarray | None = None
    hidden_pre: np.ndarray | None = None
    mask: np.ndarray | None = None
    hidden: np.ndarray | None = None


class Network:
    """Conv layers, optional max pool, one hidden dense layer and a softmax output."""

    def __init__(self, config: NetworkConfig, convs, hidden: DenseLayer, output: DenseLayer):
        self.config = config
        self.convs = list(convs)
        self.hidden = hidden
        self.output = output
        expected = self._param_shapes()
        got = [a.shape for _, a in self.parameters()]
        if expected != got:
            raise ShapeError(f"parameter shapes {got} do not match config {expected}")

    @classmethod
    def init(cls, config: NetworkConfig, seed: int = 42) -> "Network":
        """Glorot-uniform weights, zero biases."""
        rng = Rng(seed)
        convs = []
        c_in = 1
        for k in config.conv_kernel_counts:
            w = _glorot(rng, (k, c_in, 3, 3), c_in * 9, k * 9)
            convs.append(ConvLayer(w, np.zeros(k)))
            c_in = k
        f = config.flat_features
        hidden = DenseLayer(_glorot(rng, (config.dense_width, f), f, config.dense_width), np.zeros(config.dense_width))
        m = config.num_classes
        output = DenseLayer(_glorot(rng, (m, config.dense_width), config.dense_width, m), np.zeros(m))
        return cls(config, convs, hidden, output)

    def _param_shapes(self):
        shapes = []
        c_in = 1
        for k in self.config.conv_kernel_counts:
            shapes += [(k, c_in, 3, 3), (k,)]
            c_in = k
        d, m = self.config.dense_width, self.config.num_classes
        shapes += [(d, self.config.flat_features), (d,), (m, d), (m,)]
        return shapes

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        """Named parameter arrays in a fixed order (also the file order)."""
        out = []
        for i, conv in enumerate(self.convs):
            out += [(f"conv{i}.kernels", conv.kernels), (f"conv{i}.biases", conv.biases)]
        out += [
            ("hidden.weights", self.hidden.weights),
            ("hidden.biases", self.hidden.biases),
            ("output.weights", self.output.weights),
            ("output.biases", self.output.biases),
        ]
        return out

    def copy(self) -> "Network":
        return Network(
            self.config,
            [ConvLayer(c.kernels.copy(), c.biases.copy()) for c in self.convs],
            DenseLayer(self.hidden.weights.copy(), self.hidden.biases.copy()),
            DenseLayer(self.output.weights.copy(), self.output.biases.copy()),
        )

    def quantize(self) -> None:
        """Round every parameter to float32 precision in place (what a saved model keeps)."""
        for _, a in self.parameters():
            a[...] = a.astype(np.float32)

    def _prepare(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        s = self.config.input_side
        if x.ndim == 2:
            x = x[None]
        if x.shape[-2:] != (s, s):
            raise ShapeError(f"network expects {s}x{s} patches, got {x.shape}")
        return x.reshape(-1, 1, s, s)

    def forward(self, x: np.ndarray, dropout: np.ndarray | None = None, cache: _Cache | None = None) -> np.ndarray:
        """Class probabilities for a batch of patches ``(B, side, side)``.

        ``dropout`` is a multiplicative mask for the hidden layer (training only).
        """
        a = self._prepare(x)
        for conv in self.convs:
            z, cols = conv_forward(conv, a)
            if cache is not None:
                cache.inputs.append((a.shape, cols))
                cache.conv_out.append(z)
            a = relu(z)
        if self.config.use_max_pool:
            shape = a.shape
            a, idx = maxpool_forward(a)
            if cache is not None:
                cache.pool = (shape, idx)
        flat = a.reshape(len(a), -1)
        hpre = flat @ self.hidden.weights.T + self.hidden.biases
        h = relu(hpre)
        if dropout is not None:
            h = h * dropout
        logits = h @ self.output.weights.T + self.output.biases
        if cache is not None:
            cache.flat, cache.hidden_pre, cache.mask, cache.hidden = flat, hpre, dropout, h
        return softmax(logits)

    def loss_and_grads(self, x, labels, dropout: np.ndarray | None = None):
        """Mean cross-entropy over the batch and its gradient for every parameter.

        Returns ``(loss, grads)`` with ``grads`` ordered like :meth:`parameters`.
        """
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if len(labels) == 0:
            raise ValueError("backward needs a non-empty batch")
        cache = _Cache()
        probs = self.forward(x, dropout, cache)
        if len(probs) != len(labels):
            raise ShapeError(f"{len(probs)} patches but {len(labels)} labels")
        if labels.min() < 0 or labels.max() >= self.config.num_classes:
            raise ValueError("label out of range")
        n = len(labels)
        loss = cross_entropy(probs, labels)

        dlogits = probs.copy()
        dlogits[np.arange(n), labels] -= 1.0
        dlogits /= n
        g_out_w = dlogits.T @ cache.hidden
        g_out_b = dlogits.sum(axis=0)
        dh = dlogits @ self.output.weights
        if cache.mask is not None:
            dh = dh * cache.mask
        dh = dh * (cache.hidden_pre > 0)
        g_hid_w = dh.T @ cache.flat
        g_hid_b = dh.sum(axis=0)
        da = dh @ self.hidden.weights

        if self.config.use_max_pool:
            shape, idx = cache.pool
            da = maxpool_backward(idx, shape, da.reshape(idx.shape))
        else:
            da = da.reshape(cache.conv_out[-1].shape)

        conv_grads = []
        for i in range(len(self.convs) - 1, -1, -1):
            dz = da * (cache.conv_out[i] > 0)
            x_shape, cols = cache.inputs[i]
            da, dk, db = conv_backward(self.convs[i], cols, x_shape, dz, need_dx=i > 0)
            conv_grads = [dk, db] + conv_grads
        return loss, conv_grads + [g_hid_w, g_hid_b, g_out_w, g_out_b]

    def predict_proba(self, patches: np.ndarray, chunk: int = 1024) -> np.ndarray:
        patches = self._prepare(patches)
        return np.concatenate(
            [self.forward(patches[i : i + chunk]) for i in range(0, len(patches), chunk)]
        ) if len(patches) else np.zeros((0, self.config.num_classes))

    def predict_classes(self, patches: np.ndarray) -> np.ndarray:
        # argmax keeps the first maximum, i.e. ties go to the lowest class index
        return self.predict_proba(patches).argmax(axis=1)


def predict(net: Network, patch) -> tuple[int, np.ndarray]:
    """Most probable class for one patch (ties: lowest index) and the probabilities."""
    values = getattr(patch, "values", patch)
    probs = net.forward(values)[0]
    return int(np.argmax(probs)), probs


def backward(net: Network, patches, labels, dropout: np.ndarray | None = None) -> list[np.ndarray]:
    return net.loss_and_grads(patches, labels, dropout)[1]


def sgd_step(net: Network, grads, lr: float) -> None:
    params = net.parameters()
    if len(grads) != len(params):
        raise ShapeError(f"expected {len(params)} gradients, got {len(grads)}")
    for (name, p), g in zip(params, grads):
        if p.shape != np.shape(g):
            raise ShapeError(f"{name}: gradient shape {np.shape(g)} vs parameter {p.shape}")
    for (_, p), g in zip(params, grads):
        p -= lr * g


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainingLog:
    batch_index: list[int] = field(default_factory=list)
    mean_loss: list[float] = field(default_factory=list)
    validation: dict[int, float] = field(default_factory=dict)

    def __len__(self):
        return len(self.batch_index)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["batch_index", "mean_loss", "validation_pixel_acc"])
            for i, loss in zip(self.batch_index, self.mean_loss):
                val = self.validation.get(i)
                w.writerow([i, repr(loss), "" if val is None else repr(val)])


def train(
    net: Network,
    patches,
    cfg: TrainConfig,
    validate: Callable[[Network], float] | None = None,
) -> TrainingLog:
    """Mini-batch SGD with dropout on the hidden layer.

    Each batch draws ``cfg.batch_size`` patches uniformly with replacement.
    ``validate``, if given, is called every ``cfg.validate_every`` batches and
    its return value (validation pixel accuracy) is logged.
    """
    n = len(patches)
    if n == 0:
        raise ValueError("cannot train on an empty patch set")
    if patches.num_classes != net.config.num_classes:
        raise ValueError(
            f"patch set has {patches.num_classes} classes, network has {net.config.num_classes}"
        )
    sampler, dropper = Rng(cfg.seed).split(2)
    log = TrainingLog()
    width = net.config.dense_width
    for step in range(1, cfg.num_batches + 1):
        idx = sampler.integers(n, cfg.batch_size)
        mask = dropout_mask((len(idx), width), cfg.dropout_p, dropper) if cfg.dropout_p > 0 else None
        loss, grads = net.loss_and_grads(patches.values[idx], patches.labels[idx], mask)
        check_finite(np.array(loss), "training loss")
        sgd_step(net, grads, cfg.learning_rate)
        log.batch_index.append(step)
        log.mean_loss.append(loss)
        if validate is not None and cfg.validate_every and step % cfg.validate_every == 0:
            log.validation[step] = float(validate(net))
    return log
