"""Dense feed-forward networks with hand-written backprop and Adam.

Everything runs in float64 on batches shaped ``(batch, features)``; a 1-D
input is treated as a batch of one and the result is squeezed back.
Weights are stored as ``(fan_in, fan_out)`` so a layer is ``x @ W + b``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

ACTIVATIONS = ("identity", "relu", "sigmoid", "tanh")
MAGIC = b"NNC1"


@dataclass
class DenseNet:
    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        if len(self.layer_sizes) < 2 or any(s < 1 for s in self.layer_sizes):
            raise ValueError(f"bad layer sizes {self.layer_sizes}")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("parameter count does not match layer_sizes")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_sizes[i], self.layer_sizes[i + 1]):
                raise ValueError(f"layer {i}: weight shape {w.shape} breaks the size chain")
            if b.shape != (self.layer_sizes[i + 1],):
                raise ValueError(f"layer {i}: bias shape {b.shape}")
        for act in (self.hidden_activation, self.output_activation):
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in canonical order ``[W0, b0, W1, b1, ...]`` (views, not copies)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "DenseNet":
        return DenseNet(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.hidden_activation,
            self.output_activation,
        )


def init_dense(
    layer_sizes,
    rng: np.random.Generator,
    hidden_activation: str = "relu",
    output_activation: str = "identity",
) -> DenseNet:
    """Uniform fan-in initialisation, bound ``1/sqrt(fan_in)`` for weights and biases."""
    sizes = [int(s) for s in layer_sizes]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return DenseNet(sizes, weights, biases, hidden_activation, output_activation)


def zeros_dense(layer_sizes, hidden_activation="relu", output_activation="identity") -> DenseNet:
    sizes = [int(s) for s in layer_sizes]
    weights = [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [np.zeros(b) for b in sizes[1:]]
    return DenseNet(sizes, weights, biases, hidden_activation, output_activation)


def _act(name: str, x: np.ndarray) -> np.ndarray:
    if name == "identity":
        return x
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "sigmoid":
        # split by sign so exp never overflows
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out
    return np.tanh(x)


def _act_grad(name: str, pre: np.ndarray, post: np.ndarray) -> np.ndarray:
    if name == "identity":
        return np.ones_like(pre)
    if name == "relu":
        return (pre > 0).astype(pre.dtype)
    if name == "sigmoid":
        return post * (1.0 - post)
    return 1.0 - post * post


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input to every layer, batched
    pre_out: np.ndarray  # final pre-activation
    out: np.ndarray
    squeeze: bool = False


def _as_batch(net: DenseNet, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.n_in:
        raise ValueError(f"input shape {x.shape} does not match first layer size {net.n_in}")
    return x, squeeze


def forward_cached(net: DenseNet, x) -> ForwardCache:
    h, squeeze = _as_batch(net, x)
    inputs = []
    n_layers = len(net.weights)
    pre = h
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        pre = h @ w + b
        if i < n_layers - 1:
            h = _act(net.hidden_activation, pre)
    out = _act(net.output_activation, pre)
    return ForwardCache(inputs, pre, out, squeeze)


def forward(net: DenseNet, x) -> np.ndarray:
    cache = forward_cached(net, x)
    return cache.out[0] if cache.squeeze else cache.out


def backward_pre(net: DenseNet, cache: ForwardCache, grad_pre: np.ndarray):
    """Backprop a gradient given with respect to the final *pre-activation*.

    Returns ``(param_grads, input_grad)`` with ``param_grads`` in
    :meth:`DenseNet.params` order. Gradients are summed over the batch.
    """
    g = np.asarray(grad_pre, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    grads: list[np.ndarray] = [None] * (2 * len(net.weights))  # type: ignore[list-item]
    for i in range(len(net.weights) - 1, -1, -1):
        h = cache.inputs[i]
        grads[2 * i] = h.T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ net.weights[i].T
        if i > 0:
            # h = act(pre_{i-1}); relu/tanh/sigmoid derivatives are recoverable from h alone
            if net.hidden_activation == "relu":
                g = g * (h > 0)
            elif net.hidden_activation == "tanh":
                g = g * (1.0 - h * h)
            elif net.hidden_activation == "sigmoid":
                g = g * h * (1.0 - h)
    return grads, g


def backward(net: DenseNet, x, upstream_grad, cache: ForwardCache | None = None):
    """Gradients of ``L = sum(upstream_grad * forward(net, x))``.

    Returns ``(param_grads, input_grad)``; ``input_grad`` has the shape of ``x``.
    """
    if cache is None:
        cache = forward_cached(net, x)
    up = np.asarray(upstream_grad, dtype=np.float64)
    if up.ndim == 1:
        up = up[None, :]
    if up.shape != cache.out.shape:
        raise ValueError(f"upstream_grad shape {up.shape} does not match output {cache.out.shape}")
    grad_pre = up * _act_grad(net.output_activation, cache.pre_out, cache.out)
    grads, gin = backward_pre(net, cache, grad_pre)
    return grads, (gin[0] if cache.squeeze else gin)


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_net(cls, net: DenseNet, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        params = net.params()
        return cls(
            [np.zeros_like(p) for p in params],
            [np.zeros_like(p) for p in params],
            0,
            learning_rate,
            beta1,
            beta2,
            epsilon,
        )


def adam_step(net: DenseNet, grads, state: AdamState):
    """Bias-corrected Adam update applied in place; returns ``(net, state)``."""
    params = net.params()
    if len(grads) != len(params):
        raise ValueError("gradient list does not match parameter list")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return net, state


def grad_check(net: DenseNet, x, scalar_loss_fn: Callable, step: float = 1e-5) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    ``scalar_loss_fn(output)`` must return ``(loss, dloss_doutput)``.
    Relative error per entry is ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    out = forward(net, x)
    _, dout = scalar_loss_fn(out)
    analytic, _ = backward(net, x, dout)
    worst = 0.0
    for p, ga in zip(net.params(), analytic):
        flat = p.reshape(-1)
        ga = ga.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            lp, _ = scalar_loss_fn(forward(net, x))
            flat[j] = orig - step
            lm, _ = scalar_loss_fn(forward(net, x))
            flat[j] = orig
            num = (lp - lm) / (2 * step)
            err = abs(ga[j] - num) / max(abs(ga[j]), abs(num), 1e-8)
            worst = max(worst, err)
    return worst


def soft_update(target: DenseNet, online: DenseNet, tau: float) -> None:
    """``target <- (1 - tau) * target + tau * online`` elementwise, in place."""
    for t, o in zip(target.params(), online.params()):
        t *= 1.0 - tau
        t += tau * o


def flat_params(net: DenseNet) -> np.ndarray:
    return np.concatenate([p.ravel() for p in net.params()])


def save_params(path, net: DenseNet) -> None:
    """Write ``NNC1`` header + row-major float64 weights then biases per layer."""
    sizes = net.layer_sizes
    header = MAGIC + struct.pack(f"<I{len(sizes)}I", len(sizes), *sizes)
    body = b"".join(
        np.ascontiguousarray(w, dtype="<f8").tobytes() + np.ascontiguousarray(b, dtype="<f8").tobytes()
        for w, b in zip(net.weights, net.biases)
    )
    Path(path).write_bytes(header + body)


def load_params(path, hidden_activation: str = "relu", output_activation: str = "identity") -> DenseNet:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not an NNC1 parameter file")
    (count,) = struct.unpack_from("<I", raw, 4)
    sizes = list(struct.unpack_from(f"<{count}I", raw, 8))
    offset = 8 + 4 * count
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(raw, dtype="<f8", count=fan_in * fan_out, offset=offset)
        offset += 8 * fan_in * fan_out
        b = np.frombuffer(raw, dtype="<f8", count=fan_out, offset=offset)
        offset += 8 * fan_out
        weights.append(w.reshape(fan_in, fan_out).astype(np.float64))
        biases.append(b.astype(np.float64))
    if offset != len(raw):
        raise ValueError(f"{path}: trailing or missing bytes ({len(raw) - offset})")
    return DenseNet(sizes, weights, biases, hidden_activation, output_activation)
