"""Reverse-mode autodiff on numpy arrays, just enough for the models here.

Every op builds a Tensor holding the forward value, its parents, and a
closure that pushes the output gradient into the parents. backward() runs
the closures in reverse topological order from a caller-supplied seed
gradient. Everything is float64; batches lead the shape.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, parents: tuple = ()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data)
        self._parents = parents
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def backward(self, seed: np.ndarray) -> None:
        """Propagate d(loss)/d(self) = seed back through the graph."""
        seed = np.asarray(seed, dtype=np.float64)
        if seed.shape != self.data.shape:
            raise ValueError(f"seed shape {seed.shape} != tensor shape {self.data.shape}")
        topo: list[Tensor] = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = self.grad + seed
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data, (a, b))

    def back():
        a.grad += _unbroadcast(out.grad, a.data.shape)
        b.grad += _unbroadcast(out.grad, b.data.shape)

    out._backward = back
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data, (a, b))

    def back():
        a.grad += _unbroadcast(out.grad * b.data, a.data.shape)
        b.grad += _unbroadcast(out.grad * a.data, b.data.shape)

    out._backward = back
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product."""
    out = Tensor(a.data @ b.data, (a, b))

    def back():
        a.grad += out.grad @ b.data.T
        b.grad += a.data.T @ out.grad

    out._backward = back
    return out


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b applied along the last axis of x, any leading shape."""
    lead = x.data.shape[:-1]
    fan_in = x.data.shape[-1]
    x2 = x.data.reshape(-1, fan_in)
    out = Tensor((x2 @ w.data + b.data).reshape(*lead, w.data.shape[1]), (x, w, b))

    def back():
        g2 = out.grad.reshape(-1, w.data.shape[1])
        x.grad += (g2 @ w.data.T).reshape(x.data.shape)
        w.grad += x2.T @ g2
        b.grad += g2.sum(axis=0)

    out._backward = back
    return out


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    out = Tensor(y, (x,))

    def back():
        x.grad += out.grad * (1.0 - y * y)

    out._backward = back
    return out


def sigmoid(x: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-np.clip(x.data, -500, 500)))
    out = Tensor(y, (x,))

    def back():
        x.grad += out.grad * y * (1.0 - y)

    out._backward = back
    return out


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0), (x,))

    def back():
        x.grad += out.grad * (x.data > 0)

    out._backward = back
    return out


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    """Columns [start, stop) of a 2-D tensor."""
    out = Tensor(x.data[:, start:stop], (x,))

    def back():
        x.grad[:, start:stop] += out.grad

    out._backward = back
    return out


def index_time(x: Tensor, t: int) -> Tensor:
    """Timestep t of a (batch, time, features) tensor."""
    out = Tensor(x.data[:, t, :], (x,))

    def back():
        x.grad[:, t, :] += out.grad

    out._backward = back
    return out


def stack_time(steps: list[Tensor]) -> Tensor:
    """Stack per-timestep (batch, features) tensors into (batch, time, features)."""
    out = Tensor(np.stack([s.data for s in steps], axis=1), tuple(steps))

    def back():
        for t, s in enumerate(steps):
            s.grad += out.grad[:, t, :]

    out._backward = back
    return out


def concat_last(parts: list[Tensor]) -> Tensor:
    out = Tensor(np.concatenate([p.data for p in parts], axis=-1), tuple(parts))

    def back():
        pos = 0
        for p in parts:
            width = p.data.shape[-1]
            p.grad += out.grad[..., pos : pos + width]
            pos += width

    out._backward = back
    return out


def reverse_time(x: Tensor) -> Tensor:
    out = Tensor(x.data[:, ::-1, :].copy(), (x,))

    def back():
        x.grad += out.grad[:, ::-1, :]

    out._backward = back
    return out


def mean_time(x: Tensor) -> Tensor:
    """Mean over the time axis of (batch, time, features)."""
    n = x.data.shape[1]
    out = Tensor(x.data.mean(axis=1), (x,))

    def back():
        x.grad += out.grad[:, None, :] / n

    out._backward = back
    return out


def log_softmax_op(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = Tensor(logp, (x,))

    def back():
        p = np.exp(logp)
        x.grad += out.grad - p * out.grad.sum(axis=-1, keepdims=True)

    out._backward = back
    return out


def conv1d_op(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Same-length 1-D convolution over (batch, time, c_in).

    w is (c_out, c_in, k); zero padding puts floor((k-1)/2) frames on the
    left and the remainder on the right.
    """
    bsz, t_len, c_in = x.data.shape
    c_out, c_in_w, k = w.data.shape
    if c_in_w != c_in:
        raise ValueError(f"conv expects {c_in_w} input channels, got {c_in}")
    left = (k - 1) // 2
    right = k - 1 - left
    xp = np.pad(x.data, ((0, 0), (left, right), (0, 0)))
    # windows: (batch, time, c_in, k) -> columns (batch*time, c_in*k)
    cols = np.lib.stride_tricks.sliding_window_view(xp, k, axis=1)
    cols2 = cols.reshape(bsz * t_len, c_in * k)
    wmat = w.data.reshape(c_out, c_in * k).T
    out_data = (cols2 @ wmat + b.data).reshape(bsz, t_len, c_out)
    out = Tensor(out_data, (x, w, b))

    def back():
        g2 = out.grad.reshape(bsz * t_len, c_out)
        w.grad += (g2.T @ cols2).reshape(c_out, c_in, k)
        b.grad += g2.sum(axis=0)
        gcols = (g2 @ wmat.T).reshape(bsz, t_len, c_in, k)
        gxp = np.zeros_like(xp)
        for i in range(k):
            gxp[:, i : i + t_len, :] += gcols[:, :, :, i]
        x.grad += gxp[:, left : left + t_len, :]

    out._backward = back
    return out


def maxpool1d_op(x: Tensor, pool: int) -> Tensor:
    """Per-window max over time with a partial final window allowed."""
    if pool < 1:
        raise ValueError("pool size must be >= 1")
    bsz, t_len, ch = x.data.shape
    t_out = -(-t_len // pool)
    pad = t_out * pool - t_len
    xp = np.pad(x.data, ((0, 0), (0, pad), (0, 0)), constant_values=-np.inf)
    win = xp.reshape(bsz, t_out, pool, ch)
    idx = win.argmax(axis=2)  # first index on ties
    out = Tensor(np.take_along_axis(win, idx[:, :, None, :], axis=2)[:, :, 0, :], (x,))

    def back():
        gwin = np.zeros_like(win)
        np.put_along_axis(gwin, idx[:, :, None, :], out.grad[:, :, None, :], axis=2)
        x.grad += gwin.reshape(bsz, t_out * pool, ch)[:, :t_len, :]

    out._backward = back
    return out


def dropout_op(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; call only in train mode (eval is the identity)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if rate == 0.0:
        return x
    mask = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    out = Tensor(x.data * mask, (x,))

    def back():
        x.grad += out.grad * mask

    out._backward = back
    return out
