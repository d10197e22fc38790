"""Trainable layers over the Tensor kernel.

Initialization: dense and conv weights are uniform in
+-sqrt(6/(fan_in+fan_out)), recurrent matrices uniform in +-1/sqrt(H),
biases zero except the LSTM forget gate at +1. All layers expose
parameters() as (name, Tensor) pairs in a stable order for the optimizer
and for checkpoints.
"""

from __future__ import annotations

import numpy as np

from penscript.netcore import tensor as T
from penscript.netcore.tensor import Tensor


def _xavier(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, shape)


class Dense:
    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator):
        self.w = Tensor(_xavier(rng, (fan_in, fan_out), fan_in, fan_out))
        self.b = Tensor(np.zeros(fan_out))

    def __call__(self, x: Tensor) -> Tensor:
        return T.affine(x, self.w, self.b)

    def parameters(self):
        return [("w", self.w), ("b", self.b)]


class Conv1d:
    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator):
        if kernel < 1:
            raise ValueError("kernel size must be >= 1")
        self.w = Tensor(_xavier(rng, (c_out, c_in, kernel), c_in * kernel, c_out))
        self.b = Tensor(np.zeros(c_out))

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv1d_op(x, self.w, self.b)

    def parameters(self):
        return [("w", self.w), ("b", self.b)]


class MaxPool1d:
    def __init__(self, pool: int):
        if pool < 1:
            raise ValueError("pool size must be >= 1")
        self.pool = pool

    def __call__(self, x: Tensor) -> Tensor:
        return T.maxpool1d_op(x, self.pool)

    def parameters(self):
        return []


class BatchNorm1d:
    """Per-channel normalization over every leading axis (batch and time).

    Train mode uses biased batch statistics and refreshes the running
    stats; eval mode requires at least one prior train-mode call.
    """

    def __init__(self, channels: int, momentum: float = 0.9, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(channels))
        self.beta = Tensor(np.zeros(channels))
        self.momentum = momentum
        self.eps = eps
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.initialized = False

    def __call__(self, x: Tensor, mode: str) -> Tensor:
        if mode == "train":
            axes = tuple(range(x.data.ndim - 1))
            mu = x.data.mean(axis=axes)
            var = x.data.var(axis=axes)
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mu
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
            self.initialized = True
            return self._normalize(x, mu, var, train=True)
        if mode == "eval":
            if not self.initialized:
                raise RuntimeError("eval-mode batchnorm before any training step")
            return self._normalize(x, self.running_mean, self.running_var, train=False)
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")

    def _normalize(self, x: Tensor, mu, var, train: bool) -> Tensor:
        gamma, beta = self.gamma, self.beta
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x.data - mu) * inv
        out = Tensor(gamma.data * xhat + beta.data, (x, gamma, beta))
        axes = tuple(range(x.data.ndim - 1))
        n = x.data.size // x.data.shape[-1]

        def back():
            g = out.grad
            gamma.grad += (g * xhat).sum(axis=axes)
            beta.grad += g.sum(axis=axes)
            dxhat = g * gamma.data
            if train:
                # mean and variance depend on x, so subtract their pullbacks
                x.grad += (
                    inv
                    / n
                    * (
                        n * dxhat
                        - dxhat.sum(axis=axes)
                        - xhat * (dxhat * xhat).sum(axis=axes)
                    )
                )
            else:
                x.grad += dxhat * inv

        out._backward = back
        return out

    def parameters(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]


class Dropout:
    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate

    def __call__(self, x: Tensor, mode: str, rng: np.random.Generator | None = None) -> Tensor:
        if mode == "eval" or self.rate == 0.0:
            return x
        if rng is None:
            raise ValueError("train-mode dropout needs a random generator")
        return T.dropout_op(x, self.rate, rng)

    def parameters(self):
        return []


class LSTM:
    """Single-direction LSTM returning the full hidden sequence.

    Gate layout along the 4H axis is input, forget, cell, output; the
    initial state is zero. tanh activations throughout.
    """

    def __init__(self, c_in: int, hidden: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(hidden)
        self.hidden = hidden
        self.wx = Tensor(rng.uniform(-bound, bound, (c_in, 4 * hidden)))
        self.wh = Tensor(rng.uniform(-bound, bound, (hidden, 4 * hidden)))
        bias = np.zeros(4 * hidden)
        bias[hidden : 2 * hidden] = 1.0
        self.b = Tensor(bias)

    def __call__(self, x: Tensor) -> Tensor:
        bsz, t_len, _ = x.data.shape
        h = self.hidden
        # hoist the input projection out of the time loop
        xw = T.affine(x, self.wx, self.b)
        h_t = Tensor(np.zeros((bsz, h)))
        c_t = Tensor(np.zeros((bsz, h)))
        steps = []
        for t in range(t_len):
            gates = T.add(T.index_time(xw, t), T.matmul(h_t, self.wh))
            i_g = T.sigmoid(T.slice_cols(gates, 0, h))
            f_g = T.sigmoid(T.slice_cols(gates, h, 2 * h))
            g_g = T.tanh(T.slice_cols(gates, 2 * h, 3 * h))
            o_g = T.sigmoid(T.slice_cols(gates, 3 * h, 4 * h))
            c_t = T.add(T.mul(f_g, c_t), T.mul(i_g, g_g))
            h_t = T.mul(o_g, T.tanh(c_t))
            steps.append(h_t)
        return T.stack_time(steps)

    def parameters(self):
        return [("wx", self.wx), ("wh", self.wh), ("b", self.b)]


class BiLSTM:
    """Forward and backward LSTMs concatenated along features."""

    def __init__(self, c_in: int, hidden: int, rng: np.random.Generator):
        self.fwd = LSTM(c_in, hidden, rng)
        self.bwd = LSTM(c_in, hidden, rng)

    def __call__(self, x: Tensor) -> Tensor:
        out_f = self.fwd(x)
        out_b = T.reverse_time(self.bwd(T.reverse_time(x)))
        return T.concat_last([out_f, out_b])

    def parameters(self):
        return [(f"fwd.{n}", p) for n, p in self.fwd.parameters()] + [
            (f"bwd.{n}", p) for n, p in self.bwd.parameters()
        ]
