"""Central finite-difference gradient checks for losses and layers.

Each check builds a scalar objective (a fixed random projection of the
op output), differentiates it both analytically and by central
differences with h = 1e-5, and reports the worst relative error. Used by
the command line `gradcheck` and handy in notebooks; the test suite
carries its own independent checker.
"""

from __future__ import annotations

import numpy as np

from penscript import losses
from penscript.netcore import layers
from penscript.netcore import tensor as T
from penscript.netcore.tensor import Tensor

H = 1e-5


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-10)
    return float(np.abs(a - b).max(initial=0.0) / scale)


def central_diff(fn, x: np.ndarray, h: float = H) -> np.ndarray:
    """d fn / d x elementwise, fn scalar-valued."""
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = fn()
        flat[i] = orig - h
        lo = fn()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * h)
    return g


def check_loss(name: str, rng: np.random.Generator, draws: int = 20) -> float:
    """Worst relative gradient error for one per-sample loss."""
    fn = losses.CHARACTER_LOSSES[name]
    params = losses.LossParams()
    worst = 0.0
    for _ in range(draws):
        k = int(rng.integers(2, 8))
        x = rng.normal(0, 2, k)
        t = int(rng.integers(k))
        analytic = fn(x, t, params).grad_logits
        fd = central_diff(lambda: fn(x, t, params).value, x)
        worst = max(worst, rel_error(analytic, fd))
    return worst


def check_joint_opt(rng: np.random.Generator, draws: int = 10) -> float:
    params = losses.LossParams()
    worst = 0.0
    for _ in range(draws):
        b, k = int(rng.integers(2, 5)), int(rng.integers(2, 6))
        x = rng.normal(0, 2, (b, k))
        t = [int(rng.integers(k)) for _ in range(b)]
        analytic = losses.joint_opt(x, t, params).grad_logits
        fd = central_diff(lambda: losses.joint_opt(x, t, params).value, x)
        worst = max(worst, rel_error(analytic, fd))
    return worst


def check_ctc(rng: np.random.Generator, draws: int = 10) -> float:
    worst = 0.0
    for _ in range(draws):
        t_len, k = int(rng.integers(3, 7)), int(rng.integers(2, 4))
        target = tuple(int(v) for v in rng.integers(0, k, rng.integers(1, 3)))
        if not losses.ctc_feasible(t_len, target):
            continue
        y = losses.log_softmax(rng.normal(0, 1, (t_len, k + 1)))
        analytic = losses.ctc_loss(y, target).grad_logits
        fd = central_diff(lambda: losses.ctc_loss(y, target).value, y)
        worst = max(worst, rel_error(analytic, fd))
    return worst


def _graph_check(build, arrays: list[np.ndarray], rng: np.random.Generator) -> float:
    """Check d(projection of build() output)/d(each array in arrays)."""
    out = build()
    proj = rng.normal(0, 1, out.data.shape)

    def objective() -> float:
        return float(np.sum(build().data * proj))

    out.backward(proj)
    worst = 0.0
    for arr, holder in arrays:
        fd = central_diff(objective, arr)
        worst = max(worst, rel_error(holder.grad, fd))
    return worst


def check_layers(rng: np.random.Generator) -> dict[str, float]:
    """Gradient checks for every differentiable layer, params and inputs."""
    report = {}

    x = Tensor(rng.normal(0, 1, (2, 6, 3)))
    conv = layers.Conv1d(3, 4, 3, rng)
    report["conv1d"] = _graph_check(
        lambda: conv(x), [(x.data, x), (conv.w.data, conv.w), (conv.b.data, conv.b)], rng
    )

    # keep window values separated so the pool argmax is stable under h
    xp = Tensor(np.arange(24, dtype=np.float64).reshape(2, 6, 2) * 0.37 % 5.0)
    report["maxpool1d"] = _graph_check(
        lambda: T.maxpool1d_op(xp, 2), [(xp.data, xp)], rng
    )

    xb = Tensor(rng.normal(0, 1, (3, 5, 4)))
    bn = layers.BatchNorm1d(4)
    report["batchnorm1d"] = _graph_check(
        lambda: bn(xb, "train"),
        [(xb.data, xb), (bn.gamma.data, bn.gamma), (bn.beta.data, bn.beta)],
        rng,
    )

    xd = Tensor(rng.normal(0, 1, (2, 7)))
    dense = layers.Dense(7, 3, rng)
    report["dense"] = _graph_check(
        lambda: dense(xd), [(xd.data, xd), (dense.w.data, dense.w), (dense.b.data, dense.b)], rng
    )

    xl = Tensor(rng.normal(0, 1, (2, 3, 2)))
    lstm = layers.LSTM(2, 2, rng)
    report["lstm"] = _graph_check(
        lambda: lstm(xl),
        [(xl.data, xl)] + [(p.data, p) for _, p in lstm.parameters()],
        rng,
    )

    xbi = Tensor(rng.normal(0, 1, (2, 3, 2)))
    bi = layers.BiLSTM(2, 2, rng)
    report["bilstm"] = _graph_check(
        lambda: bi(xbi),
        [(xbi.data, xbi)] + [(p.data, p) for _, p in bi.parameters()],
        rng,
    )

    xs = Tensor(rng.normal(0, 1, (2, 4)))
    report["log_softmax"] = _graph_check(lambda: T.log_softmax_op(xs), [(xs.data, xs)], rng)

    return report


def run_all(seed: int = 0) -> dict[str, float]:
    """Every check; returns name -> max relative error."""
    rng = np.random.default_rng(seed)
    report = {}
    for name in losses.CHARACTER_LOSSES:
        report[name] = check_loss(name, rng)
    report["joint_opt"] = check_joint_opt(rng)
    report["ctc"] = check_ctc(rng)
    report.update(check_layers(rng))
    return report
