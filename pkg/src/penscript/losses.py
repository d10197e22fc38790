"""Classification losses with analytic gradients, and the CTC machinery.

Per-sample losses take raw logits and a target index and return both the
loss value and its gradient with respect to the logits, all in double
precision. The family shares one pattern: map logits to probabilities p,
differentiate the loss in p, then pull back through the softmax Jacobian
as p * (g - p.g). Values use a (1/K) class normalization throughout
(switchable off via LossParams.scale_free); probability logs are clamped
so saturated predictions stay finite.

The sequence side is connectionist temporal classification: a loss that
marginalizes over all monotonic frame-to-label alignments using a
reserved blank class at the last index, plus greedy and prefix beam
decoders.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

NEG_INF = float("-inf")


@dataclass(frozen=True)
class LossParams:
    """Hyperparameters for every loss variant, defaults tuned for noisy labels."""

    fl_alpha: float = 0.75
    fl_gamma: float = 8.0
    lsr_beta: float = 0.1
    sbs_beta: float = 0.95
    hbs_beta: float = 0.8
    gce_alpha: float = 0.95
    sce_alpha: float = 0.5
    sce_beta: float = 0.5
    jo_alpha: float = 1.2
    jo_beta: float = 0.8
    log_clamp_eps: float = 1e-12
    rce_log_zero: float = -4.0
    scale_free: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.fl_alpha <= 1.0:
            raise ValueError("fl_alpha must be in [0, 1]")
        if self.fl_gamma < 0:
            raise ValueError("fl_gamma must be >= 0")
        if not 0.0 < self.gce_alpha <= 1.0:
            raise ValueError("gce_alpha must be in (0, 1]")
        for name in ("lsr_beta", "sbs_beta", "hbs_beta"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        for name in ("sce_alpha", "sce_beta", "jo_alpha", "jo_beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.log_clamp_eps <= 0:
            raise ValueError("log_clamp_eps must be positive")

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "LossParams":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ValueError(f"unknown loss params: {sorted(extra)}")
        return cls(**d)


@dataclass
class LossOutput:
    value: float
    grad_logits: np.ndarray

    def __post_init__(self) -> None:
        self.value = float(self.value)
        if not np.isfinite(self.value):
            raise ValueError("loss value is not finite")
        if not np.isfinite(self.grad_logits).all():
            raise ValueError("loss gradient is not finite")


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable log-probabilities along the last axis."""
    x = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValueError("logits contain non-finite values")
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def _clamped_log(p: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """log(max(p, eps)) and its derivative in p (zero where the clamp binds)."""
    safe = np.maximum(p, eps)
    dlog = np.where(p >= eps, 1.0 / safe, 0.0)
    return np.log(safe), dlog


def _pullback(p: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Chain a d(loss)/d(p) vector through the softmax Jacobian."""
    return p * (g - np.dot(p, g))


def _prepare(logits: np.ndarray, target_index: int) -> tuple[np.ndarray, int, int]:
    x = np.asarray(logits, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("per-sample losses take a 1-D logit vector")
    k = x.shape[0]
    if not 0 <= target_index < k:
        raise ValueError(f"target index {target_index} out of range for {k} classes")
    return x, int(target_index), k


def cce(logits: np.ndarray, target_index: int, params: LossParams | None = None) -> LossOutput:
    """Class-normalized cross entropy: -(1/K) log p(target)."""
    params = params or LossParams()
    x, t, k = _prepare(logits, target_index)
    scale = 1.0 if params.scale_free else 1.0 / k
    p = softmax(x)
    logp, dlog = _clamped_log(p, params.log_clamp_eps)
    g = np.zeros(k)
    g[t] = -scale * dlog[t]
    return LossOutput(-scale * logp[t], _pullback(p, g))


def focal(logits: np.ndarray, target_index: int, params: LossParams | None = None) -> LossOutput:
    """Cross entropy damped by (1 - p_t)^gamma so easy samples contribute little."""
    params = params or LossParams()
    x, t, k = _prepare(logits, target_index)
    scale = (1.0 if params.scale_free else 1.0 / k) * params.fl_alpha
    gamma = params.fl_gamma
    p = softmax(x)
    pt = p[t]
    if pt >= 1.0:
        return LossOutput(0.0, np.zeros(k))
    logp, dlog = _clamped_log(p, params.log_clamp_eps)
    mod = (1.0 - pt) ** gamma
    dmod = 0.0 if gamma == 0 else gamma * (1.0 - pt) ** (gamma - 1.0)
    g = np.zeros(k)
    # d/dp_t of -(1-p_t)^gamma log p_t
    g[t] = scale * (dmod * logp[t] - mod * dlog[t])
    return LossOutput(-scale * mod * logp[t], _pullback(p, g))


def lsr(logits: np.ndarray, target_index: int, params: LossParams | None = None) -> LossOutput:
    """Cross entropy plus a confidence penalty: -(beta/K) * entropy(p)."""
    params = params or LossParams()
    x, t, k = _prepare(logits, target_index)
    scale = 1.0 if params.scale_free else 1.0 / k
    p = softmax(x)
    logp, dlog = _clamped_log(p, params.log_clamp_eps)
    pen = params.lsr_beta * scale
    value = -scale * logp[t] + pen * np.dot(p, logp)
    g = pen * (logp + p * dlog)
    g[t] += -scale * dlog[t]
    return LossOutput(value, _pullback(p, g))


def boot_soft(
    logits: np.ndarray, target_index: int, params: LossParams | None = None
) -> LossOutput:
    """Cross entropy against beta * one-hot target + (1 - beta) * own prediction."""
    params = params or LossParams()
    x, t, k = _prepare(logits, target_index)
    scale = 1.0 if params.scale_free else 1.0 / k
    beta = params.sbs_beta
    p = softmax(x)
    logp, dlog = _clamped_log(p, params.log_clamp_eps)
    value = -scale * (beta * logp[t] + (1.0 - beta) * np.dot(p, logp))
    g = -scale * (1.0 - beta) * (logp + p * dlog)
    g[t] += -scale * beta * dlog[t]
    return LossOutput(value, _pullback(p, g))


def boot_hard(
    logits: np.ndarray, target_index: int, params: LossParams | None = None
) -> LossOutput:
    """Like boot_soft but mixing in the argmax prediction as a hard label.

    The argmax choice itself is treated as a constant, so the gradient is
    exact everywhere except on decision boundaries.
    """
    params = params or LossParams()
    x, t, k = _prepare(logits, target_index)
    scale = 1.0 if params.scale_free else 1.0 / k
    beta = params.hbs_beta
    p = softmax(x)
    z = int(np.argmax(p))
    logp, dlog = _clamped_log(p, params.log_clamp_eps)
    value = -scale * (beta * logp[t] + (1.0 - beta) * logp[z])
    g = np.zeros(k)
    g[t] += -scale * beta * dlog[t]
    g[z] += -scale * (1.0 - beta) * dlog[z]
    return LossOutput(value, _pullback(p, g))


def gce(logits: np.ndarray, target_index: int, params: LossParams | None = None) -> LossOutput:
    """Box-Cox loss (1 - p_t^alpha) / alpha, spanning cross entropy to MAE.

    No (1/K) factor here: as alpha -> 0 the value approaches -log p_t, the
    unnormalized cross entropy.
    """
    params = params or LossParams()
    x, t, k = _prepare(logits, target_index)
    alpha = params.gce_alpha
    p = softmax(x)
    pt = p[t]
    value = (1.0 - pt**alpha) / alpha
    g = np.zeros(k)
    g[t] = -max(pt, params.log_clamp_eps) ** (alpha - 1.0)
    return LossOutput(value, _pullback(p, g))


def sce(logits: np.ndarray, target_index: int, params: LossParams | None = None) -> LossOutput:
    """Symmetric sum of cross entropy and reverse cross entropy.

    The reverse term swaps prediction and target; log 0 on the one-hot
    target is replaced by the finite rce_log_zero.
    """
    params = params or LossParams()
    x, t, k = _prepare(logits, target_index)
    scale = 1.0 if params.scale_free else 1.0 / k
    a, b = params.sce_alpha, params.sce_beta
    zero = params.rce_log_zero
    p = softmax(x)
    logp, dlog = _clamped_log(p, params.log_clamp_eps)
    rce_value = -scale * zero * (1.0 - p[t])
    value = a * (-scale * logp[t]) + b * rce_value
    g = np.full(k, -b * scale * zero)
    g[t] = -a * scale * dlog[t]
    return LossOutput(value, _pullback(p, g))


def joint_opt(
    logits_batch: np.ndarray,
    targets_batch: Sequence[int],
    params: LossParams | None = None,
    class_prior: np.ndarray | None = None,
) -> LossOutput:
    """Batch loss: mean cross entropy + prior KL + mean prediction entropy.

    The KL term pulls the batch-mean prediction toward class_prior
    (uniform by default), the entropy term pushes individual predictions
    toward confidence; together they resist degenerate label fitting.
    """
    params = params or LossParams()
    x = np.asarray(logits_batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("joint_opt needs a non-empty (batch, classes) logit matrix")
    bsz, k = x.shape
    targets = [int(t) for t in targets_batch]
    if len(targets) != bsz:
        raise ValueError("batch size mismatch between logits and targets")
    if any(not 0 <= t < k for t in targets):
        raise ValueError("target index out of range")
    if class_prior is None:
        prior = np.full(k, 1.0 / k)
    else:
        prior = np.asarray(class_prior, dtype=np.float64)
        if prior.shape != (k,) or (prior < 0).any() or abs(prior.sum() - 1.0) > 1e-8:
            raise ValueError("class_prior must be a length-K distribution")

    scale = 1.0 if params.scale_free else 1.0 / k
    eps = params.log_clamp_eps
    p = softmax(x)
    logp, dlog = _clamped_log(p, eps)
    rows = np.arange(bsz)

    ce_mean = -scale * logp[rows, targets].mean()

    pbar = p.mean(axis=0)
    log_pbar, dlog_pbar = _clamped_log(pbar, eps)
    log_prior = np.log(np.maximum(prior, eps))
    kl = float(np.sum(np.where(prior > 0, prior * (log_prior - log_pbar), 0.0)))

    ent_mean = float(-(p * logp).sum(axis=1).mean())

    value = ce_mean + params.jo_alpha * kl + params.jo_beta * ent_mean

    g = np.zeros_like(p)
    g[rows, targets] -= scale * dlog[rows, targets] / bsz
    g += params.jo_alpha * (-prior * dlog_pbar) / bsz
    g += params.jo_beta * (-(logp + p * dlog)) / bsz
    grad = p * (g - (p * g).sum(axis=1, keepdims=True))
    return LossOutput(value, grad)


CHARACTER_LOSSES = {
    "cce": cce,
    "focal": focal,
    "lsr": lsr,
    "boot_soft": boot_soft,
    "boot_hard": boot_hard,
    "gce": gce,
    "sce": sce,
}


class CTCInfeasibleError(ValueError):
    """Raised when the frame count cannot fit the target under CTC rules."""


def _extended_target(target: Sequence[int], blank: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Blank-interleaved target plus skip masks for both recursion directions."""
    ext = np.full(2 * len(target) + 1, blank, dtype=np.int64)
    ext[1::2] = target
    s = len(ext)
    skip_back = np.zeros(s, dtype=bool)
    skip_fwd = np.zeros(s, dtype=bool)
    for i in range(2, s):
        # only label states may skip the separating blank, and only between
        # distinct labels
        skip_back[i] = i % 2 == 1 and ext[i] != ext[i - 2]
    for i in range(s - 2):
        skip_fwd[i] = i % 2 == 1 and ext[i + 2] != ext[i]
    return ext, skip_back, skip_fwd


def ctc_feasible(num_frames: int, target: Sequence[int]) -> bool:
    """A target fits iff frames cover every label plus blanks between repeats."""
    repeats = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return num_frames >= len(target) + repeats


def ctc_loss(log_probs: np.ndarray, target: Sequence[int]) -> LossOutput:
    """Negative log-probability of the target under all CTC alignments.

    log_probs is a (T, K+1) matrix of per-frame log-probabilities with the
    blank in the last column. The value sums every monotonic alignment via
    the forward recursion over the blank-interleaved target; the gradient
    (with respect to log_probs) comes from the forward-backward posteriors.
    """
    y = np.asarray(log_probs, dtype=np.float64)
    if y.ndim != 2 or y.shape[1] < 2:
        raise ValueError("log_probs must be (frames, classes+blank) with >= 2 columns")
    t_len, width = y.shape
    blank = width - 1
    target = tuple(int(i) for i in target)
    if any(i == blank for i in target):
        raise ValueError("target may not contain the blank index")
    if any(not 0 <= i < blank for i in target):
        raise ValueError(f"target index out of range for {blank} classes")
    if not ctc_feasible(t_len, target):
        raise CTCInfeasibleError(
            f"{t_len} frames cannot align to a length-{len(target)} target"
        )

    ext, skip_back, skip_fwd = _extended_target(target, blank)
    s_len = len(ext)
    emit = y[:, ext]  # (T, S)

    alpha = np.full((t_len, s_len), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if s_len > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, t_len):
        prev = alpha[t - 1]
        step = np.full(s_len, NEG_INF)
        step[1:] = prev[:-1]
        skip = np.full(s_len, NEG_INF)
        skip[2:] = prev[:-2]
        comb = np.logaddexp(prev, step)
        comb = np.logaddexp(comb, np.where(skip_back, skip, NEG_INF))
        alpha[t] = emit[t] + comb

    total = alpha[t_len - 1, s_len - 1]
    if s_len > 1:
        total = np.logaddexp(total, alpha[t_len - 1, s_len - 2])

    beta = np.full((t_len, s_len), NEG_INF)
    beta[t_len - 1, s_len - 1] = emit[t_len - 1, s_len - 1]
    if s_len > 1:
        beta[t_len - 1, s_len - 2] = emit[t_len - 1, s_len - 2]
    for t in range(t_len - 2, -1, -1):
        nxt = beta[t + 1]
        step = np.full(s_len, NEG_INF)
        step[:-1] = nxt[1:]
        skip = np.full(s_len, NEG_INF)
        skip[:-2] = nxt[2:]
        comb = np.logaddexp(nxt, step)
        comb = np.logaddexp(comb, np.where(skip_fwd, skip, NEG_INF))
        beta[t] = emit[t] + comb

    # alpha and beta both include the emission at t, so divide it out once
    post = alpha + beta - emit - total
    grad = np.zeros_like(y)
    for s in range(s_len):
        grad[:, ext[s]] -= np.exp(post[:, s])
    return LossOutput(-total, grad)


def greedy_decode(log_probs: np.ndarray) -> tuple[int, ...]:
    """Best-path decoding: frame argmaxes, collapse repeats, drop blanks."""
    y = np.asarray(log_probs)
    blank = y.shape[1] - 1
    out = []
    prev = -1
    for k in np.argmax(y, axis=1):
        if k != prev and k != blank:
            out.append(int(k))
        prev = k
    return tuple(out)


def beam_decode(log_probs: np.ndarray, beam_width: int) -> tuple[int, ...]:
    """Prefix beam search over collapsed labelings.

    Each surviving prefix tracks separate blank-ending and label-ending
    path masses so extensions by a repeated label stay distinguishable
    from collapsed repeats. With a beam at least as wide as the number of
    reachable prefixes the search is exact.
    """
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    y = np.asarray(log_probs, dtype=np.float64)
    blank = y.shape[1] - 1
    lae = np.logaddexp

    beams: dict[tuple[int, ...], tuple[float, float]] = {(): (0.0, NEG_INF)}
    for t in range(y.shape[0]):
        new: dict[tuple[int, ...], list[float]] = {}

        def bucket(prefix):
            entry = new.get(prefix)
            if entry is None:
                entry = new[prefix] = [NEG_INF, NEG_INF]
            return entry

        for prefix, (p_blank, p_label) in beams.items():
            p_total = lae(p_blank, p_label)
            entry = bucket(prefix)
            entry[0] = lae(entry[0], p_total + y[t, blank])
            if prefix:
                entry[1] = lae(entry[1], p_label + y[t, prefix[-1]])
            for k in range(blank):
                # extending with the last label only counts blank-ending
                # paths; label-ending ones collapse into the repeat above
                src = p_blank if prefix and k == prefix[-1] else p_total
                if src == NEG_INF:
                    continue
                entry = bucket(prefix + (k,))
                entry[1] = lae(entry[1], src + y[t, k])

        ranked = sorted(
            new.items(), key=lambda kv: (-lae(kv[1][0], kv[1][1]), len(kv[0]), kv[0])
        )
        beams = {prefix: (pb, pl) for prefix, (pb, pl) in ranked[:beam_width]}

    best = min(beams.items(), key=lambda kv: (-lae(kv[1][0], kv[1][1]), len(kv[0]), kv[0]))
    return best[0]
