"""The recognition architecture and its checkpoint format.

One convolution block (conv -> max-pool -> batchnorm -> dropout) feeds a
recurrent stack, then a dense head. The sequence head emits per-frame
log-probabilities over classes plus blank; the character head mean-pools
over time and emits one class distribution through an extra dense layer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from penscript.dataio import Sample
from penscript.netcore import tensor as T
from penscript.netcore.layers import BatchNorm1d, BiLSTM, Conv1d, Dense, Dropout, LSTM, MaxPool1d
from penscript.netcore.tensor import Tensor

TASKS = ("seq2seq", "char")


@dataclass(frozen=True)
class ModelConfig:
    num_classes: int
    conv_filters: int = 200
    conv_kernel: int = 4
    pool_size: int = 2
    dropout_rate: float = 0.2
    recurrent_kind: str = "BiLSTM"
    lstm_units: int = 100
    bilstm_units: int = 60
    bilstm_layers: int = 2
    dense_units: int = 100
    use_batchnorm: bool = True

    def __post_init__(self) -> None:
        for name in (
            "num_classes", "conv_filters", "conv_kernel", "pool_size",
            "lstm_units", "bilstm_units", "bilstm_layers", "dense_units",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.recurrent_kind not in ("LSTM", "BiLSTM"):
            raise ValueError("recurrent_kind must be 'LSTM' or 'BiLSTM'")

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ValueError(f"unknown model config fields: {sorted(extra)}")
        return cls(**d)


class RecognitionModel:
    """Conv trunk + recurrent stack + task head, assembled from a config."""

    def __init__(self, cfg: ModelConfig, in_channels: int, task: str, rng: np.random.Generator):
        if task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        self.cfg = cfg
        self.task = task
        self.in_channels = in_channels

        self.conv = Conv1d(in_channels, cfg.conv_filters, cfg.conv_kernel, rng)
        self.pool = MaxPool1d(cfg.pool_size)
        self.norm = BatchNorm1d(cfg.conv_filters) if cfg.use_batchnorm else None
        self.drop = Dropout(cfg.dropout_rate)

        self.recurrent = []
        width = cfg.conv_filters
        if cfg.recurrent_kind == "LSTM":
            self.recurrent.append(LSTM(width, cfg.lstm_units, rng))
            width = cfg.lstm_units
        else:
            for _ in range(cfg.bilstm_layers):
                self.recurrent.append(BiLSTM(width, cfg.bilstm_units, rng))
                width = 2 * cfg.bilstm_units

        if task == "seq2seq":
            self.head = Dense(width, cfg.num_classes + 1, rng)
            self.char_hidden = None
        else:
            self.char_hidden = Dense(width, cfg.dense_units, rng)
            self.head = Dense(cfg.dense_units, cfg.num_classes, rng)

    def forward(
        self, batch: np.ndarray, mode: str, rng: np.random.Generator | None = None
    ) -> Tensor:
        """Log-probabilities for a (batch, time, channels) array.

        seq2seq: (batch, ceil(time/pool), classes+1); char: (batch, classes).
        """
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        x = Tensor(batch)
        x = self.conv(x)
        x = self.pool(x)
        if self.norm is not None:
            x = self.norm(x, mode)
        x = self.drop(x, mode, rng)
        for layer in self.recurrent:
            x = layer(x)
        if self.task == "seq2seq":
            return T.log_softmax_op(self.head(x))
        x = T.mean_time(x)
        x = T.relu(self.char_hidden(x))
        return T.log_softmax_op(self.head(x))

    def parameters(self):
        """(name, Tensor) pairs in checkpoint order."""
        named = [("conv.w", self.conv.w), ("conv.b", self.conv.b)]
        if self.norm is not None:
            named += [(f"norm.{n}", p) for n, p in self.norm.parameters()]
        for i, layer in enumerate(self.recurrent):
            named += [(f"recurrent{i}.{n}", p) for n, p in layer.parameters()]
        if self.char_hidden is not None:
            named += [(f"char_hidden.{n}", p) for n, p in self.char_hidden.parameters()]
        named += [(f"head.{n}", p) for n, p in self.head.parameters()]
        return named

    def buffers(self):
        """Non-trainable named arrays (batchnorm running stats)."""
        if self.norm is None:
            return []
        return [(f"norm.{n}", a) for n, a in self.norm.buffers()]


def forward_seq2seq(sample: Sample, model: RecognitionModel, mode: str = "eval") -> np.ndarray:
    """Per-frame log-probabilities for one sample, as a plain array."""
    if model.task != "seq2seq":
        raise ValueError("model was built for the character task")
    return model.forward(sample.values[None, :, :], mode).data[0]


def forward_char(sample: Sample, model: RecognitionModel, mode: str = "eval") -> np.ndarray:
    """Class log-probabilities for one sample, as a plain array."""
    if model.task != "char":
        raise ValueError("model was built for the sequence task")
    return model.forward(sample.values[None, :, :], mode).data[0]


def save_checkpoint(
    path: str,
    model: RecognitionModel,
    extra: dict | None = None,
) -> None:
    """One-file checkpoint: JSON header line + little-endian float64 blob."""
    arrays = [(n, p.data) for n, p in model.parameters()] + model.buffers()
    header = {
        "model": model.cfg.to_dict(),
        "task": model.task,
        "in_channels": model.in_channels,
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
    }
    if extra:
        header.update(extra)
    blob = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in arrays)
    with open(path, "wb") as f:
        f.write(json.dumps(header).encode("utf-8"))
        f.write(b"\n")
        f.write(blob)


def load_checkpoint(path: str) -> tuple[RecognitionModel, dict]:
    """Rebuild the model from a checkpoint; returns (model, header)."""
    with open(path, "rb") as f:
        header_line = f.readline()
        blob = f.read()
    header = json.loads(header_line.decode("utf-8"))
    cfg = ModelConfig.from_dict(header["model"])
    model = RecognitionModel(
        cfg, header["in_channels"], header["task"], np.random.default_rng(0)
    )
    flat = np.frombuffer(blob, dtype="<f8")
    targets = dict(model.parameters())
    buffers = dict(model.buffers())
    pos = 0
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        size = int(np.prod(shape)) if shape else 1
        chunk = flat[pos : pos + size].reshape(shape)
        pos += size
        name = spec["name"]
        if name in targets:
            targets[name].data = chunk.astype(np.float64).copy()
            targets[name].grad = np.zeros(shape)
        elif name in buffers:
            buffers[name][...] = chunk
        else:
            raise ValueError(f"checkpoint array {name!r} has no home in the model")
    if pos != flat.size:
        raise ValueError("checkpoint blob size disagrees with its manifest")
    if model.norm is not None:
        model.norm.initialized = True
    return model, header
