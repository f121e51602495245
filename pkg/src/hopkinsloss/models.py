"""MLP classifier, bottleneck autoencoder and linear probe on the autodiff tape.

Parameters are a flat list ``[W0, b0, W1, b1, ...]`` with ``W`` of shape
``(fan_in, fan_out)`` and ``b`` of shape ``(1, fan_out)``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import DimensionError, Tape

Params = list[np.ndarray]

_MAGIC = b"HLPARAM1"


@dataclass(frozen=True)
class MLPClassifierSpec:
    """linear-GELU-dropout x2, then a linear layer producing class logits."""
    input_dim: int
    num_classes: int
    hidden: tuple[int, ...] = (128, 128)
    dropout: float = 0.2
    tap_layer: int = 2

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if not 1 <= self.tap_layer <= len(self.hidden):
            raise ValueError("tap_layer must index a hidden layer")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        widths = [self.input_dim, *self.hidden, self.num_classes]
        return list(zip(widths[:-1], widths[1:]))


@dataclass(frozen=True)
class AutoencoderSpec:
    """Encoder d -> hidden... -> B (linear bottleneck); decoder mirrors it."""
    input_dim: int
    bottleneck: int
    hidden: tuple[int, ...] = (128, 128)
    dropout: float = 0.2

    def __post_init__(self):
        if self.bottleneck < 1:
            raise ValueError("bottleneck must be positive")

    @property
    def encoder_widths(self) -> list[int]:
        return [self.input_dim, *self.hidden, self.bottleneck]

    @property
    def decoder_widths(self) -> list[int]:
        return self.encoder_widths[::-1]

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        e, d = self.encoder_widths, self.decoder_widths
        return list(zip(e[:-1], e[1:])) + list(zip(d[:-1], d[1:]))

    @property
    def n_encoder_layers(self) -> int:
        return len(self.hidden) + 1


@dataclass(frozen=True)
class LinearProbeSpec:
    input_dim: int
    num_classes: int

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        return [(self.input_dim, self.num_classes)]


def init_params(spec, rng: np.random.Generator) -> Params:
    """Weights uniform in +-sqrt(1/fan_in), zero biases."""
    params = []
    for fan_in, fan_out in spec.layer_dims:
        bound = np.sqrt(1.0 / fan_in)
        params.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
        params.append(np.zeros((1, fan_out)))
    return params


def param_count(spec) -> int:
    return sum(i * o + o for i, o in spec.layer_dims)


def bind(tape: Tape, params: Params) -> list[int]:
    return [tape.leaf(p) for p in params]


def _check_input(tape: Tape, x: int, d: int):
    if tape.value(x).shape[1] != d:
        raise DimensionError(f"expected {d} input features, got {tape.value(x).shape[1]}")


def _hidden_stack(tape, ids, x, n_layers, rate, train, rng, tap_layer=None):
    h, tap = x, None
    for layer in range(n_layers):
        h = tape.gelu(tape.affine(h, ids[2 * layer], ids[2 * layer + 1]))
        if tap_layer == layer + 1:
            tap = h
        h = tape.dropout(h, rate, train, rng)
    return h, tap


def forward_classifier(tape: Tape, ids: list[int], x: int, spec: MLPClassifierSpec,
                       train: bool = False, rng: np.random.Generator | None = None):
    """Returns ``(logits, tap)`` node ids; ``tap`` is the tapped GELU output before dropout."""
    _check_input(tape, x, spec.input_dim)
    n_hidden = len(spec.hidden)
    h, tap = _hidden_stack(tape, ids, x, n_hidden, spec.dropout, train, rng, spec.tap_layer)
    logits = tape.affine(h, ids[2 * n_hidden], ids[2 * n_hidden + 1])
    return logits, tap


def forward_autoencoder(tape: Tape, ids: list[int], x: int, spec: AutoencoderSpec,
                        train: bool = False, rng: np.random.Generator | None = None):
    """Returns ``(reconstruction, bottleneck)`` node ids."""
    _check_input(tape, x, spec.input_dim)
    n_hidden = len(spec.hidden)
    h, _ = _hidden_stack(tape, ids, x, n_hidden, spec.dropout, train, rng)
    k = n_hidden
    code = tape.affine(h, ids[2 * k], ids[2 * k + 1])
    dec = ids[2 * (k + 1):]
    h, _ = _hidden_stack(tape, dec, code, n_hidden, spec.dropout, train, rng)
    recon = tape.affine(h, dec[2 * n_hidden], dec[2 * n_hidden + 1])
    return recon, code


def forward_probe(tape: Tape, ids: list[int], x: int, spec: LinearProbeSpec,
                  train: bool = False, rng=None):
    _check_input(tape, x, spec.input_dim)
    return tape.affine(x, ids[0], ids[1]), None


def forward(tape: Tape, ids: list[int], x: int, spec, train: bool = False, rng=None):
    """Dispatch on spec type; returns ``(output, tap)``."""
    if isinstance(spec, MLPClassifierSpec):
        return forward_classifier(tape, ids, x, spec, train, rng)
    if isinstance(spec, AutoencoderSpec):
        return forward_autoencoder(tape, ids, x, spec, train, rng)
    if isinstance(spec, LinearProbeSpec):
        return forward_probe(tape, ids, x, spec, train, rng)
    raise TypeError(f"unsupported model spec {type(spec).__name__}")


def save_params(path, params: Params):
    """Little-endian: magic, u32 count, u32 (rows, cols) per array, then float64 payloads."""
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(params)))
        for p in params:
            f.write(struct.pack("<II", *p.shape))
        for p in params:
            f.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_params(path) -> Params:
    buf = Path(path).read_bytes()
    if buf[:8] != _MAGIC:
        raise ValueError(f"{path}: not a parameter file (bad magic)")
    (count,) = struct.unpack_from("<I", buf, 8)
    shapes = [struct.unpack_from("<II", buf, 12 + 8 * i) for i in range(count)]
    offset = 12 + 8 * count
    params = []
    for rows, cols in shapes:
        nbytes = rows * cols * 8
        if offset + nbytes > len(buf):
            raise ValueError(f"{path}: truncated at byte {offset}")
        params.append(np.frombuffer(buf, "<f8", rows * cols, offset).reshape(rows, cols).copy())
        offset += nbytes
    return params
