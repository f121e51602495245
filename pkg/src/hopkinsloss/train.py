"""Training loop: composite losses, Adam, reduce-on-plateau and early stopping.

A run draws all randomness from four child streams of its seed (weight
init, shuffling, dropout, Hopkins sampling), so a baseline run and a
Hopkins-loss run with the same seed start from identical weights and see
identical minibatches.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .autodiff import DimensionError, Tape, backward, make_rng, spawn_rngs
from .hopkins import MIN_LOSS_ROWS, HopkinsConfig, hopkins_loss, hopkins_statistic
from .models import (AutoencoderSpec, LinearProbeSpec, MLPClassifierSpec, Params,
                     bind, forward, init_params)

CLASSIFIER_LR = 1e-4
AUTOENCODER_LR = 4e-4
EVAL_SEED = 8_675_309


@dataclass(frozen=True)
class TrainConfig:
    lr: float = CLASSIFIER_LR
    batch_size: int = 1024
    plateau_factor: float = 0.5
    plateau_patience: int = 30
    early_stop_patience: int = 100
    max_epochs: int = 1000
    weight: float = 1.0
    hopkins: HopkinsConfig = field(default_factory=HopkinsConfig)
    seed: int = 0
    eval_seed: int = EVAL_SEED
    val_hopkins: bool = True
    early_stopping: bool = True

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"loss weight must be in [0, 1], got {self.weight}")
        if self.plateau_patience < 1 or self.early_stop_patience < 1:
            raise ValueError("patience values must be positive")
        if self.batch_size < 1 or self.max_epochs < 0 or self.lr <= 0:
            raise ValueError("batch_size, max_epochs and lr must be positive")

    @property
    def uses_hopkins(self) -> bool:
        return self.weight < 1.0

    def config_hash(self) -> str:
        d = asdict(self)
        d["hopkins"] = {"k": self.hopkins.k, "metric": self.hopkins.metric.name,
                        "target": self.hopkins.target}
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, params: Params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params: Params, grads: list[np.ndarray], state: AdamState,
              lr: float) -> tuple[Params, AdamState]:
    """One bias-corrected Adam update. Returns new arrays; inputs are untouched."""
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise DimensionError("parameter and gradient shapes differ")
    b1, b2 = state.beta1, state.beta2
    t = state.t + 1
    m = [b1 * mi + (1 - b1) * g for mi, g in zip(state.m, grads)]
    v = [b2 * vi + (1 - b2) * g * g for vi, g in zip(state.v, grads)]
    c1 = 1 - b1 ** t
    c2 = 1 - b2 ** t
    new = [p - lr * (mi / c1) / (np.sqrt(vi / c2) + state.eps)
           for p, mi, vi in zip(params, m, v)]
    return new, replace(state, m=m, v=v, t=t)


def _with_hopkins(tape, primary, feats, cfg, rng):
    if cfg.weight == 1.0:
        return primary
    if tape.value(feats).shape[0] < MIN_LOSS_ROWS:
        # too few rows for a meaningful sample; keep only the primary term
        return primary if primary is None else tape.scale(primary, cfg.weight)
    lh, _ = hopkins_loss(tape, feats, cfg.hopkins, rng)
    if cfg.weight == 0.0:
        return lh
    return tape.weighted_sum([(cfg.weight, primary), (1.0 - cfg.weight, lh)])


def composite_classification_loss(tape: Tape, logits: int, labels, tap: int,
                                  cfg: TrainConfig, rng: np.random.Generator) -> int:
    """``w * CE + (1 - w) * |H(tap) - target|``; H is never evaluated when w == 1."""
    ce = tape.cross_entropy(logits, labels) if cfg.weight > 0 else None
    out = _with_hopkins(tape, ce, tap, cfg, rng)
    if out is None:
        out = tape.constant(0.0)
    return out


def composite_ae_loss(tape: Tape, recon: int, x: int, code: int,
                      cfg: TrainConfig, rng: np.random.Generator) -> int:
    """``w * MSE(recon, x) + (1 - w) * |H(code) - target|``."""
    rec = tape.mse(recon, x) if cfg.weight > 0 else None
    out = _with_hopkins(tape, rec, code, cfg, rng)
    if out is None:
        out = tape.constant(0.0)
    return out


@dataclass
class Split:
    x: np.ndarray
    y: np.ndarray | None = None

    def __len__(self):
        return self.x.shape[0]


@dataclass
class Dataset:
    train: Split
    val: Split
    test: Split
    num_classes: int = 0


@dataclass
class RunRecord:
    task: str
    seed: int
    weight: float
    target: float | None
    bottleneck: int | None
    accuracy: float | None
    hopkins: float | None
    epochs: int
    best_epoch: int
    best_val_loss: float
    config_hash: str
    epoch_ms: list[float] = field(default_factory=list)

    TIMING_FIELDS = ("epoch_ms",)

    @property
    def condition(self) -> str:
        base = "baseline" if self.target is None else f"H_T={self.target:g}"
        return base if self.bottleneck is None else f"B={self.bottleneck} {base}"

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "RunRecord":
        return cls(**json.loads(line))


def _loss(tape, spec, ids, xb, yb, cfg, train, drop_rng, hop_rng):
    x = tape.constant(xb)
    out, tap = forward(tape, ids, x, spec, train, drop_rng)
    if isinstance(spec, AutoencoderSpec):
        return composite_ae_loss(tape, out, x, tap, cfg, hop_rng)
    if isinstance(spec, LinearProbeSpec):
        return tape.cross_entropy(out, yb)
    return composite_classification_loss(tape, out, yb, tap, cfg, hop_rng)


def _batches(n: int, size: int, order=None):
    order = np.arange(n) if order is None else order
    for s in range(0, n, size):
        yield order[s:s + size]


def evaluation_loss(spec, params: Params, split: Split, cfg: TrainConfig) -> float:
    """Row-weighted mean of the eval-mode objective over minibatches of the split.

    The Hopkins term (if any) uses a fresh generator seeded with ``cfg.eval_seed``
    so the value does not jitter between epochs.
    """
    vcfg = cfg if cfg.val_hopkins else replace(cfg, weight=1.0)
    if isinstance(spec, LinearProbeSpec):
        vcfg = replace(cfg, weight=1.0)
    hop_rng = make_rng(cfg.eval_seed)
    total = 0.0
    for b in _batches(len(split), cfg.batch_size):
        tape = Tape()
        ids = bind(tape, params)
        yb = None if split.y is None else split.y[b]
        loss = _loss(tape, spec, ids, split.x[b], yb, vcfg, False, None, hop_rng)
        total += tape.value(loss)[0, 0] * len(b)
    return total / len(split)


def predict(spec, params: Params, x: np.ndarray, batch_size: int = 4096):
    """Eval-mode outputs and tap activations (tap is None for the probe)."""
    outs, taps = [], []
    for b in _batches(x.shape[0], batch_size):
        tape = Tape()
        ids = bind(tape, params)
        out, tap = forward(tape, ids, tape.constant(x[b]), spec, False)
        outs.append(tape.value(out))
        if tap is not None:
            taps.append(tape.value(tap))
    return np.concatenate(outs), (np.concatenate(taps) if taps else None)


def accuracy(spec, params: Params, split: Split) -> float:
    logits, _ = predict(spec, params, split.x)
    return float(np.mean(logits.argmax(axis=1) == split.y))


def fit(spec, train: Split, val: Split, cfg: TrainConfig,
        log: Callable[[dict], None] | None = None) -> tuple[Params, RunRecord]:
    """Train until early stopping (or ``max_epochs``) and return the best-validation snapshot.

    The record's ``accuracy`` and ``hopkins`` fields are left empty; see
    :func:`run_classifier` and :func:`run_autoencoder` for finished records.
    """
    if len(train) == 0 or len(val) == 0:
        raise ValueError("training and validation splits must be non-empty")
    if isinstance(spec, LinearProbeSpec):
        cfg = replace(cfg, weight=1.0)
    init_rng, shuffle_rng, drop_rng, hop_rng = spawn_rngs(cfg.seed, 4)
    params = init_params(spec, init_rng)
    state = AdamState.zeros(params)
    lr = cfg.lr
    best_loss, best_params, best_epoch = np.inf, params, 0
    bad = plateau = 0
    epoch_ms: list[float] = []
    n = len(train)
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        total = 0.0
        for b in _batches(n, cfg.batch_size, shuffle_rng.permutation(n)):
            tape = Tape()
            ids = bind(tape, params)
            yb = None if train.y is None else train.y[b]
            loss = _loss(tape, spec, ids, train.x[b], yb, cfg, True, drop_rng, hop_rng)
            grads = backward(tape, loss)
            params, state = adam_step(params, [grads[i] for i in ids], state, lr)
            total += tape.value(loss)[0, 0] * len(b)
        val_loss = evaluation_loss(spec, params, val, cfg)
        epoch_ms.append((time.perf_counter() - t0) * 1e3)
        if val_loss < best_loss:
            best_loss, best_params, best_epoch = val_loss, params, epoch
            bad = plateau = 0
        else:
            bad += 1
            plateau += 1
            if plateau >= cfg.plateau_patience:
                lr *= cfg.plateau_factor
                plateau = 0
        if log is not None:
            log({"epoch": epoch, "train_loss": total / n, "val_loss": val_loss,
                 "lr": lr, "duration_ms": epoch_ms[-1]})
        if cfg.early_stopping and bad >= cfg.early_stop_patience:
            break
    record = RunRecord(task=_task_name(spec), seed=cfg.seed,
                       weight=cfg.weight,
                       target=cfg.hopkins.target if cfg.uses_hopkins else None,
                       bottleneck=getattr(spec, "bottleneck", None),
                       accuracy=None, hopkins=None, epochs=epoch, best_epoch=best_epoch,
                       best_val_loss=float(best_loss), config_hash=cfg.config_hash(),
                       epoch_ms=epoch_ms)
    return best_params, record


def _task_name(spec) -> str:
    if isinstance(spec, AutoencoderSpec):
        return "autoencode"
    if isinstance(spec, LinearProbeSpec):
        return "probe"
    return "classify"


def evaluation_hopkins(features: np.ndarray, cfg: TrainConfig) -> float:
    return hopkins_statistic(features, cfg.hopkins, make_rng(cfg.eval_seed)).H


def run_classifier(data: Dataset, cfg: TrainConfig, log=None,
                   **spec_kw) -> tuple[Params, RunRecord]:
    """Fit the MLP classifier; report test accuracy and H of the tapped test features."""
    spec = MLPClassifierSpec(data.train.x.shape[1], data.num_classes, **spec_kw)
    params, rec = fit(spec, data.train, data.val, cfg, log)
    logits, tap = predict(spec, params, data.test.x)
    rec.accuracy = float(np.mean(logits.argmax(axis=1) == data.test.y))
    rec.hopkins = evaluation_hopkins(tap, cfg)
    return params, rec


def extract_features(params: Params, spec: AutoencoderSpec, x: np.ndarray) -> np.ndarray:
    """Eval-mode bottleneck codes, row-aligned with ``x``."""
    _, code = predict(spec, params, x)
    return code


def train_probe(features: Dataset, cfg: TrainConfig, log=None) -> tuple[Params, RunRecord]:
    """Linear-plus-softmax classifier on frozen features, trained without the Hopkins term."""
    cfg = replace(cfg, weight=1.0)
    spec = LinearProbeSpec(features.train.x.shape[1], features.num_classes)
    params, rec = fit(spec, features.train, features.val, cfg, log)
    rec.accuracy = accuracy(spec, params, features.test)
    return params, rec


def run_autoencoder(data: Dataset, bottleneck: int, cfg: TrainConfig,
                    probe_cfg: TrainConfig | None = None, log=None, **spec_kw):
    """Fit the autoencoder, then a linear probe on its bottleneck codes.

    Returns ``(ae_params, probe_params, record)``; the record carries the
    probe's test accuracy and H of the test-split codes.
    """
    spec = AutoencoderSpec(data.train.x.shape[1], bottleneck, **spec_kw)
    params, rec = fit(spec, data.train, data.val, cfg, log)
    feats = Dataset(*(Split(extract_features(params, spec, s.x), s.y)
                      for s in (data.train, data.val, data.test)),
                    num_classes=data.num_classes)
    rec.hopkins = evaluation_hopkins(feats.test.x, cfg)
    if data.num_classes >= 2 and data.train.y is not None:
        probe_cfg = probe_cfg or replace(cfg, weight=1.0)
        probe_params, prec = train_probe(feats, probe_cfg)
        rec.accuracy = prec.accuracy
    else:
        probe_params = None
    return params, probe_params, rec
