"""Hopkins statistic and the differentiable Hopkins loss.

``H = sum(u) / (sum(u) + sum(w))`` where ``u`` are nearest-neighbour
distances from uniform reference points to the data and ``w`` are
nearest-neighbour distances from sampled data points to the rest of the data.
H is near 0.5 for uniformly random data, low for regular spacing and high for
clustered data.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, make_rng
from .metrics import CHEBYSHEV, Metric, get_metric, nearest_neighbors

#: number of times the Hopkins machinery has run in this process
_invocations = 0

MIN_LOSS_ROWS = 20


def invocation_count() -> int:
    return _invocations


def _tick():
    global _invocations
    _invocations += 1


@dataclass(frozen=True)
class HopkinsConfig:
    """Sampling fraction ``k`` (m = k*n), distance metric and loss target."""
    k: float = 0.05
    metric: Metric = field(default=CHEBYSHEV)
    target: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.k <= 1.0:
            raise ValueError(f"sampling fraction k must be in (0, 1], got {self.k}")
        if self.k > 0.1:
            warnings.warn(f"sampling fraction k={self.k} exceeds 0.1; nearest-neighbour "
                          "distances are no longer close to independent", stacklevel=3)
        if not 0.0 <= self.target <= 1.0:
            raise ValueError(f"target H must be in [0, 1], got {self.target}")
        if isinstance(self.metric, str):
            object.__setattr__(self, "metric", get_metric(self.metric))

    def sample_size(self, n: int) -> int:
        return max(1, int(np.floor(self.k * n + 0.5)))


@dataclass
class HopkinsWitness:
    """Everything drawn and measured for one evaluation of H."""
    sampled_indices: np.ndarray
    reference: np.ndarray
    u_index: np.ndarray
    u: np.ndarray
    w_index: np.ndarray
    w: np.ndarray
    H: float

    @property
    def m(self) -> int:
        return len(self.sampled_indices)


def sample_without_replacement(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Partial Fisher-Yates shuffle; returns ``m`` distinct indices in draw order."""
    if not 1 <= m <= n:
        raise ValueError(f"cannot draw {m} of {n} items without replacement")
    pool = np.arange(n)
    for i in range(m):
        j = int(rng.integers(i, n))
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:m].copy()


def generate_reference(x: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """``m`` points uniform in the per-column bounding box of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] == 0:
        raise ValueError("cannot build a reference set for an empty dataset")
    lo = x.min(axis=0)
    hi = x.max(axis=0)
    return lo + (hi - lo) * rng.random((m, x.shape[1]))


def _ratio(su: float, sw: float) -> float:
    total = su + sw
    return 0.5 if total == 0 else su / total


def hopkins_statistic(x: np.ndarray, cfg: HopkinsConfig | None = None,
                      rng: np.random.Generator | int | None = None) -> HopkinsWitness:
    """Draw a sample and reference set and evaluate H on ``x`` (rows are points).

    Draw order is fixed: sample indices first, then the reference matrix.
    """
    cfg = cfg or HopkinsConfig()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("Hopkins statistic needs at least 2 data points")
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = make_rng(0 if rng is None else int(rng))
    _tick()
    n = x.shape[0]
    m = min(cfg.sample_size(n), n)
    idx = sample_without_replacement(n, m, rng)
    ref = generate_reference(x, m, rng)
    u_idx, u = nearest_neighbors(cfg.metric, ref, x)
    w_idx, w = nearest_neighbors(cfg.metric, x[idx], x, exclude=idx)
    return HopkinsWitness(idx, ref, u_idx, u, w_idx, w, _ratio(u.sum(), w.sum()))


def hopkins_from_assignment(x: np.ndarray, witness: HopkinsWitness,
                            metric: Metric = CHEBYSHEV) -> float:
    """Re-evaluate H on ``x`` keeping the witness's samples, reference and NN pairs."""
    idx = witness.sampled_indices
    u = metric.rowwise(witness.reference, x[witness.u_index])
    w = metric.rowwise(x[idx], x[witness.w_index])
    return _ratio(u.sum(), w.sum())


def hopkins_node(tape: Tape, x: int, witness: HopkinsWitness,
                 metric: Metric = CHEBYSHEV) -> int:
    """Record H on ``tape`` as a function of node ``x`` with a frozen assignment.

    The reference points are constants; gradients reach the nearest rows of
    ``x`` through each u distance, and both the sampled row and its
    neighbour through each w distance.
    """
    xv = tape.value(x)
    idx, ui, wi = witness.sampled_indices, witness.u_index, witness.w_index
    u = metric.rowwise(witness.reference, xv[ui])
    w = metric.rowwise(xv[idx], xv[wi])
    su, sw = u.sum(), w.sum()
    h = _ratio(su, sw)

    def vjp(g):
        gx = np.zeros_like(xv)
        total = su + sw
        if total == 0:
            return (gx,)
        dh_du = g[0, 0] * sw / total ** 2
        dh_dw = -g[0, 0] * su / total ** 2
        _, gu = metric.rowwise_grad(witness.reference, xv[ui])
        np.add.at(gx, ui, dh_du * gu)
        ga, gb = metric.rowwise_grad(xv[idx], xv[wi])
        np.add.at(gx, idx, dh_dw * ga)
        np.add.at(gx, wi, dh_dw * gb)
        return (gx,)

    return tape.record("hopkins", np.array([[h]]), (x,), vjp)


def hopkins_loss(tape: Tape, x: int, cfg: HopkinsConfig,
                 rng: np.random.Generator) -> tuple[int, HopkinsWitness]:
    """``|H - target|`` on the rows of node ``x``; returns the loss node and the witness."""
    xv = tape.value(x)
    if xv.shape[0] < 2:
        raise ValueError("Hopkins loss needs at least 2 rows")
    witness = hopkins_statistic(xv, cfg, rng)
    h = hopkins_node(tape, x, witness, cfg.metric)
    loss = tape.abs(tape.add_scalar(h, -cfg.target))
    return loss, witness
