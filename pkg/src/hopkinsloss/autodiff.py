"""Dense float64 matrix ops and a small reverse-mode autodiff tape.

Every value on a :class:`Tape` is a 2-D ``float64`` array; scalars are 1x1.
Nodes are plain integer ids, appended in evaluation order, so the backward
pass is a single sweep over the node list in reverse.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT2PI = 0.3989422804014327


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    """Seeded PCG64 generator; the only source of randomness in the package."""
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rngs(seed: int, count: int) -> list[np.random.Generator]:
    """Independent, reproducible child streams derived from one seed."""
    return [make_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def as_matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    elif a.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


# ---------------------------------------------------------------------------
# Plain (untaped) operations
# ---------------------------------------------------------------------------

def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: {a.shape} @ {b.shape}")
    return a @ b


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact GELU, ``0.5 * x * (1 + erf(x / sqrt(2)))``."""
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_grad(x: np.ndarray, cdf: np.ndarray | None = None) -> np.ndarray:
    if cdf is None:
        cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    return cdf + x * _INV_SQRT2PI * np.exp(-0.5 * x * x)


def softmax_rows(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax_rows(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _check_labels(logits: np.ndarray, labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != logits.shape[0]:
        raise DimensionError(
            f"cross_entropy: {logits.shape[0]} logit rows but {labels.shape[0]} labels")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise IndexError(f"label out of range [0, {logits.shape[1]})")
    return labels


def cross_entropy(logits: np.ndarray, labels) -> float:
    """Mean negative log-likelihood of ``labels`` under row-softmax of ``logits``."""
    labels = _check_labels(logits, labels)
    lsm = log_softmax_rows(logits)
    return float(-lsm[np.arange(labels.size), labels].mean())


def mse(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise DimensionError(f"mse: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout multiplier: 0 with probability ``rate``, else ``1/(1-rate)``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    keep = rng.random(shape, dtype=np.float32) >= np.float32(rate)
    return keep / (1.0 - rate)


def dropout(x: np.ndarray, rate: float, train: bool, rng: np.random.Generator | None = None):
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x
    return x * dropout_mask(x.shape, rate, rng)


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------

VJP = Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Node:
    op: str
    value: np.ndarray
    parents: tuple[int, ...] = ()
    vjp: VJP | None = None
    requires_grad: bool = True


class Tape:
    """Append-only record of operations for one forward/backward pass.

    Not thread-safe; build one tape per minibatch step.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def __len__(self):
        return len(self.nodes)

    def value(self, i: int) -> np.ndarray:
        return self.nodes[i].value

    def record(self, op: str, value: np.ndarray, parents: Sequence[int] = (),
               vjp: VJP | None = None) -> int:
        """Append a node. ``vjp(g)`` must return one gradient (or None) per parent."""
        for p in parents:
            if not 0 <= p < len(self.nodes):
                raise IndexError(f"unknown parent node {p}")
        req = op == "leaf" or any(self.nodes[p].requires_grad for p in parents)
        self.nodes.append(Node(op, value, tuple(parents), vjp, req))
        return len(self.nodes) - 1

    def leaf(self, value) -> int:
        return self.record("leaf", as_matrix(value))

    def constant(self, value) -> int:
        """A value excluded from differentiation (its gradient stays zero)."""
        return self.record("const", as_matrix(value))

    # -- linear algebra ---------------------------------------------------
    def matmul(self, a: int, b: int) -> int:
        av, bv = self.value(a), self.value(b)
        out = matmul(av, bv)
        need_a = self.nodes[a].requires_grad
        need_b = self.nodes[b].requires_grad
        return self.record("matmul", out, (a, b), lambda g: (
            g @ bv.T if need_a else None, av.T @ g if need_b else None))

    def add(self, a: int, b: int) -> int:
        """Elementwise sum; ``b`` may be a 1xC row broadcast over rows of ``a``."""
        av, bv = self.value(a), self.value(b)
        if av.shape == bv.shape:
            return self.record("add", av + bv, (a, b), lambda g: (g, g))
        if bv.shape[0] == 1 and bv.shape[1] == av.shape[1]:
            return self.record("add_row", av + bv, (a, b),
                               lambda g: (g, g.sum(axis=0, keepdims=True)))
        raise DimensionError(f"add: {av.shape} + {bv.shape}")

    def sub(self, a: int, b: int) -> int:
        av, bv = self.value(a), self.value(b)
        if av.shape != bv.shape:
            raise DimensionError(f"sub: {av.shape} - {bv.shape}")
        return self.record("sub", av - bv, (a, b), lambda g: (g, -g))

    def affine(self, x: int, w: int, b: int) -> int:
        return self.add(self.matmul(x, w), b)

    def scale(self, a: int, c: float) -> int:
        c = float(c)
        return self.record("scale", c * self.value(a), (a,), lambda g: (c * g,))

    def add_scalar(self, a: int, c: float) -> int:
        return self.record("add_scalar", self.value(a) + float(c), (a,), lambda g: (g,))

    def sum(self, a: int) -> int:
        av = self.value(a)
        return self.record("sum", np.array([[av.sum()]]), (a,),
                           lambda g: (np.full(av.shape, g[0, 0]),))

    def abs(self, a: int) -> int:
        # left derivative at 0: d|x|/dx = -1
        av = self.value(a)
        s = np.where(av > 0, 1.0, -1.0)
        return self.record("abs", np.abs(av), (a,), lambda g: (g * s,))

    # -- network pieces ---------------------------------------------------
    def gelu(self, a: int) -> int:
        av = self.value(a)
        cdf = 0.5 * (1.0 + erf(av * _INV_SQRT2))
        return self.record("gelu", av * cdf, (a,), lambda g: (g * gelu_grad(av, cdf),))

    def dropout(self, a: int, rate: float, train: bool,
                rng: np.random.Generator | None = None) -> int:
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        if not train or rate == 0.0:
            return a
        mask = dropout_mask(self.value(a).shape, rate, rng)
        return self.record("dropout", self.value(a) * mask, (a,), lambda g: (g * mask,))

    def softmax_rows(self, a: int) -> int:
        s = softmax_rows(self.value(a))

        def vjp(g):
            return (s * (g - (g * s).sum(axis=1, keepdims=True)),)
        return self.record("softmax", s, (a,), vjp)

    def cross_entropy(self, logits: int, labels) -> int:
        lv = self.value(logits)
        labels = _check_labels(lv, labels)
        n = labels.size
        lsm = log_softmax_rows(lv)
        loss = -lsm[np.arange(n), labels].mean()

        def vjp(g):
            d = np.exp(lsm)
            d[np.arange(n), labels] -= 1.0
            return (d * (g[0, 0] / n),)
        return self.record("cross_entropy", np.array([[loss]]), (logits,), vjp)

    def mse(self, a: int, b: int) -> int:
        av, bv = self.value(a), self.value(b)
        if av.shape != bv.shape:
            raise DimensionError(f"mse: {av.shape} vs {bv.shape}")
        diff = av - bv
        loss = np.mean(diff ** 2)

        def vjp(g):
            d = diff * (2.0 * g[0, 0] / diff.size)
            return (d, -d)
        return self.record("mse", np.array([[loss]]), (a, b), vjp)

    def weighted_sum(self, terms: Sequence[tuple[float, int]]) -> int:
        """``sum(c * node)`` over same-shaped nodes."""
        ids = tuple(i for _, i in terms)
        coefs = [float(c) for c, _ in terms]
        shape = self.value(ids[0]).shape
        out = np.zeros(shape)
        for c, i in zip(coefs, ids):
            if self.value(i).shape != shape:
                raise DimensionError("weighted_sum: mismatched shapes")
            out = out + c * self.value(i)
        return self.record("weighted_sum", out, ids, lambda g: tuple(c * g for c in coefs))


def backward(tape: Tape, root: int) -> list[np.ndarray]:
    """Gradients of the scalar ``root`` w.r.t. every node on ``tape``.

    Returns a list indexed by node id; nodes that do not influence ``root``
    get zeros. Contributions along multiple paths add up.
    """
    if tape.value(root).shape != (1, 1):
        raise ValueError(f"backward root must be 1x1, got {tape.value(root).shape}")
    grads: list[np.ndarray | None] = [None] * len(tape.nodes)
    grads[root] = np.ones((1, 1))
    for i in range(root, -1, -1):
        g = grads[i]
        node = tape.nodes[i]
        if g is None or node.vjp is None or not node.requires_grad:
            continue
        for p, gp in zip(node.parents, node.vjp(g)):
            if gp is None or not tape.nodes[p].requires_grad:
                continue
            grads[p] = gp if grads[p] is None else grads[p] + gp
    return [np.zeros_like(n.value) if g is None else g
            for n, g in zip(tape.nodes, grads)]
