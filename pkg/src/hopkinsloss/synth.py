"""Synthetic point sets with known topology inside the unit hypercube."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .autodiff import make_rng

Kind = Literal["grid", "uniform", "clusters"]
MAX_CENTER_TRIES = 10_000
# extra entropy word so a dataset seed never replays the stream of make_rng(seed)
_STREAM_TAG = 0x53594E54


@dataclass(frozen=True)
class SynthSpec:
    kind: Kind
    n: int
    d: int
    seed: int = 0
    jitter: float = 0.1          # grid: fraction of the lattice spacing
    num_clusters: int = 5        # clusters
    spread: float = 0.02         # clusters: per-coordinate standard deviation
    labelled: bool = False

    def __post_init__(self):
        if self.kind not in ("grid", "uniform", "clusters"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be positive")
        if not 0.0 <= self.jitter < 0.5:
            raise ValueError("jitter must be in [0, 0.5) of the grid spacing")
        if self.kind == "clusters":
            if self.num_clusters < 1 or (self.labelled and self.num_clusters < 2):
                raise ValueError("labelled cluster data needs at least 2 clusters")
            if self.spread <= 0:
                raise ValueError("spread must be positive")


def grid_levels(n: int, d: int) -> list[int]:
    """Points per axis for a lattice of at most ``n`` points in ``d`` dimensions.

    Uses the largest ``q`` with ``q**d <= n``. When even ``2**d`` exceeds ``n``
    the first ``floor(log2 n)`` axes get two levels and the rest one.
    """
    q = max(1, int(np.floor(n ** (1.0 / d))))
    while (q + 1) ** d <= n:
        q += 1
    while q > 1 and q ** d > n:
        q -= 1
    if q >= 2:
        return [q] * d
    two = min(d, int(np.floor(np.log2(n)))) if n >= 2 else 0
    return [2] * two + [1] * (d - two)


def _grid(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    levels = grid_levels(spec.n, spec.d)
    axes = [np.linspace(0.0, 1.0, q) if q > 1 else np.array([0.5]) for q in levels]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
    # single-level axes borrow the spacing of the coarsest varying axis
    spacing = min((1.0 / (q - 1) for q in levels if q > 1), default=1.0)
    if spec.jitter > 0:
        pts = pts + rng.uniform(-spec.jitter * spacing, spec.jitter * spacing, pts.shape)
    return pts


def _centers(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    sep = 4.0 * spec.spread
    centers = []
    tries = 0
    while len(centers) < spec.num_clusters:
        if tries >= MAX_CENTER_TRIES:
            raise ValueError(
                f"could not place {spec.num_clusters} centres {sep:g} apart in "
                f"[0,1]^{spec.d}; use a smaller spread")
        tries += 1
        c = rng.random(spec.d)
        if all(np.abs(c - o).max() >= sep for o in centers):
            centers.append(c)
    return np.array(centers)


def generate(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray | None]:
    """Return ``(points, labels)``; labels are only produced for labelled clusters."""
    rng = make_rng(np.random.SeedSequence([spec.seed, _STREAM_TAG]))
    if spec.kind == "grid":
        return _grid(spec, rng), None
    if spec.kind == "uniform":
        return rng.random((spec.n, spec.d)), None
    centers = _centers(spec, rng)
    labels = np.arange(spec.n) % spec.num_clusters
    x = centers[labels] + rng.normal(0.0, spec.spread, (spec.n, spec.d))
    return x, (labels if spec.labelled else None)
