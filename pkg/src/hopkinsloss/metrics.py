"""Distance metrics and exact nearest-neighbour queries.

Each metric knows how to compute a full distance matrix, paired (row-wise)
distances, and the gradient of paired distances w.r.t. both arguments. Ties
in nearest-neighbour search go to the lowest row index.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

# cap on elements of the temporary query-by-set distance block
_BLOCK_ELEMS = 1 << 22


class Metric:
    name = "metric"
    _cdist = None

    def pairwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return cdist(a, b, self._cdist)

    def rowwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def rowwise_grad(self, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __eq__(self, other):
        return type(self) is type(other)

    def __hash__(self):
        return hash(self.name)


class Chebyshev(Metric):
    """L-infinity: largest absolute coordinate difference."""
    name = "chebyshev"
    _cdist = "chebyshev"

    def rowwise(self, a, b):
        return np.abs(a - b).max(axis=1)

    def rowwise_grad(self, a, b):
        diff = a - b
        j = np.abs(diff).argmax(axis=1)  # first maximiser
        rows = np.arange(a.shape[0])
        ga = np.zeros_like(a)
        ga[rows, j] = np.sign(diff[rows, j])
        return ga, -ga


class Euclidean(Metric):
    name = "euclidean"
    _cdist = "euclidean"

    @staticmethod
    def _norms(diff):
        # scale by the largest entry so tiny differences do not underflow when squared
        top = np.abs(diff).max(axis=1, keepdims=True)
        unit = np.divide(diff, top, out=np.zeros_like(diff), where=top > 0)
        return top * np.sqrt((unit ** 2).sum(axis=1, keepdims=True))

    def rowwise(self, a, b):
        return self._norms(a - b)[:, 0]

    def rowwise_grad(self, a, b):
        diff = a - b
        r = self._norms(diff)
        ga = np.divide(diff, r, out=np.zeros_like(diff), where=r > 0)
        return ga, -ga


class Manhattan(Metric):
    name = "manhattan"
    _cdist = "cityblock"

    def rowwise(self, a, b):
        return np.abs(a - b).sum(axis=1)

    def rowwise_grad(self, a, b):
        ga = np.sign(a - b)
        return ga, -ga


class Cosine(Metric):
    """``1 - cos(angle)``; a zero vector is maximally dissimilar (distance 1)
    to anything except an identical zero vector."""
    name = "cosine"

    @staticmethod
    def _finish(dot, na, nb, same):
        denom = na * nb
        d = np.where(denom > 0, 1.0 - dot / np.where(denom > 0, denom, 1.0), 1.0)
        d = np.clip(d, 0.0, 2.0)
        return np.where(same, 0.0, d)

    def pairwise(self, a, b):
        na = np.linalg.norm(a, axis=1)[:, None]
        nb = np.linalg.norm(b, axis=1)[None, :]
        same = (na == 0) & (nb == 0)
        return self._finish(a @ b.T, na, nb, same)

    def rowwise(self, a, b):
        na = np.linalg.norm(a, axis=1)
        nb = np.linalg.norm(b, axis=1)
        same = np.all(a == b, axis=1)
        return self._finish((a * b).sum(axis=1), na, nb, same)

    def rowwise_grad(self, a, b):
        na = np.linalg.norm(a, axis=1, keepdims=True)
        nb = np.linalg.norm(b, axis=1, keepdims=True)
        ok = (na > 0) & (nb > 0)
        na_s = np.where(ok, na, 1.0)
        nb_s = np.where(ok, nb, 1.0)
        cos = (a * b).sum(axis=1, keepdims=True) / (na_s * nb_s)
        ga = -(b / (na_s * nb_s) - cos * a / na_s ** 2)
        gb = -(a / (na_s * nb_s) - cos * b / nb_s ** 2)
        return np.where(ok, ga, 0.0), np.where(ok, gb, 0.0)


class Mahalanobis(Metric):
    """``sqrt((a-b)^T VI (a-b))`` for a symmetric positive-definite ``VI``."""
    name = "mahalanobis"

    def __init__(self, inv_cov):
        vi = np.asarray(inv_cov, dtype=np.float64)
        if vi.ndim != 2 or vi.shape[0] != vi.shape[1]:
            raise ValueError("inverse covariance must be square")
        if not np.allclose(vi, vi.T, rtol=1e-10, atol=1e-12):
            raise ValueError("inverse covariance must be symmetric")
        try:
            np.linalg.cholesky(vi)
        except np.linalg.LinAlgError:
            raise ValueError("inverse covariance must be positive definite") from None
        self.inv_cov = vi

    @classmethod
    def from_data(cls, x: np.ndarray) -> "Mahalanobis":
        """Ridge-regularised inverse of the sample covariance of ``x``."""
        x = np.asarray(x, dtype=np.float64)
        d = x.shape[1]
        cov = np.atleast_2d(np.cov(x, rowvar=False)) if x.shape[0] > 1 else np.zeros((d, d))
        ridge = 1e-6 * np.trace(cov) / d
        if ridge <= 0:
            ridge = 1e-6
        vi = np.linalg.inv(cov + ridge * np.eye(d))
        return cls(0.5 * (vi + vi.T))

    def pairwise(self, a, b):
        return cdist(a, b, "mahalanobis", VI=self.inv_cov)

    def rowwise(self, a, b):
        diff = a - b
        return np.sqrt(np.maximum(((diff @ self.inv_cov) * diff).sum(axis=1), 0.0))

    def rowwise_grad(self, a, b):
        diff = a - b
        proj = diff @ self.inv_cov
        r = np.sqrt(np.maximum((proj * diff).sum(axis=1, keepdims=True), 0.0))
        ga = np.divide(proj, r, out=np.zeros_like(proj), where=r > 0)
        return ga, -ga

    def __eq__(self, other):
        return isinstance(other, Mahalanobis) and np.array_equal(self.inv_cov, other.inv_cov)

    __hash__ = Metric.__hash__


CHEBYSHEV = Chebyshev()
METRIC_NAMES = ("chebyshev", "euclidean", "manhattan", "cosine", "mahalanobis")


def get_metric(name: str | Metric, data: np.ndarray | None = None) -> Metric:
    """Look up a metric by name. Mahalanobis needs ``data`` to estimate its covariance."""
    if isinstance(name, Metric):
        return name
    key = name.lower()
    if key == "chebyshev":
        return CHEBYSHEV
    if key == "euclidean":
        return Euclidean()
    if key in ("manhattan", "cityblock"):
        return Manhattan()
    if key == "cosine":
        return Cosine()
    if key == "mahalanobis":
        if data is None:
            raise ValueError("mahalanobis metric needs data to estimate a covariance")
        return Mahalanobis.from_data(data)
    raise ValueError(f"unknown metric {name!r}; choose from {', '.join(METRIC_NAMES)}")


def _point(p) -> np.ndarray:
    return np.asarray(p, dtype=np.float64).reshape(1, -1)


def distance(metric: Metric, a, b) -> float:
    a, b = _point(a), _point(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return float(metric.rowwise(a, b)[0])


def nearest_in_set(metric: Metric, query, points: np.ndarray,
                   exclude: int | None = None) -> tuple[int, float]:
    """Brute-force nearest row of ``points`` to ``query``, optionally skipping one row."""
    points = np.asarray(points, dtype=np.float64)
    q = _point(query)
    n = points.shape[0]
    if n == 0 or (exclude is not None and n < 2):
        raise ValueError("no candidate rows left to search")
    if q.shape[1] != points.shape[1]:
        raise ValueError(f"dimension mismatch: {q.shape[1]} vs {points.shape[1]}")
    d = metric.rowwise(np.repeat(q, n, axis=0), points)
    if exclude is not None:
        d[exclude] = np.inf
    i = int(np.argmin(d))
    return i, float(d[i])


def nearest_neighbors(metric: Metric, queries: np.ndarray, points: np.ndarray,
                      exclude: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`nearest_in_set` for many queries.

    ``exclude[i]`` is the row of ``points`` that query ``i`` may not match.
    Returned distances are recomputed pairwise with ``metric.rowwise`` so they
    agree bit-for-bit with what the differentiable path sees.
    """
    queries = np.asarray(queries, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    m, n = queries.shape[0], points.shape[0]
    if n == 0 or (exclude is not None and n < 2):
        raise ValueError("no candidate rows left to search")
    if queries.shape[1] != points.shape[1]:
        raise ValueError(f"dimension mismatch: {queries.shape[1]} vs {points.shape[1]}")
    idx = np.empty(m, dtype=np.int64)
    step = max(1, _BLOCK_ELEMS // max(n, 1))
    for s in range(0, m, step):
        block = metric.pairwise(queries[s:s + step], points)
        if exclude is not None:
            block[np.arange(block.shape[0]), exclude[s:s + step]] = np.inf
        idx[s:s + step] = block.argmin(axis=1)
    dist = metric.rowwise(queries, points[idx])
    return idx, dist


def chebyshev_subgradient(a, b) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of ``max_i |a_i - b_i|`` w.r.t. ``a`` and ``b``.

    Only the lowest-index coordinate attaining the maximum gets a nonzero
    entry; identical points give zero gradients.
    """
    a, b = _point(a), _point(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    ga, gb = CHEBYSHEV.rowwise_grad(a, b)
    return ga[0], gb[0]
