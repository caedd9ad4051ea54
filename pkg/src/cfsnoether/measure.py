"""Atomic universal measures, regions and the compact setting."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .spectral import CfsPoint, lagrangian_matrix, pair_matrices

MERGE_TOL = 1e-9


@dataclass(frozen=True)
class CompactKernel:
    """A symmetric nonnegative kernel on an abstract point set F.

    ``evaluate(x, y)`` gives the Lagrangian, ``sampler(rng, k)`` draws k probe
    points of F and ``metric`` measures point distance (Euclidean on the
    coordinate arrays by default).
    """

    evaluate: Callable[[Any, Any], float]
    sampler: Callable[[np.random.Generator, int], list] | None = None
    metric: Callable[[Any, Any], float] | None = None
    name: str = "custom"

    def distance(self, x, y) -> float:
        if self.metric is not None:
            return float(self.metric(x, y))
        return float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))

    def matrix(self, points_a, points_b=None) -> np.ndarray:
        if points_b is None:
            points_b = points_a
        out = np.empty((len(points_a), len(points_b)))
        for i, x in enumerate(points_a):
            for j, y in enumerate(points_b):
                out[i, j] = self.evaluate(x, y)
        return out


def diagonal_kernel(m: int) -> CompactKernel:
    """L(i, j) = delta_ij on the labels 0..m-1; probes are all of F."""
    return CompactKernel(
        evaluate=lambda x, y: 1.0 if int(x) == int(y) else 0.0,
        sampler=lambda rng, k: list(range(m)),
        metric=lambda x, y: 0.0 if int(x) == int(y) else 1.0,
        name=f"diagonal:{m}",
    )


def constant_kernel(value: float = 1.0, labels: int = 1) -> CompactKernel:
    return CompactKernel(
        evaluate=lambda x, y: value,
        sampler=lambda rng, k: list(range(labels)),
        metric=lambda x, y: 0.0 if int(x) == int(y) else 1.0,
        name=f"constant:{value}",
    )


def matrix_kernel(mat) -> CompactKernel:
    """Kernel given by a symmetric matrix on the labels 0..m-1."""
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("kernel matrix must be square")
    if not np.allclose(mat, mat.T, atol=0, rtol=0) or np.any(mat < 0):
        raise ValueError("kernel matrix must be symmetric and nonnegative")
    m = mat.shape[0]
    return CompactKernel(
        evaluate=lambda x, y: float(mat[int(x), int(y)]),
        sampler=lambda rng, k: list(range(m)),
        metric=lambda x, y: 0.0 if int(x) == int(y) else 1.0,
        name="matrix",
    )


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted finite point configuration.

    ``kernel`` is None for causal fermion systems (points are CfsPoint) and a
    CompactKernel in the compact setting.
    """

    points: tuple
    weights: np.ndarray
    kernel: CompactKernel | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if len(w) != len(self.points):
            raise ValueError("one weight per point required")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "points", tuple(self.points))
        object.__setattr__(self, "weights", w)
        if self.kernel is None:
            for p in self.points:
                if not isinstance(p, CfsPoint):
                    raise TypeError("CFS measures need CfsPoint atoms")
            if self.points:
                shape = self.points[0].psi.shape
                if any(p.psi.shape != shape for p in self.points):
                    raise ValueError("all points must share (2n, f)")

    @property
    def mode(self) -> str:
        return "cfs" if self.kernel is None else "compact"

    @property
    def total_volume(self) -> float:
        return float(np.sum(self.weights))

    def __len__(self):
        return len(self.points)

    @property
    def support(self) -> list[int]:
        return [i for i, w in enumerate(self.weights) if w > 0]

    @property
    def spin_dim(self) -> int:
        return self.points[0].spin_dim

    @property
    def hilbert_dim(self) -> int:
        return self.points[0].hilbert_dim

    def with_weights(self, weights) -> "DiscreteMeasure":
        return DiscreteMeasure(self.points, weights, self.kernel)

    def with_points(self, points) -> "DiscreteMeasure":
        return DiscreteMeasure(points, self.weights, self.kernel)

    def scaled(self, c: float) -> "DiscreteMeasure":
        return self.with_weights(c * self.weights)

    def permuted(self, perm) -> "DiscreteMeasure":
        perm = list(perm)
        return DiscreteMeasure([self.points[i] for i in perm], self.weights[perm], self.kernel)

    # pair evaluations ----------------------------------------------------
    def lag(self, xs, ys, kappa: float = 0.0) -> np.ndarray:
        """Matrix of L_kappa over two point lists."""
        if self.kernel is not None:
            return self.kernel.matrix(list(xs), list(ys))
        return lagrangian_matrix(list(xs), list(ys), kappa)

    def pair_tables(self):
        """(L, |xy|^2) on the atoms, cached."""
        if "pairs" not in self._cache:
            if self.kernel is not None:
                mat = self.kernel.matrix(self.points)
                self._cache["pairs"] = (mat, np.zeros_like(mat))
            else:
                self._cache["pairs"] = pair_matrices(self.points, self.points)
        return self._cache["pairs"]

    def traces(self) -> np.ndarray:
        if self.kernel is not None:
            return np.zeros(len(self.points))
        return np.array([p.trace() for p in self.points])

    def trace_of(self, x) -> float:
        return 0.0 if self.kernel is not None else x.trace()

    def distance(self, x, y) -> float:
        if self.kernel is not None:
            return self.kernel.distance(x, y)
        return float(np.linalg.norm(x.operator - y.operator, 2))


@dataclass(frozen=True)
class Region:
    indices: tuple

    def __init__(self, indices: Sequence[int]):
        object.__setattr__(self, "indices", tuple(sorted(set(int(i) for i in indices))))

    def validate(self, m: DiscreteMeasure) -> "Region":
        supp = set(m.support)
        bad = [i for i in self.indices if i not in supp]
        if bad:
            raise ValueError(f"region indices outside the support: {bad}")
        return self

    def complement(self, m: DiscreteMeasure) -> list[int]:
        inside = set(self.indices)
        return [i for i in m.support if i not in inside]


def pushforward(m: DiscreteMeasure, point_map, tol: float = MERGE_TOL) -> DiscreteMeasure:
    """Image measure under ``point_map(index, point)``; close images merge."""
    pts, wts = [], []
    for i in m.support:
        y = point_map(i, m.points[i])
        for k, z in enumerate(pts):
            if m.distance(y, z) <= tol:
                wts[k] += m.weights[i]
                break
        else:
            pts.append(y)
            wts.append(m.weights[i])
    return DiscreteMeasure(pts, wts, m.kernel)


def measure_equal(m1: DiscreteMeasure, m2: DiscreteMeasure, tol: float = MERGE_TOL) -> bool:
    """Weighted point sets agree under greedy nearest matching."""
    s1, s2 = m1.support, m2.support
    if len(s1) != len(s2):
        return False
    free = list(s2)
    for i in s1:
        if not free:
            return False
        dists = [m1.distance(m1.points[i], m2.points[j]) for j in free]
        k = int(np.argmin(dists))
        j = free[k]
        if dists[k] > tol or abs(m1.weights[i] - m2.weights[j]) > tol:
            return False
        free.pop(k)
    return True
