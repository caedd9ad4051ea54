"""One-parameter families of point maps with Phi(0, .) = id."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm

from .spectral import CfsPoint

TAU_MATCH = 1e-12


class TauRangeError(ValueError):
    pass


class Variation:
    tau_max: float = 1.0
    # tau values where the map is exact; None for continuous families
    exact_taus: tuple | None = None

    def apply(self, i: int, x, tau: float):
        raise NotImplementedError

    def rate(self) -> float:
        """Rough speed of the flow, used only to size tolerances."""
        return 1.0

    def _check(self, tau):
        if abs(tau) > self.tau_max * (1 + 1e-12):
            raise TauRangeError(f"|tau|={abs(tau)} exceeds tau_max={self.tau_max}")


@dataclass(eq=False)
class UnitaryConjugation(Variation):
    """x -> U x U^{-1} with U = exp(i tau A); acts on psi as psi U^{-1}."""

    generator: np.ndarray
    tau_max: float = 1.0

    def __post_init__(self):
        a = np.array(self.generator, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("generator must be square")
        if not np.allclose(a, a.conj().T, atol=1e-12):
            raise ValueError("generator must be Hermitian")
        self.generator = 0.5 * (a + a.conj().T)
        self._cache = {}

    def unitary(self, tau: float) -> np.ndarray:
        key = float(tau)
        if key not in self._cache:
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = expm(1j * tau * self.generator)
        return self._cache[key]

    def apply(self, i, x: CfsPoint, tau: float) -> CfsPoint:
        self._check(tau)
        if tau == 0:
            return x
        return CfsPoint(x.psi @ self.unitary(-tau))

    def rate(self) -> float:
        return float(np.linalg.norm(self.generator, 2))

    def is_central(self, tol: float = 1e-14) -> bool:
        a = self.generator
        c = np.trace(a) / a.shape[0]
        return bool(np.max(np.abs(a - c * np.eye(a.shape[0]))) <= tol)


@dataclass(eq=False)
class PointFlow(Variation):
    """Per-atom paths, either a callable ``path(i, x, tau)`` or a tau table.

    With a table, ``points[i][k]`` is the image of atom i at ``taus[k]``.
    Between table entries psi (or coordinates) are interpolated linearly;
    label points can only be evaluated on the table.
    """

    taus: Sequence[float] | None = None
    points: Sequence[Sequence] | None = None
    path: Callable | None = None
    tau_max: float = 1.0
    flow_on_measure: bool = True

    def __post_init__(self):
        if self.path is None:
            if self.taus is None or self.points is None:
                raise ValueError("PointFlow needs a path callable or a tau table")
            taus = np.asarray(self.taus, dtype=float)
            order = np.argsort(taus)
            self.taus = taus[order]
            self.points = [[row[k] for k in order] for row in self.points]
            if not np.any(np.abs(self.taus) <= TAU_MATCH):
                raise ValueError("tau table must contain tau = 0")
            self.exact_taus = tuple(float(t) for t in self.taus)
            self.tau_max = float(np.max(np.abs(self.taus)))

    def apply(self, i, x, tau: float):
        self._check(tau)
        if self.path is not None:
            return x if tau == 0 else self.path(i, x, tau)
        row = self.points[i]
        k = int(np.argmin(np.abs(self.taus - tau)))
        if abs(self.taus[k] - tau) <= TAU_MATCH:
            return x if abs(self.taus[k]) <= TAU_MATCH else row[k]
        hi = int(np.searchsorted(self.taus, tau))
        lo = hi - 1
        t = (tau - self.taus[lo]) / (self.taus[hi] - self.taus[lo])
        a, b = row[lo], row[hi]
        if isinstance(a, CfsPoint):
            return CfsPoint((1 - t) * a.psi + t * b.psi)
        if np.ndim(a) == 0:
            raise TauRangeError("label points are only defined on the tau table")
        return (1 - t) * np.asarray(a, dtype=float) + t * np.asarray(b, dtype=float)

    @classmethod
    def permutation(cls, points, perm, step: float = 1.0, reach: int = 2):
        """Atom i moves to atom perm^k(i) at tau = k*step, |k| <= reach."""
        perm = np.asarray(perm, dtype=int)
        if sorted(perm.tolist()) != list(range(len(points))):
            raise ValueError("perm must be a permutation of the atoms")
        inv = np.argsort(perm)
        taus, rows = [], [[] for _ in points]
        for k in range(-reach, reach + 1):
            taus.append(k * step)
            for i in range(len(points)):
                j = i
                for _ in range(abs(k)):
                    j = perm[j] if k > 0 else inv[j]
                rows[i].append(points[j])
        return cls(taus=taus, points=rows)


@dataclass(eq=False)
class Composite(Variation):
    """Apply the parts in order: the last one acts last."""

    parts: list = field(default_factory=list)

    def __post_init__(self):
        if not self.parts:
            raise ValueError("composite variation needs at least one part")
        self.tau_max = min(p.tau_max for p in self.parts)
        exact = [set(p.exact_taus) for p in self.parts if p.exact_taus is not None]
        self.exact_taus = tuple(sorted(set.intersection(*exact))) if exact else None

    def apply(self, i, x, tau):
        self._check(tau)
        for p in self.parts:
            x = p.apply(i, x, tau)
        return x

    def rate(self) -> float:
        return float(sum(p.rate() for p in self.parts))


class Identity(Variation):
    tau_max = 1.0

    def apply(self, i, x, tau):
        self._check(tau)
        return x

    def rate(self) -> float:
        return 0.0


def random_hermitian(f: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    z = rng.standard_normal((f, f)) + 1j * rng.standard_normal((f, f))
    h = 0.5 * (z + z.conj().T)
    return scale * h / np.linalg.norm(h, 2)
