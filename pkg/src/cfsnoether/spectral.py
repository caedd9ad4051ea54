"""Closed chains, their spectra and the causal Lagrangian.

A point of F is stored through its wave evaluation matrix ``psi`` of shape
(2n, f).  The represented operator is ``x = -psi^H S psi`` with the spin
signature ``S = diag(+1 (n times), -1 (n times))``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

CLAMP_TOL = 1e-12


class EigenSolverError(RuntimeError):
    """Raised when the eigenvalue solver does not converge."""


def spin_signature(n: int) -> np.ndarray:
    return np.concatenate([np.ones(n), -np.ones(n)])


@dataclass(frozen=True, eq=False)
class CfsPoint:
    psi: np.ndarray

    def __post_init__(self):
        psi = np.array(self.psi, dtype=complex)
        if psi.ndim != 2 or psi.shape[0] % 2 or psi.shape[0] == 0:
            raise ValueError(f"psi must have shape (2n, f), got {psi.shape}")
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)

    @property
    def spin_dim(self) -> int:
        return self.psi.shape[0] // 2

    @property
    def hilbert_dim(self) -> int:
        return self.psi.shape[1]

    @cached_property
    def operator(self) -> np.ndarray:
        """The f x f Hermitian operator x."""
        s = spin_signature(self.spin_dim)
        x = -self.psi.conj().T @ (s[:, None] * self.psi)
        return 0.5 * (x + x.conj().T)

    def trace(self) -> float:
        # tr(x) = -tr(S psi psi^H)
        s = spin_signature(self.spin_dim)
        return float(-np.sum(s * np.sum(np.abs(self.psi) ** 2, axis=1)))

    def norm(self) -> float:
        return float(np.linalg.norm(self.operator, 2))

    def scaled(self, t: float) -> "CfsPoint":
        """The point t*x for t > 0."""
        return CfsPoint(np.sqrt(t) * self.psi)

    def __repr__(self):
        return f"CfsPoint(n={self.spin_dim}, f={self.hilbert_dim})"


def _check_pair(x: CfsPoint, y: CfsPoint):
    if x.psi.shape != y.psi.shape:
        raise ValueError(f"dimension mismatch: {x.psi.shape} vs {y.psi.shape}")


def kernel(x: CfsPoint, y: CfsPoint) -> np.ndarray:
    """P(x, y) = -psi(x) psi(y)^H S, a 2n x 2n matrix."""
    _check_pair(x, y)
    s = spin_signature(x.spin_dim)
    return -(x.psi @ y.psi.conj().T) * s[None, :]


def closed_chain(x: CfsPoint, y: CfsPoint) -> np.ndarray:
    return kernel(x, y) @ kernel(y, x)


def _eigvals(mats: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(mats)):
        raise EigenSolverError("non-finite entries in closed chain")
    try:
        return np.linalg.eigvals(mats)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(str(exc)) from exc


def nontrivial_eigenvalues(x: CfsPoint, y: CfsPoint) -> np.ndarray:
    """The 2n eigenvalues of the closed chain (zeros included)."""
    return _eigvals(closed_chain(x, y))


def spectral_weight(values) -> float:
    return float(np.sum(np.abs(np.asarray(values))))


def _lagrangian_from_eigs(eigs: np.ndarray, n: int):
    """Return (L, |xy|^2) along the last axis of ``eigs``."""
    mod = np.abs(eigs)
    sq = np.sum(mod ** 2, axis=-1)
    weight2 = np.sum(mod, axis=-1) ** 2
    lag = sq - weight2 / (2 * n)
    tiny = (lag < 0) & (np.abs(lag) < CLAMP_TOL * (weight2 + 1.0))
    lag = np.where(tiny, 0.0, lag)
    return lag, weight2


def lagrangian(x: CfsPoint, y: CfsPoint) -> float:
    lag, _ = _lagrangian_from_eigs(nontrivial_eigenvalues(x, y), x.spin_dim)
    return float(lag)


def weight_squared(x: CfsPoint, y: CfsPoint) -> float:
    """|xy|^2, the squared spectral weight of the product."""
    return spectral_weight(nontrivial_eigenvalues(x, y)) ** 2


def lagrangian_kappa(x: CfsPoint, y: CfsPoint, kappa: float = 0.0) -> float:
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    lag, w2 = _lagrangian_from_eigs(nontrivial_eigenvalues(x, y), x.spin_dim)
    return float(lag + kappa * w2)


def causal_classify(x: CfsPoint, y: CfsPoint, tol: float = 1e-12) -> str:
    if tol <= 0:
        raise ValueError("tol must be positive")
    return "timelike" if lagrangian(x, y) > tol else "spacelike"


def stack_psi(points) -> np.ndarray:
    psis = [p.psi for p in points]
    if not psis:
        return np.zeros((0, 2, 1), dtype=complex)
    shape = psis[0].shape
    for p in psis:
        if p.shape != shape:
            raise ValueError("all points must share (2n, f)")
    return np.stack(psis)


def pair_matrices(points_a, points_b):
    """Batched (L, |xy|^2) for all pairs; arrays of shape (len(a), len(b))."""
    pa, pb = stack_psi(points_a), stack_psi(points_b)
    na, nb = len(pa), len(pb)
    if na == 0 or nb == 0:
        return np.zeros((na, nb)), np.zeros((na, nb))
    if pa.shape[1:] != pb.shape[1:]:
        raise ValueError("dimension mismatch between point sets")
    n = pa.shape[1] // 2
    s = spin_signature(n)
    # P(x, y) for x in a, y in b and P(y, x)
    gram = np.einsum("aif,bjf->abij", pa, pb.conj())
    p_xy = -gram * s[None, None, None, :]
    p_yx = -np.conj(np.swapaxes(gram, -1, -2)) * s[None, None, None, :]
    chains = p_xy @ p_yx
    eigs = _eigvals(chains.reshape(-1, 2 * n, 2 * n)).reshape(na, nb, 2 * n)
    return _lagrangian_from_eigs(eigs, n)


def lagrangian_matrix(points_a, points_b=None, kappa: float = 0.0) -> np.ndarray:
    if points_b is None:
        points_b = points_a
    lag, w2 = pair_matrices(points_a, points_b)
    return lag + kappa * w2
