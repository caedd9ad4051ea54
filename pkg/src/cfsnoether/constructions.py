"""Hand-built systems with known structure, used by demos and tests."""
from __future__ import annotations

import numpy as np

from .measure import DiscreteMeasure, diagonal_kernel
from .spectral import CfsPoint


def random_point(n: int, f: int, rng: np.random.Generator, scale: float = 1.0) -> CfsPoint:
    z = rng.standard_normal((2 * n, f)) + 1j * rng.standard_normal((2 * n, f))
    return CfsPoint(scale * z / np.sqrt(2 * f))


def random_system(rng: np.random.Generator, n: int, f: int, atoms: int) -> DiscreteMeasure:
    pts = [random_point(n, f, rng) for _ in range(atoms)]
    return DiscreteMeasure(pts, rng.uniform(0.1, 1.0, atoms))


def block_system(block_psi, copies: int, extra: int = 0, volume: float = 1.0) -> DiscreteMeasure:
    """Copies of one local wave evaluation matrix placed in orthogonal blocks.

    Atom i has psi equal to ``block_psi`` on the i-th block of columns and
    zero elsewhere.  Distinct atoms have vanishing Lagrangian, all atoms share
    one spectrum, so ell and tr are constant on the support, and ell is
    stationary along every unitary orbit through an atom.
    """
    block_psi = np.asarray(block_psi, dtype=complex)
    rows, b = block_psi.shape
    f = copies * b + extra
    pts = []
    for i in range(copies):
        psi = np.zeros((rows, f), dtype=complex)
        psi[:, i * b:(i + 1) * b] = block_psi
        pts.append(CfsPoint(psi))
    return DiscreteMeasure(pts, np.full(copies, volume / copies))


def default_block(n: int = 1, b: int = 2) -> np.ndarray:
    """A fixed block with distinct eigenvalue moduli and nonzero trace."""
    rows = 2 * n
    psi = np.zeros((rows, b), dtype=complex)
    for r in range(rows):
        for c in range(b):
            psi[r, c] = (1.0 + 0.3 * r - 0.2 * c) * np.exp(0.7j * (r + 2 * c))
    # lift the negative-signature rows so the trace is clearly nonzero
    psi[n:] *= 0.6
    return psi


def shift_generator(copies: int, b: int, extra: int = 0) -> np.ndarray:
    """Hermitian A with exp(iA) mapping block i onto block i+1 (cyclically)."""
    k = np.arange(copies)
    theta = 2 * np.pi * k / copies
    theta = np.where(theta > np.pi, theta - 2 * np.pi, theta)
    dft = np.exp(2j * np.pi * np.outer(k, k) / copies) / np.sqrt(copies)
    # shift e_i -> e_{i+1} has eigenvectors dft[:, k] with eigenvalue exp(-2 pi i k / N)
    a_shift = dft @ np.diag(-theta) @ dft.conj().T
    a = np.kron(a_shift, np.eye(b))
    if extra:
        out = np.zeros((copies * b + extra,) * 2, dtype=complex)
        out[: copies * b, : copies * b] = a
        a = out
    return 0.5 * (a + a.conj().T)


def diagonal_minimizer(m: int) -> DiscreteMeasure:
    """Uniform weights on the diagonal kernel: the global minimizer, S = 1/m."""
    return DiscreteMeasure(list(range(m)), np.full(m, 1.0 / m), diagonal_kernel(m))


def perturbed(m: DiscreteMeasure, eps: float, rng: np.random.Generator) -> DiscreteMeasure:
    """Move every psi and weight by a relative amount of order eps."""
    pts = []
    for p in m.points:
        z = rng.standard_normal(p.psi.shape) + 1j * rng.standard_normal(p.psi.shape)
        pts.append(CfsPoint(p.psi + eps * np.linalg.norm(p.psi) * z / np.linalg.norm(z)))
    w = m.weights * (1 + eps * rng.uniform(-1, 1, len(m.weights)))
    w *= m.total_volume / w.sum()
    return DiscreteMeasure(pts, w)
