"""Dirac matrices and lower mass shell spinors.

Dirac representation, signature (+,-,-,-), spin product psi^H gamma0 phi.
"""
from __future__ import annotations

import numpy as np

SIGMA = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)

GAMMA0 = np.diag([1.0, 1.0, -1.0, -1.0]).astype(complex)
GAMMA = np.zeros((3, 4, 4), dtype=complex)
for _j in range(3):
    GAMMA[_j, :2, 2:] = SIGMA[_j]
    GAMMA[_j, 2:, :2] = -SIGMA[_j]
IDENTITY = np.eye(4, dtype=complex)


def slash(k) -> np.ndarray:
    """gamma^mu k_mu for contravariant k = (k0, k1, k2, k3); batches over leading axes."""
    k = np.asarray(k, dtype=float)
    out = k[..., 0, None, None] * GAMMA0
    out = out - np.einsum("...j,jab->...ab", k[..., 1:], GAMMA)
    return out


def spin_product(psi, phi) -> np.ndarray:
    """psi^H gamma0 phi along the last axis."""
    psi, phi = np.asarray(psi), np.asarray(phi)
    return np.einsum("...a,...a->...", psi.conj(), phi * np.diag(GAMMA0).real)


def omega(m, k_abs):
    return np.sqrt(np.asarray(m, dtype=float) ** 2 + np.asarray(k_abs, dtype=float) ** 2)


def lower_shell_momentum(m: float, kvec) -> np.ndarray:
    kvec = np.asarray(kvec, dtype=float)
    w = omega(m, np.linalg.norm(kvec, axis=-1))
    return np.concatenate([-w[..., None], kvec], axis=-1)


def lower_reference(polarization: int = 0) -> np.ndarray:
    """Unit spinor in the lower components (the rest-frame negative-energy states)."""
    if polarization not in (0, 1):
        raise ValueError("polarization must be 0 or 1")
    s = np.zeros(4, dtype=complex)
    s[2 + polarization] = 1.0
    return s


def projected_spinor(m: float, kvec, s) -> np.ndarray:
    """(kslash_- + m) s, which solves the Dirac equation on the lower shell."""
    kk = lower_shell_momentum(m, kvec)
    return np.einsum("...ab,b->...a", slash(kk) + m * IDENTITY, np.asarray(s, dtype=complex))


def dirac_shell_spinor(m: float, kvec, polarization: int = 0) -> np.ndarray:
    """Normalized solution of (kslash_- - m) chi = 0 on the lower shell."""
    if m <= 0:
        raise ValueError("mass must be positive")
    chi = projected_spinor(m, kvec, lower_reference(polarization))
    return chi / np.linalg.norm(chi, axis=-1, keepdims=True)


def dirac_residual(m: float, kvec, chi) -> np.ndarray:
    """||(kslash_- - m) chi|| / ||chi|| per spinor."""
    kk = lower_shell_momentum(m, kvec)
    r = np.einsum("...ab,...b->...a", slash(kk) - m * IDENTITY, chi)
    return np.linalg.norm(r, axis=-1) / np.maximum(np.linalg.norm(chi, axis=-1), 1e-300)
