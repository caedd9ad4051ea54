import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfsnoether.constructions import random_point
from cfsnoether.spectral import (
    CfsPoint, causal_classify, closed_chain, kernel, lagrangian, lagrangian_kappa, lagrangian_matrix,
    nontrivial_eigenvalues, pair_matrices, spectral_weight, weight_squared,
)

from oracles import full_operator, lagrangian_from_product, multiset_distance, product_spectrum

dims = st.tuples(st.integers(1, 2), st.integers(1, 6)).filter(lambda t: t[1] >= 1)


def _pair(seed, n, f):
    rng = np.random.default_rng(seed)
    return random_point(n, f, rng), random_point(n, f, rng)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), nf=dims)
def test_isospectral_with_dense_product(seed, nf):
    n, f = nf
    x, y = _pair(seed, n, f)
    chain = nontrivial_eigenvalues(x, y)
    dense = product_spectrum(x.psi, y.psi, 2 * n)
    scale = max(np.max(np.abs(dense)), 1e-300)
    assert len(chain) == 2 * n
    assert multiset_distance(chain, dense) <= 1e-9 * scale


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), nf=dims)
def test_operator_rank_and_signature(seed, nf):
    n, f = nf
    x, _ = _pair(seed, n, f)
    op = x.operator
    assert np.allclose(op, full_operator(x.psi), atol=1e-13)
    assert np.allclose(op, op.conj().T)
    ev = np.linalg.eigvalsh(op)
    tol = 1e-10 * max(1.0, np.max(np.abs(ev)))
    assert np.sum(ev > tol) <= n and np.sum(ev < -tol) <= n
    assert np.isclose(x.trace(), np.trace(op).real, atol=1e-12)


def test_rest_example_closed_chain():
    # isometric embedding, x has eigenvalues {1, -1}
    psi = np.array([[1, 0, 0], [0, 1, 0]], dtype=complex)
    x = CfsPoint(psi)
    assert np.allclose(np.sort(np.linalg.eigvalsh(x.operator)), [-1, 0, 1])
    ev = nontrivial_eigenvalues(x, x)
    assert np.allclose(np.sort(ev.real), [1, 1]) and np.allclose(ev.imag, 0)
    assert lagrangian(x, x) == 0.0


def test_zero_factor_gives_zero_chain():
    x = CfsPoint(np.ones((2, 3)))
    y = CfsPoint(np.zeros((2, 3)))
    assert np.array_equal(closed_chain(x, y), np.zeros((2, 2)))
    assert lagrangian(x, y) == 0.0


def test_collinear_rank_one_points():
    c = 1.7
    psi = np.zeros((2, 3), dtype=complex)
    psi[1, 0] = np.sqrt(c)  # negative-signature row: x = c |e0><e0|
    x = CfsPoint(psi)
    ev = np.sort(np.abs(nontrivial_eigenvalues(x, x)))
    assert np.allclose(ev, [0, c * c])
    # n = 1 closed form: 1/2 (|l1| - |l2|)^2
    assert np.isclose(lagrangian(x, x), 0.5 * (c * c) ** 2, rtol=1e-12)


def test_orthogonal_supports_are_spacelike():
    px = np.zeros((2, 4), dtype=complex)
    py = np.zeros((2, 4), dtype=complex)
    px[:, :2] = [[1, 0.3], [0.2, 1]]
    py[:, 2:] = [[0.5, 1], [1, -0.4]]
    x, y = CfsPoint(px), CfsPoint(py)
    assert np.allclose(nontrivial_eigenvalues(x, y), 0)
    assert causal_classify(x, y) == "spacelike"


def test_spectral_weight_examples(rng):
    assert spectral_weight([1, -1, 1j, 0]) == 3.0
    assert spectral_weight(np.zeros(4)) == 0.0
    vals = rng.normal(size=6) + 1j * rng.normal(size=6)
    assert np.isclose(spectral_weight(vals), sum(abs(complex(v)) for v in vals), rtol=1e-15)


def test_lagrangian_n1_examples():
    # eigenvalues {2, 0}: L = 1/2 (2 - 0)^2 = 2
    psi = np.zeros((2, 2), dtype=complex)
    psi[0, 0] = np.sqrt(2)
    x = CfsPoint(psi)
    assert np.allclose(np.sort(np.abs(nontrivial_eigenvalues(x, x))), [0, 4])
    y = CfsPoint(np.diag([1.0, 0.0]))
    ev = np.abs(nontrivial_eigenvalues(x, y))
    assert np.isclose(lagrangian(x, y), 0.5 * (ev.max() - ev.min()) ** 2, rtol=1e-12)
    assert np.isclose(lagrangian(x, y), 2.0, rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), f=st.integers(1, 5))
def test_n1_closed_form(seed, f):
    x, y = _pair(seed, 1, f)
    ev = np.abs(nontrivial_eigenvalues(x, y))
    assert abs(lagrangian(x, y) - 0.5 * (ev[0] - ev[1]) ** 2) <= 1e-12 * (1 + ev.sum() ** 2)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), nf=dims, kappa=st.sampled_from([0.0, 0.1, 2.0]))
def test_lagrangian_against_dense_oracle(seed, nf, kappa):
    n, f = nf
    x, y = _pair(seed, n, f)
    lag_ref, w2_ref = lagrangian_from_product(x.psi, y.psi)
    scale = 1 + w2_ref
    assert abs(lagrangian(x, y) - max(lag_ref, 0.0)) <= 1e-10 * scale
    assert abs(weight_squared(x, y) - w2_ref) <= 1e-10 * scale
    assert abs(lagrangian_kappa(x, y, kappa) - (lagrangian(x, y) + kappa * weight_squared(x, y))) <= 1e-12 * scale


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), nf=dims)
def test_symmetry_and_nonnegativity(seed, nf):
    n, f = nf
    x, y = _pair(seed, n, f)
    lxy, lyx = lagrangian(x, y), lagrangian(y, x)
    scale = 1 + weight_squared(x, y)
    assert lxy >= 0 and lyx >= 0
    assert abs(lxy - lyx) <= 1e-10 * scale
    assert abs(weight_squared(x, y) - weight_squared(y, x)) <= 1e-10 * scale
    assert causal_classify(x, y) == causal_classify(y, x)
    assert multiset_distance(nontrivial_eigenvalues(x, y), nontrivial_eigenvalues(y, x)) <= 1e-9 * scale


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), t=st.floats(0.1, 5.0))
def test_homogeneity(seed, t):
    x, y = _pair(seed, 2, 4)
    base = lagrangian(x, y)
    scale = 1 + weight_squared(x, y)
    assert abs(lagrangian(x.scaled(t), y) - t * t * base) <= 1e-10 * scale * t * t
    assert abs(lagrangian(x.scaled(t), y.scaled(t)) - t ** 4 * base) <= 1e-10 * scale * t ** 4


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_unitary_invariance(seed):
    from scipy.stats import unitary_group

    x, y = _pair(seed, 1, 4)
    u = unitary_group.rvs(4, random_state=seed)
    ux, uy = CfsPoint(x.psi @ u.conj().T), CfsPoint(y.psi @ u.conj().T)
    assert np.allclose(ux.operator, u @ x.operator @ u.conj().T)
    assert abs(lagrangian(ux, uy) - lagrangian(x, y)) <= 1e-10 * (1 + weight_squared(x, y))


def test_distinct_moduli_self_pair_is_timelike():
    psi = np.array([[1.0, 0.2, 0], [0.1, 0.5, 0.3]], dtype=complex)
    x = CfsPoint(psi)
    ev = np.abs(nontrivial_eigenvalues(x, x))
    assert abs(ev[0] - ev[1]) > 1e-3
    assert causal_classify(x, x) == "timelike"
    with pytest.raises(ValueError):
        causal_classify(x, x, tol=0.0)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        kernel(CfsPoint(np.ones((2, 3))), CfsPoint(np.ones((2, 4))))
    with pytest.raises(ValueError):
        CfsPoint(np.ones((3, 2)))
    with pytest.raises(ValueError):
        lagrangian_kappa(CfsPoint(np.ones((2, 2))), CfsPoint(np.ones((2, 2))), -1.0)


def test_batched_tables_match_pointwise(rng):
    pts = [random_point(2, 5, rng) for _ in range(5)]
    lag, w2 = pair_matrices(pts, pts)
    for i, x in enumerate(pts):
        for j, y in enumerate(pts):
            assert np.isclose(lag[i, j], lagrangian(x, y), rtol=1e-12, atol=1e-14)
            assert np.isclose(w2[i, j], weight_squared(x, y), rtol=1e-12)
    assert np.allclose(lagrangian_matrix(pts, kappa=0.3), lag + 0.3 * w2)
