import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import numerics as nx
from exceptions import DimensionError, NonFiniteError, NotHermitianError, NotPsdError
from states import haar_unitary, make_rng, random_density


def _random_matrix(rng, rows, cols):
    return rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))


def test_dim_split_rejects_non_positive():
    with pytest.raises(DimensionError):
        nx.DimSplit(2, 0, 2)
    assert nx.DimSplit(2, 3, 4).total == 24


def test_as_matrix_rejects_nan_and_vectors():
    with pytest.raises(NonFiniteError):
        nx.as_matrix([[1.0, np.nan], [0.0, 1.0]])
    with pytest.raises(DimensionError):
        nx.as_matrix([1.0, 2.0])
    with pytest.raises(DimensionError):
        nx.as_square(np.zeros((2, 3)))


def test_herm_eig_reconstructs_and_rejects_non_hermitian():
    rng = make_rng(1)
    G = _random_matrix(rng, 4, 4)
    H = G + G.conj().T
    eigenvalues, V = nx.herm_eig(H)
    assert np.all(np.diff(eigenvalues) >= 0)
    np.testing.assert_allclose(V @ np.diag(eigenvalues) @ V.conj().T, H, atol=1e-12)
    with pytest.raises(NotHermitianError):
        nx.herm_eig(G)


def test_vec_is_column_stacking():
    M = np.arange(6).reshape(2, 3)
    np.testing.assert_array_equal(nx.vec(M), [0, 3, 1, 4, 2, 5])
    np.testing.assert_array_equal(nx.unvec(nx.vec(M), 2, 3), M)
    with pytest.raises(DimensionError):
        nx.unvec(np.zeros(5), 2, 3)


def test_vec_identity_for_products():
    rng = make_rng(2)
    A, X, B = (_random_matrix(rng, 3, 3) for _ in range(3))
    np.testing.assert_allclose(nx.vec(A @ X @ B), np.kron(B.T, A) @ nx.vec(X), atol=1e-12)


def test_numerical_rank_and_pinv():
    assert nx.numerical_rank(np.diag([1.0, 1e-12, 0.0])) == 1
    assert nx.numerical_rank(np.zeros((3, 3))) == 0
    np.testing.assert_array_equal(nx.pinv(np.zeros((2, 3))), np.zeros((3, 2)))

    rng = make_rng(3)
    M = _random_matrix(rng, 4, 2) @ _random_matrix(rng, 2, 5)
    P = nx.pinv(M)
    np.testing.assert_allclose(M @ P @ M, M, atol=1e-10)
    np.testing.assert_allclose(P @ M @ P, P, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 32 - 1))
def test_partial_trace_of_product(seed):
    rng = make_rng(seed)
    A, B, C = random_density(2, 2, rng), random_density(3, 3, rng), random_density(2, 2, rng)
    rho = nx.kron_all(A, B, C)
    np.testing.assert_allclose(nx.partial_trace(rho, [2, 3, 2], [1, 2]), A, atol=1e-12)
    np.testing.assert_allclose(nx.partial_trace(rho, [2, 3, 2], 0), np.kron(B, C), atol=1e-12)
    np.testing.assert_allclose(nx.partial_trace(rho, [2, 3, 2], [0, 2]), B, atol=1e-12)


def test_partial_trace_rejects_bad_dims():
    with pytest.raises(DimensionError):
        nx.partial_trace(np.eye(6), [2, 2], 0)
    with pytest.raises(DimensionError):
        nx.partial_trace(np.eye(4), [2, 2], 2)


def test_partial_transpose_of_product():
    rng = make_rng(4)
    A, B = _random_matrix(rng, 2, 2), _random_matrix(rng, 3, 3)
    np.testing.assert_allclose(nx.partial_transpose(np.kron(A, B), [2, 3], 1), np.kron(A, B.T))
    np.testing.assert_allclose(nx.partial_transpose(np.kron(A, B), [2, 3], [0, 1]), np.kron(A, B).T)


def test_permute_systems_moves_factors():
    rng = make_rng(5)
    A, B, C = _random_matrix(rng, 2, 2), _random_matrix(rng, 3, 3), _random_matrix(rng, 4, 4)
    permuted = nx.permute_systems(nx.kron_all(A, B, C), [2, 3, 4], [2, 0, 1])
    np.testing.assert_allclose(permuted, nx.kron_all(C, A, B), atol=1e-12)
    with pytest.raises(DimensionError):
        nx.permute_systems(np.eye(6), [2, 3], [0, 0])


def test_psd_sqrt_and_pinv_sqrt():
    rng = make_rng(6)
    rho = random_density(4, 2, rng)
    root = nx.psd_sqrt(rho)
    np.testing.assert_allclose(root @ root, rho, atol=1e-10)

    inv_root = nx.psd_pinv_sqrt(rho)
    support = inv_root @ rho @ inv_root
    # 支撑集上的投影
    np.testing.assert_allclose(support @ support, support, atol=1e-8)
    assert np.trace(support).real == pytest.approx(2.0, abs=1e-8)

    with pytest.raises(NotPsdError):
        nx.psd_sqrt(np.diag([1.0, -0.1]))


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 32 - 1))
def test_trace_norm_unitarily_invariant(seed):
    rng = make_rng(seed)
    M = _random_matrix(rng, 4, 4)
    U, V = haar_unitary(4, rng), haar_unitary(4, rng)
    assert nx.trace_norm(U @ M @ V) == pytest.approx(nx.trace_norm(M), rel=1e-10)
    np.testing.assert_allclose(U @ U.conj().T, np.eye(4), atol=1e-12)


def test_trace_norm_of_density_is_one():
    assert nx.trace_norm(random_density(5, 3, make_rng(7))) == pytest.approx(1.0, abs=1e-12)


seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)
sizes = st.integers(min_value=1, max_value=128)


@settings(max_examples=20, deadline=None)
@given(seeds, sizes, sizes)
def test_svd_reconstructs_and_matches_gram_spectrum(seed, rows, cols):
    M = _random_matrix(make_rng(seed), rows, cols)
    U, s, V = nx.svd(M)
    k = min(rows, cols)
    assert s.shape == (k,)
    assert np.all(np.diff(s) <= 0)
    scale = np.linalg.norm(M)
    np.testing.assert_allclose((U * s) @ V.conj().T, M, atol=1e-12 * scale)
    np.testing.assert_allclose(U.conj().T @ U, np.eye(k), atol=1e-12 * k)
    np.testing.assert_allclose(V.conj().T @ V, np.eye(k), atol=1e-12 * k)
    gram = np.linalg.eigvalsh(M.conj().T @ M)[::-1][:k]
    np.testing.assert_allclose(s ** 2, gram, atol=1e-10 * s[0] ** 2)


@settings(max_examples=20, deadline=None)
@given(seeds, sizes, sizes, st.floats(min_value=0.0, max_value=1.0))
def test_pinv_satisfies_penrose_identities(seed, rows, cols, fraction):
    rng = make_rng(seed)
    rank = max(1, int(fraction * min(rows, cols) / 2))
    M = _random_matrix(rng, rows, rank) @ _random_matrix(rng, rank, cols)
    P = nx.pinv(M)
    assert P.shape == (cols, rows)
    assert nx.numerical_rank(M) == rank

    def close(X, Y, ref):
        assert np.linalg.norm(X - Y) <= 1e-8 * max(1.0, np.linalg.norm(ref))

    close(M @ P @ M, M, M)
    close(P @ M @ P, P, P)
    close((M @ P).conj().T, M @ P, M @ P)
    close((P @ M).conj().T, P @ M, P @ M)


@settings(max_examples=20, deadline=None)
@given(seeds, sizes)
def test_herm_eig_reconstructs_random_hermitian(seed, n):
    G = _random_matrix(make_rng(seed), n, n)
    H = (G + G.conj().T) / 2
    eigenvalues, V = nx.herm_eig(H)
    scale = np.linalg.norm(H)
    np.testing.assert_allclose(V.conj().T @ V, np.eye(n), atol=1e-12 * n)
    np.testing.assert_allclose((V * eigenvalues) @ V.conj().T, H, atol=1e-12 * scale)
    np.testing.assert_allclose(eigenvalues.sum(), np.trace(H).real, atol=1e-10 * scale)


dims_strategy = st.lists(st.integers(min_value=1, max_value=5), min_size=3, max_size=3)


@settings(max_examples=25, deadline=None)
@given(seeds, dims_strategy)
def test_partial_trace_is_linear_and_commutes(seed, dims):
    rng = make_rng(seed)
    n = int(np.prod(dims))
    X, Y = _random_matrix(rng, n, n), _random_matrix(rng, n, n)
    a, b = complex(*rng.standard_normal(2)), complex(*rng.standard_normal(2))
    for traced in (0, 1, 2, [0, 2]):
        np.testing.assert_allclose(
            nx.partial_trace(a * X + b * Y, dims, traced),
            a * nx.partial_trace(X, dims, traced) + b * nx.partial_trace(Y, dims, traced),
            atol=1e-10 * n)

    d0, d1, d2 = dims
    at_once = nx.partial_trace(X, dims, [0, 2])
    c_then_a = nx.partial_trace(nx.partial_trace(X, dims, 2), [d0, d1], 0)
    a_then_c = nx.partial_trace(nx.partial_trace(X, dims, 0), [d1, d2], 1)
    np.testing.assert_allclose(c_then_a, at_once, atol=1e-10 * n)
    np.testing.assert_allclose(a_then_c, at_once, atol=1e-10 * n)


@settings(max_examples=20, deadline=None)
@given(seeds, sizes)
def test_trace_norm_triangle_inequality(seed, n):
    rng = make_rng(seed)
    X, Y = _random_matrix(rng, n, n), _random_matrix(rng, n, n)
    norm_x, norm_y = nx.trace_norm(X), nx.trace_norm(Y)
    assert nx.trace_norm(X + Y) <= norm_x + norm_y + 1e-9 * (norm_x + norm_y)
    assert nx.trace_norm(-2.5j * X) == pytest.approx(2.5 * norm_x, rel=1e-10)
    assert nx.trace_norm(X) >= np.abs(np.trace(X)) - 1e-9 * norm_x
