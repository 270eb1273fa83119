import numpy as np
import pytest
import scipy.sparse as sp

from elrgnn import linalg as L


def random_symmetric(n, density, seed):
    rng = np.random.default_rng(seed)
    M = sp.random_array((n, n), density=density, rng=rng, format="csr")
    return sp.csr_array(M + M.T)


def test_oracle_on_identity_and_swap():
    o = L.full_svd_oracle(np.eye(3))
    np.testing.assert_allclose(o.values, [1, 1, 1], atol=1e-14)
    o = L.full_svd_oracle(np.array([[0.0, 2.0], [2.0, 0.0]]))
    np.testing.assert_allclose(o.values, [2, 2], atol=1e-14)
    np.testing.assert_allclose(sorted(o.eigenvalues), [-2, 2], atol=1e-14)


@pytest.mark.parametrize("n", [5, 20, 33])
def test_oracle_reconstructs(n):
    A = random_symmetric(n, 0.3, n).toarray()
    o = L.full_svd_oracle(A)
    R = (o.vectors * o.eigenvalues) @ o.vectors.T
    assert np.linalg.norm(A - R) <= 1e-10 * max(np.linalg.norm(A), 1)
    np.testing.assert_allclose(o.vectors.T @ o.vectors, np.eye(n), atol=1e-12)


def test_oracle_rejects_asymmetric():
    with pytest.raises(ValueError):
        L.full_svd_oracle(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_truncated_matches_oracle_on_gapped_matrix():
    rng = np.random.default_rng(3)
    Q, _ = np.linalg.qr(rng.normal(size=(40, 40)))
    lam = np.concatenate([[9, -7, 5, 4], rng.uniform(-1, 1, 36)])
    A = (Q * lam) @ Q.T
    A = 0.5 * (A + A.T)
    res = L.truncated_svd(A, L.SvdConfig(4))
    np.testing.assert_allclose(res.values, [9, 7, 5, 4], rtol=1e-9)
    np.testing.assert_array_equal(res.signs, [1, -1, 1, 1])
    np.testing.assert_allclose(res.vectors.T @ res.vectors, np.eye(4), atol=1e-12)


def test_signed_reconstruction_is_exact_at_full_rank():
    A = random_symmetric(20, 0.4, 11).toarray()
    res = L.truncated_svd(A, L.SvdConfig(20, oversample=0))
    assert np.linalg.norm(A - res.reconstruct()) <= 1e-9


def test_sign_convention_and_determinism():
    A = random_symmetric(30, 0.2, 5)
    a = L.truncated_svd(A, L.SvdConfig(3, seed=7))
    b = L.truncated_svd(A, L.SvdConfig(3, seed=7))
    np.testing.assert_array_equal(a.vectors, b.vectors)
    idx = np.argmax(np.abs(a.vectors), axis=0)
    assert np.all(a.vectors[idx, np.arange(3)] > 0)


def test_truncated_svd_rejects_bad_input():
    with pytest.raises(ValueError):
        L.truncated_svd(np.zeros((4, 4)), L.SvdConfig(3, oversample=2))
    with pytest.raises(ValueError):
        L.truncated_svd(np.full((4, 4), np.nan), L.SvdConfig(1, oversample=0))
    with pytest.raises(ValueError):
        L.truncated_svd(np.zeros((4, 3)), L.SvdConfig(1, oversample=0))


def test_spmm_matches_dense():
    rng = np.random.default_rng(0)
    A = sp.random_array((8, 8), density=0.3, rng=rng, format="csr")
    B = rng.normal(size=(8, 3))
    np.testing.assert_allclose(L.spmm(A, B), A.toarray() @ B, rtol=0, atol=1e-13)
    with pytest.raises(ValueError):
        L.spmm(A, B[:5])


def test_frobenius_sq_sparse_and_dense():
    rng = np.random.default_rng(1)
    M = rng.normal(size=(10, 10))
    oracle = sum(x * x for x in M.ravel())
    assert L.frobenius_sq(M) == pytest.approx(oracle, rel=1e-13)
    assert L.frobenius_sq(sp.csr_array(M)) == pytest.approx(oracle, rel=1e-13)
