import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macromatch.l1solver import Dictionary, default_lambda, residual_norm, solve_l1
from oracles import lasso_enumerate, lasso_qp, orthonormal_lasso, random_orthonormal


def unit_columns(rng, n, m):
    a = rng.standard_normal((n, m))
    return a / np.linalg.norm(a, axis=0)


def test_orthonormal_soft_threshold():
    A = Dictionary(np.eye(2), [0, 1])
    y = 5.0 * A.columns[:, 0]
    code = solve_l1(A, y, lam=0.5)
    assert np.allclose(code.coeffs, [4.5, 0.0], atol=1e-12)
    assert code.converged
    # residual sits exactly lam away on the single active coordinate
    assert residual_norm(A, code, y) == pytest.approx(0.5, abs=1e-12)


def test_zero_target():
    A = Dictionary(random_orthonormal(np.random.default_rng(0), 5, 3), [0, 1, 2])
    code = solve_l1(A, np.zeros(5))
    assert np.all(code.coeffs == 0)
    assert code.objective == 0


def test_random_sparse_recovery_against_qp():
    rng = np.random.default_rng(0)
    M = unit_columns(rng, 16, 8)
    x_true = np.zeros(8)
    x_true[[1, 5]] = [1.5, -2.0]
    y = M @ x_true
    A = Dictionary(M, range(8))
    code = solve_l1(A, y, lam=1e-4, tol=1e-10, max_iter=100000)
    support = set(np.flatnonzero(np.abs(code.coeffs) > 1e-3))
    assert support == {1, 5}
    assert np.max(np.abs(code.coeffs - x_true)) < 1e-2
    x_qp, f_qp = lasso_qp(M, y, 1e-4)
    assert np.max(np.abs(code.coeffs - x_qp)) < 1e-6
    assert code.objective == pytest.approx(f_qp, abs=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_matches_enumeration_small(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(2, 7)), int(rng.integers(1, 5))
    M = unit_columns(rng, n, m)
    y = 3 * rng.standard_normal(n)
    lam = float(rng.uniform(0.05, 1.0))
    code = solve_l1(Dictionary(M, range(m)), y, lam, tol=1e-10, max_iter=100000)
    _, f_best = lasso_enumerate(M, y, lam)
    assert code.objective == pytest.approx(f_best, abs=1e-4)


def test_objective_history_non_increasing():
    rng = np.random.default_rng(5)
    M = unit_columns(rng, 30, 20)
    y = rng.standard_normal(30)
    code = solve_l1(Dictionary(M, range(20)), y, lam=0.01, tol=1e-9)
    h = np.array(code.history)
    assert len(h) == code.iterations + 1
    assert np.all(np.diff(h) <= 1e-12 * max(1.0, h[0]))


def test_dead_zone_gives_zero():
    rng = np.random.default_rng(2)
    M = unit_columns(rng, 10, 6)
    y = rng.standard_normal(10)
    A = Dictionary(M, range(6))
    lam = float(np.max(np.abs(M.T @ y)))
    assert np.all(solve_l1(A, y, lam).coeffs == 0)
    assert np.all(solve_l1(A, y, 1.5 * lam).coeffs == 0)


def test_default_lambda_scales_with_correlation():
    A = Dictionary(np.eye(3), [0, 1, 2])
    assert default_lambda(A, [0, -10, 2]) == pytest.approx(4.0)
    assert default_lambda(A, [0, -10, 2], ratio=0.01) == pytest.approx(0.1)


def test_not_converged_flag():
    rng = np.random.default_rng(1)
    M = unit_columns(rng, 20, 15)
    code = solve_l1(Dictionary(M, range(15)), rng.standard_normal(20), 1e-3, tol=1e-15, max_iter=2)
    assert code.iterations == 2 and not code.converged


def test_errors():
    A = Dictionary(np.eye(3), [0, 1, 2])
    with pytest.raises(ValueError, match="dim"):
        solve_l1(A, np.zeros(4))
    with pytest.raises(ValueError, match="non-finite"):
        solve_l1(A, [np.nan, 0, 0])
    with pytest.raises(ValueError):
        solve_l1(A, np.ones(3), lam=0.0)
    with pytest.raises(ValueError, match="dimension"):
        residual_norm(A, np.zeros(2), np.zeros(3))


def test_residual_examples():
    rng = np.random.default_rng(4)
    M = unit_columns(rng, 8, 3)
    A = Dictionary(M, [0, 1, 2])
    x = np.array([1.0, -2.0, 0.5])
    assert residual_norm(A, x, M @ x) == pytest.approx(0, abs=1e-9)
    y = rng.standard_normal(8)
    assert residual_norm(A, np.zeros(3), y) == pytest.approx(np.linalg.norm(y))


def test_dictionary_invariants():
    with pytest.raises(ValueError, match="unit"):
        Dictionary(np.ones((2, 1)), [0])
    with pytest.raises(ValueError, match="contiguous"):
        Dictionary(np.eye(2), [0, 2])
    A = Dictionary.from_vectors([[3.0, 4.0], [0.0, 2.0], [1.0, 0.0]], [0, 0, 1])
    assert A.m == 3 and A.k == 2 and A.counts.tolist() == [2, 1]
    assert np.allclose(np.linalg.norm(A.columns, axis=0), 1.0)


@given(st.integers(0, 2**32 - 1), st.floats(0.1, 20))
@settings(max_examples=40, deadline=None)
def test_homogeneity(seed, c):
    rng = np.random.default_rng(seed)
    M = unit_columns(rng, 12, 6)
    A = Dictionary(M, range(6))
    y = rng.standard_normal(12)
    lam = 0.05
    base = solve_l1(A, y, lam, tol=1e-13, max_iter=100000).coeffs
    scaled = solve_l1(A, c * y, c * lam, tol=1e-13, max_iter=100000).coeffs
    assert np.allclose(scaled, c * base, atol=1e-8 * max(1.0, c))


@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.floats(0.01, 3.0))
@settings(max_examples=40, deadline=None)
def test_orthonormal_closed_form_property(seed, m, lam):
    rng = np.random.default_rng(seed)
    Q = random_orthonormal(rng, 8, m)
    y = 4 * rng.standard_normal(8)
    code = solve_l1(Dictionary(Q, range(m)), y, lam, tol=1e-12)
    assert np.allclose(code.coeffs, orthonormal_lasso(Q, y, lam), atol=1e-9)
