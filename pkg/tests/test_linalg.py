import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sensa.errors import CollinearityError, DecompositionError, DegeneracyError
from sensa.linalg_core import cholesky_lower, cond_var, partial_corr, wls


def _pd(seed, k):
    r = np.random.default_rng(seed)
    A = r.standard_normal((k, k))
    return A @ A.T + 0.1 * np.eye(k)


def test_cholesky_identity_and_2x2():
    assert np.array_equal(cholesky_lower(np.eye(3)), np.eye(3))
    rho = 0.37
    L = cholesky_lower([[1, rho], [rho, 1]])
    np.testing.assert_allclose(L, [[1, 0], [rho, np.sqrt(1 - rho**2)]], atol=1e-15)


def test_cholesky_reconstruction(rng):
    for _ in range(20):
        m = _pd(rng.integers(1 << 30), 5)
        L = cholesky_lower(m)
        assert np.all(np.diag(L) > 0)
        assert np.abs(L @ L.T - m).max() <= 1e-12 * np.abs(m).max()


def test_cholesky_reports_pivot():
    m = np.array([[1.0, 1.0, 0], [1.0, 1.0, 0], [0, 0, 1.0]])
    with pytest.raises(DecompositionError) as ei:
        cholesky_lower(m)
    assert ei.value.pivot == 1


def test_partial_corr_basic():
    d = np.diag([1.0, 2.0, 3.0, 4.0])
    assert partial_corr(d, 0, 1, [2, 3]) == 0.0
    m = _pd(1, 4)
    assert partial_corr(m, 0, 2) == pytest.approx(m[0, 2] / np.sqrt(m[0, 0] * m[2, 2]), abs=1e-15)


def test_partial_corr_matches_residual_regression(rng):
    # three variables built from structural coefficients
    n = 2000
    a = rng.standard_normal(n)
    b = 0.7 * a + rng.standard_normal(n)
    c = -0.4 * a + 0.5 * b + rng.standard_normal(n)
    X = np.column_stack([a, b, c])
    X -= X.mean(0)
    m = X.T @ X / n
    ra = a - a.mean() - X[:, [2]] @ np.linalg.solve(m[[2]][:, [2]], m[[2], 0])
    rb = b - b.mean() - X[:, [2]] @ np.linalg.solve(m[[2]][:, [2]], m[[2], 1])
    want = np.corrcoef(ra, rb)[0, 1]
    assert partial_corr(m, 0, 1, [2]) == pytest.approx(want, abs=1e-12)


def test_partial_corr_precision_form(rng):
    m = _pd(7, 5)
    idx = [0, 3, 1, 4]
    om = np.linalg.inv(m[np.ix_(idx, idx)])
    want = -om[0, 1] / np.sqrt(om[0, 0] * om[1, 1])
    assert partial_corr(m, 0, 3, [1, 4]) == pytest.approx(want, abs=1e-12)


def test_partial_corr_degenerate():
    m = np.array([[1.0, 1.0, 0.3], [1.0, 1.0, 0.3], [0.3, 0.3, 1.0]])
    with pytest.raises(DegeneracyError):
        partial_corr(m, 0, 2, [1])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), scale=st.floats(0.01, 100))
def test_partial_corr_properties(seed, scale):
    m = _pd(seed, 5)
    r = partial_corr(m, 0, 1, [2, 3])
    assert -1 <= r <= 1
    assert r == pytest.approx(partial_corr(m, 1, 0, [3, 2]), abs=1e-12)
    D = np.ones(5)
    D[1] = scale
    assert partial_corr(m * np.outer(D, D), 0, 1, [2, 3]) == pytest.approx(r, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_partial_corr_recursion(seed):
    m = _pd(seed, 5)
    C = [3]
    rij = partial_corr(m, 0, 1, C)
    rik = partial_corr(m, 0, 2, C)
    rjk = partial_corr(m, 1, 2, C)
    want = (rij - rik * rjk) / np.sqrt((1 - rik**2) * (1 - rjk**2))
    assert partial_corr(m, 0, 1, [3, 2]) == pytest.approx(want, abs=1e-10)


def test_cond_var_schur():
    m = _pd(3, 4)
    want = m[0, 0] - m[0, 1:] @ np.linalg.solve(m[1:, 1:], m[1:, 0])
    assert cond_var(m, 0, [1, 2, 3]) == pytest.approx(want, rel=1e-12)


def test_wls_exact_fit_and_weights(rng):
    X = rng.standard_normal((50, 3))
    fit = wls(X, X[:, 1])
    np.testing.assert_allclose(fit.coef, [0, 1, 0], atol=1e-12)
    assert fit.resid_var == pytest.approx(0, abs=1e-20)
    y = rng.standard_normal(50)
    a = wls(X, y)
    b = wls(X, y, weights=np.full(50, 1.0))
    np.testing.assert_allclose(a.coef, b.coef, atol=1e-14)


def test_wls_vs_normal_equations(rng):
    X = rng.standard_normal((200, 4))
    y = X @ [1, -2, 0.5, 3] + rng.standard_normal(200)
    w = rng.uniform(0.1, 2, 200)
    fit = wls(X, y, w, absorbed=1)
    beta = np.linalg.inv(X.T @ (X * w[:, None])) @ (X.T @ (w * y))
    assert np.abs(fit.coef - beta).max() <= 1e-10
    assert fit.dof == 200 - 1 - 4
    resid = y - X @ beta
    s2 = (w @ resid**2) / fit.dof
    np.testing.assert_allclose(fit.cov, s2 * np.linalg.inv(X.T @ (X * w[:, None])), rtol=1e-9)


def test_wls_collinear_names_column(rng):
    X = rng.standard_normal((30, 2))
    X = np.column_stack([X, X[:, 0] - 2 * X[:, 1]])
    with pytest.raises(CollinearityError) as ei:
        wls(X, rng.standard_normal(30), names=["a", "b", "c"])
    assert "c" in ei.value.columns
