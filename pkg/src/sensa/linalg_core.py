"""Dense linear algebra on tiny covariance blocks and weighted least squares.

Matrices here are at most 8x8, so everything is direct. Covariance matrices are
plain ``ndarray`` objects; callers keep track of variable order themselves.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import CollinearityError, DecompositionError, DegeneracyError

PD_RTOL = 1e-12
DEGENERATE_VAR = 1e-14
RANK_RTOL = 1e-10


def cholesky_lower(m) -> np.ndarray:
    """Lower Cholesky factor with an explicit pivot check.

    A pivot must exceed ``1e-12 * trace(m) / k``; otherwise a
    ``DecompositionError`` carrying the failing index is raised.
    """
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    k = a.shape[0]
    tol = max(PD_RTOL * np.trace(a) / k, 0.0)
    L = np.zeros_like(a)
    for j in range(k):
        d = a[j, j] - L[j, :j] @ L[j, :j]
        if not d > tol:
            raise DecompositionError(
                f"matrix is not positive definite (pivot {j} = {d:.3g})", pivot=j)
        L[j, j] = np.sqrt(d)
        if j + 1 < k:
            L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def cond_cov(m, idx: Sequence[int], cond: Sequence[int] = ()) -> np.ndarray:
    """Covariance of ``idx`` after linearly projecting out ``cond``."""
    m = np.asarray(m, dtype=float)
    idx = list(idx)
    cond = list(cond)
    base = m[np.ix_(idx, idx)]
    if not cond:
        return base.copy()
    mcc = m[np.ix_(cond, cond)]
    mci = m[np.ix_(cond, idx)]
    try:
        sol = np.linalg.solve(mcc, mci)
    except np.linalg.LinAlgError as exc:
        raise DegeneracyError(f"singular conditioning block {cond}") from exc
    return base - mci.T @ sol


def cond_var(m, i: int, cond: Sequence[int] = ()) -> float:
    return float(cond_cov(m, [i], cond)[0, 0])


def r2(m, i: int, cond: Sequence[int]) -> float:
    """Population R^2 of variable ``i`` regressed on ``cond``."""
    if not len(cond):
        return 0.0
    return 1.0 - cond_var(m, i, cond) / m[i, i]


def partial_corr(m, i: int, j: int, cond: Sequence[int] = ()) -> float:
    """Partial correlation of ``i`` and ``j`` given ``cond``.

    Computed from the residual covariance of (i, j) given ``cond``, which is
    the inverse of the matching 2x2 block of the precision matrix, so the
    value equals ``-Omega_ij / sqrt(Omega_ii Omega_jj)`` of the restricted
    block. With an empty ``cond`` this is the ordinary correlation.
    """
    if i == j or i in cond or j in cond:
        raise ValueError("i, j must be distinct and outside the conditioning set")
    m = np.asarray(m, dtype=float)
    if len(cond):
        idx = [i, j, *cond]
        try:
            P = np.linalg.inv(m[idx][:, idx])
        except np.linalg.LinAlgError as exc:
            raise DegeneracyError(f"singular conditioning block {list(cond)}") from exc
        a, b, d = P[0, 0], P[0, 1], P[1, 1]
        det = a * d - b * b
        c00, c01, c11 = d / det, -b / det, a / det
    else:
        c00, c01, c11 = m[i, i], m[i, j], m[j, j]
    bad_i = not c00 > DEGENERATE_VAR * m[i, i]
    if bad_i or not c11 > DEGENERATE_VAR * m[j, j]:
        raise DegeneracyError(
            f"residual variance of variable {i if bad_i else j} given {list(cond)} is numerically zero")
    r = c01 / np.sqrt(c00 * c11)
    return float(min(1.0, max(-1.0, r)))


@dataclass(frozen=True)
class FitResult:
    coef: np.ndarray
    resid_var: float
    cov: np.ndarray
    dof: float
    resid: np.ndarray

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))


def _weighted_qr(X, w, names):
    sw = np.sqrt(w)
    Xw = X * sw[:, None]
    q, r = np.linalg.qr(Xw)
    norms = np.linalg.norm(Xw, axis=0)
    bad = np.flatnonzero(np.abs(np.diag(r)) <= RANK_RTOL * norms)
    if bad.size:
        labels = [names[b] if names is not None else f"column {b}" for b in bad]
        raise CollinearityError(
            "design is rank deficient; linearly dependent column(s): " + ", ".join(map(str, labels)),
            columns=labels)
    return q, r, sw


def residualize(design, responses, weights=None, names=None):
    """Weighted least-squares residuals of each response column on ``design``.

    Returns ``(residuals, coefficients)``; shapes follow ``responses``.
    """
    X = np.asarray(design, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    Y = np.asarray(responses, dtype=float)
    one = Y.ndim == 1
    if one:
        Y = Y[:, None]
    w = np.ones(X.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    q, r, sw = _weighted_qr(X, w, names)
    coef = solve_triangular(r, q.T @ (Y * sw[:, None]))
    res = Y - X @ coef
    if one:
        return res[:, 0], coef[:, 0]
    return res, coef


def wls(design, response, weights=None, names=None, absorbed: int = 0) -> FitResult:
    """Weighted least squares with classical coefficient covariance.

    ``absorbed`` counts columns already partialled out of the data (intercept
    and covariates); dof = n - absorbed - k.
    """
    X = np.asarray(design, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(response, dtype=float)
    n, k = X.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    q, r, sw = _weighted_qr(X, w, names)
    coef = solve_triangular(r, q.T @ (y * sw))
    resid = y - X @ coef
    dof = n - absorbed - k
    rss = float(w @ resid**2)
    s2 = rss / dof if dof > 0 else np.nan
    rinv = solve_triangular(r, np.eye(k))
    return FitResult(coef=coef, resid_var=s2, cov=s2 * (rinv @ rinv.T), dof=dof, resid=resid)
