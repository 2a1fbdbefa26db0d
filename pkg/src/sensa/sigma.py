"""Partial-correlation parameterization of the unobserved confounder.

rho = (r1, r2, r3, r4) are the nested partial correlations of U with
W_Z, W_Y | W_Z, Z | W_Z, W_Y and Y | Z, W_Z, W_Y. Any rho in (-1, 1)^4 maps to
a valid 5x5 covariance whose observed block is the given moment matrix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .bias import SooParams, bias_soo, soo_sd_ratio
from .errors import DegeneracyError, DomainError
from .estimators import as_taus
from .io_ingest import U, WY, WZ, Y, Z, ObservedMoments
from .linalg_core import cholesky_lower, partial_corr

BOUND = 0.999

COMPONENT_NAMES = {
    "soo": ("soo-z", "soo-y"),
    "iv": ("iv-exog", "iv-excl"),
    "prox": ("prox-z", "prox-y-z", "prox-y-wz"),
}

# (i, j, conditioning set) for each violation component
_COMPONENTS = {
    "soo": ((Z, U, (WZ, WY)), (Y, U, (Z, WZ, WY))),
    "iv": ((WZ, U, (WY,)), (Y, WZ, (Z, WY, U))),
    "prox": ((Y, WZ, (Z, WY, U)), (WY, Z, (WZ, U)), (WY, WZ, (U,))),
}


@dataclass(frozen=True)
class Rho:
    r1: float
    r2: float
    r3: float
    r4: float

    def __post_init__(self):
        for k, v in zip("1234", self.as_array()):
            if not -1.0 < v < 1.0:
                raise DomainError(f"r{k} = {v} must lie in (-1, 1)")

    def as_array(self) -> np.ndarray:
        return np.array([self.r1, self.r2, self.r3, self.r4])

    @classmethod
    def from_array(cls, a) -> "Rho":
        return cls(*(float(x) for x in a))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))


ZERO = Rho(0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class ExtendedCov:
    """5x5 covariance over (W_Z, W_Y, Z, Y, U) with var(U) = 1."""
    matrix: np.ndarray
    moments: ObservedMoments | None = None


@dataclass(frozen=True)
class ViolationVector:
    strategy: str
    components: tuple[float, ...]

    @property
    def names(self) -> tuple[str, ...]:
        return COMPONENT_NAMES[self.strategy]

    @property
    def sq_norm(self) -> float:
        return float(sum(c * c for c in self.components))

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.components))


def u_coordinates(rho: Rho) -> np.ndarray:
    """Cholesky-row coordinates of U on the observed correlation factor."""
    u = np.empty(4)
    rest = 1.0
    for k, r in enumerate(rho.as_array()):
        u[k] = r * math.sqrt(rest)
        rest -= u[k] ** 2
    return u


def sigma_from_rho(m: ObservedMoments, rho: Rho) -> ExtendedCov:
    L = m.chol_corr
    cor_u = L @ u_coordinates(rho)
    s = np.empty((5, 5))
    s[:4, :4] = m.cov
    s[4, :4] = s[:4, 4] = cor_u * m.sd
    s[4, 4] = 1.0
    return ExtendedCov(s, m)


def rho_from_sigma(s: ExtendedCov | np.ndarray) -> Rho:
    """Invert the parameterization through the Cholesky factor of the correlation."""
    mat = np.asarray(getattr(s, "matrix", s), dtype=float)
    sd = np.sqrt(np.diag(mat))
    L = cholesky_lower(mat / np.outer(sd, sd))
    u = L[4, :4]
    r = np.empty(4)
    rest = 1.0
    for k in range(4):
        if rest <= 1e-14:
            raise DegeneracyError("U is numerically determined by the observed variables")
        r[k] = u[k] / math.sqrt(rest)
        rest -= u[k] ** 2
    return Rho.from_array(np.clip(r, -1 + 1e-16, 1 - 1e-16))


def tau_true(s: ExtendedCov | np.ndarray) -> float:
    """Coefficient on Z in the regression of Y on (Z, W_Z, W_Y, U)."""
    mat = np.asarray(getattr(s, "matrix", s), dtype=float)
    regs = [Z, WZ, WY, U]
    try:
        return float(np.linalg.solve(mat[np.ix_(regs, regs)], mat[regs, Y])[0])
    except np.linalg.LinAlgError as exc:
        raise DegeneracyError("singular regressor block") from exc


def violations(s: ExtendedCov | np.ndarray, strategy: str) -> ViolationVector:
    mat = np.asarray(getattr(s, "matrix", s), dtype=float)
    try:
        spec = _COMPONENTS[strategy]
    except KeyError:
        raise ValueError(f"unknown strategy {strategy!r}") from None
    return ViolationVector(strategy, tuple(partial_corr(mat, i, j, c) for i, j, c in spec))


def soo_bias_at(m: ObservedMoments, r4: float, r3: float) -> float:
    sy, sz = soo_sd_ratio(m)
    return bias_soo(SooParams(r4, r3), sy, sz)


def bias_at(strategy: str, m: ObservedMoments, estimates: Mapping[str, float], rho: Rho) -> float:
    """Bias of ``strategy`` when the confounder has parameters ``rho``.

    The true effect is tau_soo minus the SOO bias, so every strategy's bias
    follows from the SOO one.
    """
    taus = as_taus(estimates)
    return taus[strategy] - (taus["soo"] - soo_bias_at(m, rho.r4, rho.r3))
