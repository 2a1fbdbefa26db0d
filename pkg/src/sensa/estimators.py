"""Point estimates and classical standard errors for the three strategies.

All three work on residualized data (covariates already partialled out), so
no intercept appears in any regression; ``p_x`` enters the dof instead.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import DegeneracyError, RelevanceError
from .io_ingest import WY, WZ, Y, Z, ObservedMoments, ReducedData, weighted_cov
from .linalg_core import partial_corr, residualize, wls

STRATEGIES = ("soo", "iv", "prox")
RELEVANCE_MIN = 1e-6
PROXY_RTOL = 1e-10


@dataclass(frozen=True)
class Estimate:
    strategy: str
    tau: float
    se: float
    n: int
    dof: float

    def to_dict(self) -> dict:
        return {"strategy": self.strategy, "tau": self.tau, "se": self.se,
                "n": self.n, "dof": self.dof}


@dataclass(frozen=True)
class EstimateSet:
    soo: Estimate
    iv: Estimate
    prox: Estimate

    def __getitem__(self, strategy: str) -> Estimate:
        return getattr(self, strategy)

    def taus(self) -> dict[str, float]:
        return {s: self[s].tau for s in STRATEGIES}

    def ses(self) -> dict[str, float]:
        return {s: self[s].se for s in STRATEGIES}


def estimate_soo(r: ReducedData) -> Estimate:
    X = np.column_stack([r.z, r.w_z, r.w_y])
    fit = wls(X, r.y, r.weights, names=["z", "w_z", "w_y"], absorbed=r.p_x)
    return Estimate("soo", float(fit.coef[0]), float(fit.se[0]), r.n, fit.dof)


def _second_stage(r: ReducedData, strategy, design_hat, design, names):
    """Second stage on fitted regressors, s.e. from structural residuals."""
    fit = wls(design_hat, r.y, r.weights, names=names, absorbed=r.p_x)
    u = r.y - design @ fit.coef
    # same dof as the SOO regression: three structural regressors
    dof = r.n - r.p_x - 3
    s2 = float(r.weights @ u**2) / dof
    xtx_inv = np.linalg.inv((design_hat * r.weights[:, None]).T @ design_hat)
    return Estimate(strategy, float(fit.coef[0]), float(np.sqrt(s2 * xtx_inv[0, 0])), r.n, dof)


def iv_relevance(r: ReducedData) -> float:
    S = weighted_cov(r.matrix(), r.weights)
    return partial_corr(S, Z, WZ, [WY])


def estimate_iv(r: ReducedData) -> Estimate:
    """Two-stage least squares with W_Z as the instrument and W_Y as a control."""
    rel = iv_relevance(r)
    if abs(rel) <= RELEVANCE_MIN:
        raise RelevanceError(f"instrument too weak: R_(Z~W_Z|W_Y) = {rel:.3g}")
    inst = np.column_stack([r.w_z, r.w_y])
    res, _ = residualize(inst, r.z, r.weights, names=["w_z", "w_y"])
    z_hat = r.z - res
    return _second_stage(r, "iv", np.column_stack([z_hat, r.w_y]),
                         np.column_stack([r.z, r.w_y]), ["z_hat", "w_y"])


def proxy_hat(r: ReducedData) -> np.ndarray:
    """Fitted W_Y from W_Y ~ Z + W_Z."""
    inst = np.column_stack([r.z, r.w_z])
    res, _ = residualize(inst, r.w_y, r.weights, names=["z", "w_z"])
    return r.w_y - res


def estimate_prox(r: ReducedData) -> Estimate:
    """Two-stage proximal estimator through the fitted outcome proxy."""
    w_hat = proxy_hat(r)
    w = r.weights
    v_hat = float(w @ w_hat**2) / w.sum()
    zz = float(w @ r.z**2)
    resid_var = v_hat - (float(w @ (w_hat * r.z)) ** 2 / zz) / w.sum()
    if not resid_var > PROXY_RTOL * v_hat:
        raise DegeneracyError("fitted outcome proxy is collinear with the treatment")
    return _second_stage(r, "prox", np.column_stack([r.z, w_hat]),
                         np.column_stack([r.z, r.w_y]), ["z", "w_y_hat"])


def estimate_all(r: ReducedData) -> EstimateSet:
    return EstimateSet(estimate_soo(r), estimate_iv(r), estimate_prox(r))


# population versions from the 4x4 moments --------------------------------

def _just_identified(S, inst, regs):
    # coefficient on the first regressor of the just-identified IV problem
    a = S[np.ix_(inst, regs)]
    return float(np.linalg.solve(a, S[inst, Y])[0])


def tau_soo_m(S) -> float:
    return _just_identified(S, [Z, WZ, WY], [Z, WZ, WY])


def tau_iv_m(S) -> float:
    return _just_identified(S, [WZ, WY], [Z, WY])


def tau_prox_m(S) -> float:
    return _just_identified(S, [Z, WZ], [Z, WY])


def taus_from_moments(m: ObservedMoments | np.ndarray) -> dict[str, float]:
    """Population (or in-sample) estimands from a covariance over (W_Z, W_Y, Z, Y, ...)."""
    S = m.cov if isinstance(m, ObservedMoments) else np.asarray(m)
    return {"soo": tau_soo_m(S), "iv": tau_iv_m(S), "prox": tau_prox_m(S)}


def as_taus(estimates) -> Mapping[str, float]:
    if isinstance(estimates, EstimateSet):
        return estimates.taus()
    return estimates
