"""Closed-form biases of the SOO, IV and proximal estimators.

Each strategy has a partial-R^2 form (built from sensitivity parameters and
observables) and a coefficient form (built from regression coefficients of
the linear system). Builders ``from_sigma`` fill either from a 5x5 covariance
over (W_Z, W_Y, Z, Y, U), which is how the tests cross-check them.

Two terms differ from the commonly quoted display of these decompositions:

* IV term (c) carries ``1 - R^2_{Y~W_Z|Z,W_Y}``, not ``R^2_{Y~W_Z|Z,W_Y}``.
* proximal term (c) is ``sign(R_{W_Y~U|W_Z}) * R_{W_Y~W_Z|U} * R_{Y~U|W_Z,W_Y,Z}
  * sqrt((1 - R^2_{Y~W_Y,W_Z,Z}) / ((1 - R^2_{Z~U|W_Y}) * den))``.

Both versions were checked against the exact population bias; see
``tests/test_bias.py``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import DegeneracyError, DomainError, RelevanceError
from .io_ingest import U, WY, WZ, Y, Z, ObservedMoments, ReducedData, weighted_cov
from .linalg_core import cond_cov, cond_var, partial_corr, r2

FLOOR = 1e-12
WH = 5  # index of the fitted outcome proxy in the augmented matrix


def _one_minus(x: float, label: str) -> float:
    v = 1.0 - x
    if v < FLOOR:
        raise DomainError(f"1 - {label} = {v:.3g} is below {FLOOR:g}")
    return v


def _unit(r: float, label: str):
    if not -1.0 < r < 1.0:
        raise DomainError(f"{label} = {r} must lie in (-1, 1)")


# ---------------------------------------------------------------- SOO

@dataclass(frozen=True)
class SooParams:
    """``r_yu`` = R_{Y~U|Z,W_Z,W_Y}; ``r_zu`` = R_{Z~U|W_Z,W_Y}."""
    r_yu: float
    r_zu: float

    def __post_init__(self):
        _unit(self.r_yu, "r_yu")
        if abs(self.r_zu) >= 1.0:
            raise DomainError(f"r_zu = {self.r_zu}: treatment confounding must be below 1")


def bias_soo(p: SooParams, sd_y_perp: float, sd_z_perp: float) -> float:
    """Omitted-confounder bias of the SOO estimate.

    ``sd_y_perp`` is sd(Y given Z, W_Z, W_Y), ``sd_z_perp`` is sd(Z given W_Z, W_Y).
    """
    den = _one_minus(p.r_zu**2, "R^2_{Z~U|W_Z,W_Y}")
    return p.r_yu * p.r_zu / math.sqrt(den) * sd_y_perp / sd_z_perp


def soo_sd_ratio(m: ObservedMoments | np.ndarray) -> tuple[float, float]:
    S = m.cov if isinstance(m, ObservedMoments) else np.asarray(m)
    return (math.sqrt(cond_var(S, Y, [Z, WZ, WY])), math.sqrt(cond_var(S, Z, [WZ, WY])))


# ---------------------------------------------------------------- IV

@dataclass(frozen=True)
class IvBiasInputs:
    r_z_wz__wy: float
    r_y_wz__z_wy_u: float      # exclusion violation
    r2_y_u__z_wy: float
    r2_wz_u__z_wy: float
    r_y_u__z_wz_wy: float
    r_wz_u__wy: float          # exogeneity violation
    r2_z_u__wz_wy: float
    r2_y_wz__z_wy: float
    sd_y__z_wy: float
    sd_z__wy: float

    @classmethod
    def from_sigma(cls, sigma) -> "IvBiasInputs":
        s = _mat(sigma)
        pc = lambda i, j, c: partial_corr(s, i, j, c)  # noqa: E731
        return cls(
            r_z_wz__wy=pc(Z, WZ, [WY]),
            r_y_wz__z_wy_u=pc(Y, WZ, [Z, WY, U]),
            r2_y_u__z_wy=pc(Y, U, [Z, WY]) ** 2,
            r2_wz_u__z_wy=pc(WZ, U, [Z, WY]) ** 2,
            r_y_u__z_wz_wy=pc(Y, U, [Z, WZ, WY]),
            r_wz_u__wy=pc(WZ, U, [WY]),
            r2_z_u__wz_wy=pc(Z, U, [WZ, WY]) ** 2,
            r2_y_wz__z_wy=pc(Y, WZ, [Z, WY]) ** 2,
            sd_y__z_wy=math.sqrt(cond_var(s, Y, [Z, WY])),
            sd_z__wy=math.sqrt(cond_var(s, Z, [WY])),
        )


def iv_terms(inp: IvBiasInputs) -> dict[str, float]:
    """Labeled pieces: (a) instrument strength, (b) exclusion, (c) exogeneity."""
    if abs(inp.r_z_wz__wy) < 1e-12:
        raise RelevanceError("R_{Z~W_Z|W_Y} is zero: the instrument is irrelevant")
    a = inp.sd_y__z_wy / (inp.r_z_wz__wy * inp.sd_z__wy)
    b = inp.r_y_wz__z_wy_u * math.sqrt(
        _one_minus(inp.r2_y_u__z_wy, "R^2_{Y~U|Z,W_Y}")
        / _one_minus(inp.r2_wz_u__z_wy, "R^2_{W_Z~U|Z,W_Y}")
        / _one_minus(inp.r_z_wz__wy**2, "R^2_{Z~W_Z|W_Y}"))
    c = inp.r_y_u__z_wz_wy * inp.r_wz_u__wy * math.sqrt(
        _one_minus(inp.r2_y_wz__z_wy, "R^2_{Y~W_Z|Z,W_Y}")
        / _one_minus(inp.r2_z_u__wz_wy, "R^2_{Z~U|W_Z,W_Y}")
        / _one_minus(inp.r_wz_u__wy**2, "R^2_{W_Z~U|W_Y}"))
    return {"a_instrument_strength": a, "b_exclusion": b, "c_exogeneity": c,
            "bias": a * (b + c)}


def bias_iv(inp: IvBiasInputs) -> float:
    return iv_terms(inp)["bias"]


def iv_bias_exogenous(inp: IvBiasInputs) -> float:
    """IV bias when the instrument is exogenous: strength times exclusion term.

    Keeps the ``1/(1 - R^2_{W_Z~U|Z,W_Y})`` factor inside the exclusion term;
    with ``r2_wz_u__z_wy = 0`` it is the simplified product usually quoted.
    """
    t = iv_terms(inp)
    return t["a_instrument_strength"] * t["b_exclusion"]


def iv_vs_soo_exclusion_threshold(soo: SooParams, r2_z_wz__wy: float, r2_y_wz__wy_z: float,
                                  gamma: float = 1.0, r2_wz_u__z_wy: float = 0.0) -> float:
    """Largest R^2_{Y~W_Z|W_Y,Z,U} for which an exogenous IV beats SOO.

    ``gamma`` relates R^2_{Y~U|W_Y,Z} to R^2_{Y~U|W_Y,W_Z,Z} (their ratio);
    the default 1 treats them as equal. ``r2_wz_u__z_wy`` is the leftover
    endogeneity of W_Z once Z is conditioned on (0 drops the factor).
    """
    r2y, r2z = soo.r_yu**2, soo.r_zu**2
    lhs = _one_minus(gamma * r2y, "gamma * R^2_{Y~U|W_Y,W_Z,Z}")
    return (r2y / lhs * r2z / _one_minus(r2z, "R^2_{Z~U|W_Y,W_Z}")
            * (1.0 - r2_y_wz__wy_z) * r2_z_wz__wy * (1.0 - r2_wz_u__z_wy))


# ---------------------------------------------------------------- proximal

@dataclass(frozen=True)
class ProxBiasInputs:
    sign_wz_z: float
    r2_what_wz: float
    r2_what_z: float
    r2_wz_u__wy_z: float
    sd_y: float
    sd_z: float
    # treatment proxy block
    r_y_wz__wy_z_u: float
    r2_y_u__wy_z: float
    r2_y__wy_z: float
    r2_wz__wy_z: float
    # outcome proxy block
    r_wy_wz__u: float
    r_y_u__wz_wy_z: float
    r2_y__wy_wz_z: float
    r2_z_u__wy: float
    r2_wy_u: float
    r2_wy_wz: float
    sign_wy_u__wz: float = 1.0

    def __post_init__(self):
        for f in ("sign_wz_z", "sign_wy_u__wz"):
            if getattr(self, f) not in (-1.0, 1.0):
                raise DomainError(f"{f} must be exactly +1 or -1")

    @classmethod
    def from_sigma(cls, sigma) -> "ProxBiasInputs":
        s = _augment(_mat(sigma))
        pc = lambda i, j, c: partial_corr(s, i, j, c)  # noqa: E731
        return cls(
            sign_wz_z=_sign(cond_cov(s, [WZ, Z], [WH])[0, 1]),
            r2_what_wz=r2(s, WH, [WZ]),
            r2_what_z=r2(s, WH, [Z]),
            r2_wz_u__wy_z=pc(WZ, U, [WY, Z]) ** 2,
            sd_y=math.sqrt(s[Y, Y]),
            sd_z=math.sqrt(s[Z, Z]),
            r_y_wz__wy_z_u=pc(Y, WZ, [WY, Z, U]),
            r2_y_u__wy_z=pc(Y, U, [WY, Z]) ** 2,
            r2_y__wy_z=r2(s, Y, [WY, Z]),
            r2_wz__wy_z=r2(s, WZ, [WY, Z]),
            r_wy_wz__u=pc(WY, WZ, [U]),
            r_y_u__wz_wy_z=pc(Y, U, [WZ, WY, Z]),
            r2_y__wy_wz_z=r2(s, Y, [WY, WZ, Z]),
            r2_z_u__wy=pc(Z, U, [WY]) ** 2,
            r2_wy_u=pc(WY, U, []) ** 2,
            r2_wy_wz=pc(WY, WZ, []) ** 2,
            sign_wy_u__wz=_sign(pc(WY, U, [WZ])),
        )


def prox_terms(inp: ProxBiasInputs) -> dict[str, float]:
    """Labeled pieces: sign, (a) scaling, (b) treatment proxy, (c) outcome proxy.

    Exact when Z does not depend on W_Y given (W_Z, U); otherwise the
    decomposition omits the contribution of that path.
    """
    a = math.sqrt(_one_minus(inp.r2_what_wz, "R^2_{W_Y_hat~W_Z}")
                  / _one_minus(inp.r2_what_z, "R^2_{W_Y_hat~Z}")
                  / _one_minus(inp.r2_wz_u__wy_z, "R^2_{W_Z~U|W_Y,Z}")) * inp.sd_y / inp.sd_z
    b = inp.r_y_wz__wy_z_u * math.sqrt(
        _one_minus(inp.r2_y_u__wy_z, "R^2_{Y~U|W_Y,Z}")
        * _one_minus(inp.r2_y__wy_z, "R^2_{Y~W_Y,Z}")
        / _one_minus(inp.r2_wz__wy_z, "R^2_{W_Z~W_Y,Z}"))
    den = inp.r_wy_wz__u**2 * (1.0 - inp.r2_wy_u) + inp.r2_wy_u - inp.r2_wy_wz
    if den <= FLOOR:
        raise DomainError(f"outcome-proxy denominator {den:.3g} is not positive")
    c = inp.sign_wy_u__wz * inp.r_wy_wz__u * inp.r_y_u__wz_wy_z * math.sqrt(
        _one_minus(inp.r2_y__wy_wz_z, "R^2_{Y~W_Y,W_Z,Z}")
        / _one_minus(inp.r2_z_u__wy, "R^2_{Z~U|W_Y}") / den)
    return {"sign": inp.sign_wz_z, "a_scaling": a, "b_treatment_proxy": b,
            "c_outcome_proxy": c, "bias": inp.sign_wz_z * a * (b - c)}


def bias_prox(inp: ProxBiasInputs) -> float:
    return prox_terms(inp)["bias"]


def prox_scaling_bounds(r2_wz_u_wy: float) -> tuple[float, float]:
    """Interval containing 1/(1 - R^2_{W_Z~U|W_Y,Z}) given R^2_{W_Z~U|W_Y}."""
    if not 0.0 <= r2_wz_u_wy < 1.0:
        raise DomainError(f"R^2 = {r2_wz_u_wy} must lie in [0, 1)")
    return 1.0, 1.0 / (1.0 - r2_wz_u_wy)


# ---------------------------------------------------------------- coefficient forms

@dataclass(frozen=True)
class StructuralCoefBias:
    """Regression-coefficient inputs of the first-line bias expressions.

    ``phi_u`` is the coefficient on W_Z when U is regressed on (W_Z, W_Y);
    ``alpha_u, alpha_wz`` come from W_Y ~ U + W_Z; ``beta_*`` from
    Y ~ Z + W_Z + W_Y + U. In the linear structural model the betas and
    alphas coincide with the structural ones.
    """
    beta_wz: float
    beta_u: float
    phi_u: float
    alpha_u: float
    alpha_wz: float
    r_z_wz__wy: float
    sd_wz__wy: float
    sd_z__wy: float
    sign_wz_z: float
    sd_wz__what: float
    sd_z__what: float

    @classmethod
    def from_sigma(cls, sigma) -> "StructuralCoefBias":
        s = _augment(_mat(sigma))
        regs = [Z, WZ, WY, U]
        beta = np.linalg.solve(s[np.ix_(regs, regs)], s[regs, Y])
        c = cond_cov(s, [WZ, U], [WY])
        alpha = np.linalg.solve(s[np.ix_([U, WZ], [U, WZ])], s[[U, WZ], WY])
        chat = cond_cov(s, [WZ, Z], [WH])
        return cls(
            beta_wz=float(beta[1]), beta_u=float(beta[3]),
            phi_u=float(c[0, 1] / c[0, 0]),
            alpha_u=float(alpha[0]), alpha_wz=float(alpha[1]),
            r_z_wz__wy=partial_corr(s, Z, WZ, [WY]),
            sd_wz__wy=math.sqrt(c[0, 0]),
            sd_z__wy=math.sqrt(cond_var(s, Z, [WY])),
            sign_wz_z=_sign(chat[0, 1]),
            sd_wz__what=math.sqrt(chat[0, 0]),
            sd_z__what=math.sqrt(chat[1, 1]),
        )


def iv_bias_coef(c: StructuralCoefBias) -> float:
    return c.sd_wz__wy / (c.r_z_wz__wy * c.sd_z__wy) * (c.beta_wz + c.beta_u * c.phi_u)


def prox_bias_coef(c: StructuralCoefBias) -> float:
    if c.alpha_u == 0:
        raise DomainError("alpha_u = 0: the outcome proxy carries no signal of U")
    return c.sign_wz_z * (c.beta_wz - c.beta_u * c.alpha_wz / c.alpha_u) * c.sd_wz__what / c.sd_z__what


# ---------------------------------------------------------------- IV vs proximal

def prox_vs_iv_ratio(r: ReducedData | ObservedMoments | np.ndarray) -> float:
    """Observable ratio of proximal to IV sensitivity to an exclusion violation.

    Values below 1 in absolute value mean the proximal estimate moves less
    per unit of direct W_Z -> Y effect.
    """
    if isinstance(r, ReducedData):
        S = weighted_cov(r.matrix(), r.weights)
    else:
        S = r.cov if isinstance(r, ObservedMoments) else np.asarray(r)
    s = _augment(S)
    chat = cond_cov(s, [WZ, Z], [s.shape[0] - 1])
    cw = cond_cov(s, [WZ, Z], [WY])
    tiny = 1e-14 * max(s[WZ, WZ], s[Z, Z])
    if min(chat[0, 0], chat[1, 1], cw[0, 0], cw[1, 1]) <= tiny:
        raise DegeneracyError("degenerate projection in the proximal/IV ratio")
    cor = cw[0, 1] / math.sqrt(cw[0, 0] * cw[1, 1])
    return (_sign(chat[0, 1]) * math.sqrt(chat[0, 0] / cw[0, 0])
            * math.sqrt(cw[1, 1] / chat[1, 1]) * cor)


# ---------------------------------------------------------------- helpers

def _sign(x: float) -> float:
    return 1.0 if x >= 0 else -1.0


def _mat(sigma) -> np.ndarray:
    return np.asarray(getattr(sigma, "matrix", sigma), dtype=float)


def _augment(s: np.ndarray) -> np.ndarray:
    """Append the fitted outcome proxy (projection of W_Y on Z, W_Z) as the last variable."""
    k = s.shape[0]
    b = np.linalg.solve(s[np.ix_([Z, WZ], [Z, WZ])], s[[Z, WZ], WY])
    row = b @ s[[Z, WZ], :]
    out = np.empty((k + 1, k + 1))
    out[:k, :k] = s
    out[k, :k] = out[:k, k] = row
    out[k, k] = b @ s[[Z, WZ], WY]
    return out


def terms_to_dict(inp) -> dict:
    return {f.name: getattr(inp, f.name) for f in fields(inp)}
