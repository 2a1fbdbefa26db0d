"""Simulator for the linear structural model and its population oracle.

    W_Z = phi_u U + f_wz(X) + e_wz
    W_Y = alpha_u U + alpha_wz W_Z + f_wy(X) + e_wy
    Z   = gamma_u U + gamma_wy W_Y + gamma_wz W_Z + f_z(X) + e_z
    Y   = beta_u U + beta_wy W_Y + beta_wz W_Z + tau Z + f_y(X) + e_y

All noises and U are independent Gaussians; X is standard normal and the f
maps are linear with coefficients drawn from the seed.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .bias import (IvBiasInputs, ProxBiasInputs, SooParams, StructuralCoefBias,
                   bias_iv, bias_prox, bias_soo, iv_bias_coef, prox_bias_coef,
                   soo_sd_ratio)
from .errors import DegenerateInputError
from .estimators import taus_from_moments
from .io_ingest import U, WY, WZ, Y, Z, Dataset, RoleSchema
from .linalg_core import cond_var, partial_corr


@dataclass(frozen=True)
class StructuralConfig:
    beta_u: float = 0.5
    beta_wy: float = 0.3
    beta_wz: float = 0.2
    tau: float = 0.5
    gamma_u: float = 0.6
    gamma_wy: float = 0.3
    gamma_wz: float = 0.5
    alpha_u: float = 0.8
    alpha_wz: float = 0.2
    phi_u: float = 0.8
    sd_y: float = 1.0
    sd_z: float = 1.0
    sd_wy: float = 1.0
    sd_wz: float = 1.0
    sd_u: float = 1.0
    n_covariates: int = 0
    covariate_scale: float = 0.5
    n: int = 1000
    seed: int = 0
    binary_z: bool = False

    def __post_init__(self):
        for k in ("sd_y", "sd_z", "sd_wy", "sd_wz", "sd_u"):
            if not getattr(self, k) > 0:
                raise DegenerateInputError(f"{k} must be positive")
        if self.n < 1 or self.n_covariates < 0:
            raise ValueError("n must be positive and n_covariates nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS = {
    "confounded": {},
    "valid-soo": {"beta_u": 0.0},
    # W_Y is a collider of U and W_Z, so alpha_wz must vanish as well
    "valid-iv": {"phi_u": 0.0, "beta_wz": 0.0, "alpha_wz": 0.0},
    "valid-prox": {"gamma_wy": 0.0, "alpha_wz": 0.0, "beta_wz": 0.0},
}


def preset(name: str, **overrides) -> StructuralConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return StructuralConfig(**{**PRESETS[name], **overrides})


def _coef_matrix(cfg: StructuralConfig) -> np.ndarray:
    """B with V = B V + D e in order (W_Z, W_Y, Z, Y, U)."""
    B = np.zeros((5, 5))
    B[WZ, U] = cfg.phi_u
    B[WY, U], B[WY, WZ] = cfg.alpha_u, cfg.alpha_wz
    B[Z, U], B[Z, WY], B[Z, WZ] = cfg.gamma_u, cfg.gamma_wy, cfg.gamma_wz
    B[Y, U], B[Y, WY], B[Y, WZ], B[Y, Z] = cfg.beta_u, cfg.beta_wy, cfg.beta_wz, cfg.tau
    return B


def _noise_sd(cfg):
    return np.array([cfg.sd_wz, cfg.sd_wy, cfg.sd_z, cfg.sd_y, cfg.sd_u])


def population_cov(cfg: StructuralConfig) -> np.ndarray:
    """Exact 5x5 covariance of (W_Z, W_Y, Z, Y, U) net of covariates."""
    A = np.linalg.inv(np.eye(5) - _coef_matrix(cfg))
    D = _noise_sd(cfg)
    return (A * D**2) @ A.T


def generate(cfg: StructuralConfig, with_u: bool = True) -> Dataset:
    """Draw a dataset; the hidden confounder is kept as column ``u``."""
    rng = np.random.default_rng(cfg.seed)
    n, p = cfg.n, cfg.n_covariates
    X = rng.standard_normal((n, p))
    F = rng.normal(scale=cfg.covariate_scale, size=(p, 4))
    e = rng.standard_normal((n, 5)) * _noise_sd(cfg)
    u = e[:, U]
    fx = X @ F
    w_z = cfg.phi_u * u + fx[:, 0] + e[:, WZ]
    w_y = cfg.alpha_u * u + cfg.alpha_wz * w_z + fx[:, 1] + e[:, WY]
    z = cfg.gamma_u * u + cfg.gamma_wy * w_y + cfg.gamma_wz * w_z + fx[:, 2] + e[:, Z]
    if cfg.binary_z:
        z = (z > 0).astype(float)
    y = (cfg.beta_u * u + cfg.beta_wy * w_y + cfg.beta_wz * w_z + cfg.tau * z
         + fx[:, 3] + e[:, Y])
    cols = {"y": y, "z": z, "w_z": w_z, "w_y": w_y}
    names = [f"x{k + 1}" for k in range(p)]
    for k, name in enumerate(names):
        cols[name] = X[:, k]
    if with_u:
        cols["u"] = u
    schema = RoleSchema("y", "z", "w_z", "w_y", tuple(names), standardize_yz=False)
    return Dataset(cols, schema)


@dataclass(frozen=True)
class PopulationOracle:
    sigma: np.ndarray
    tau: float
    taus: dict
    bias: dict                 # exact: tau_strategy - tau
    formula: dict = field(default_factory=dict)
    coef_form: dict = field(default_factory=dict)


def population_oracle(cfg: StructuralConfig, formulas: bool = True) -> PopulationOracle:
    s = population_cov(cfg)
    ev = np.linalg.eigvalsh(s)
    if not ev[0] > 1e-12 * ev[-1]:
        raise DegenerateInputError("configuration implies a singular covariance")
    taus = taus_from_moments(s)
    bias = {k: v - cfg.tau for k, v in taus.items()}
    formula, coef = {}, {}
    if formulas:
        sy, sz = soo_sd_ratio(s)
        p = SooParams(partial_corr(s, Y, U, [Z, WZ, WY]), partial_corr(s, Z, U, [WZ, WY]))
        formula["soo"] = bias_soo(p, sy, sz)
        formula["iv"] = bias_iv(IvBiasInputs.from_sigma(s))
        formula["prox"] = bias_prox(ProxBiasInputs.from_sigma(s))
        c = StructuralCoefBias.from_sigma(s)
        coef["soo"] = cfg.beta_u * cfg.gamma_u * cond_var(s, U, [WZ, WY]) / cond_var(s, Z, [WZ, WY])
        coef["iv"] = iv_bias_coef(c)
        coef["prox"] = prox_bias_coef(c)
    return PopulationOracle(s, cfg.tau, taus, bias, formula, coef)


def random_config(rng: np.random.Generator, scale: float = 0.8, **fixed) -> StructuralConfig:
    """Random coefficients with IV relevance and proxy strength kept away from 0."""
    def coef():
        return float(rng.uniform(-scale, scale))

    def strong():
        return float(rng.choice([-1, 1]) * rng.uniform(0.3, scale + 0.2))

    kw = dict(beta_u=coef(), beta_wy=coef(), beta_wz=coef(), tau=coef(),
              gamma_u=coef(), gamma_wy=coef(), gamma_wz=strong(),
              alpha_u=strong(), alpha_wz=coef(), phi_u=coef(),
              sd_y=float(rng.uniform(0.5, 1.5)), sd_z=float(rng.uniform(0.5, 1.5)),
              sd_wy=float(rng.uniform(0.5, 1.5)), sd_wz=float(rng.uniform(0.5, 1.5)))
    kw.update(fixed)
    return StructuralConfig(**kw)


__all__ = ["StructuralConfig", "PRESETS", "preset", "population_cov", "generate",
           "PopulationOracle", "population_oracle", "random_config", "replace"]
