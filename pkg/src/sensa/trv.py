"""Total robustness values, minimal-norm confounders and robustness allocations.

The bias of every strategy depends on rho only through the SOO bias, which
is a function of (r3, r4). Under equal confounding r4 = s * r3, so the bias
constraint fixes s and |r3| in closed form; what remains is a search over
(r1, r2) and the sign of r3. That search is done with multi-start
Nelder-Mead through a tanh box transform.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .errors import (InfeasibleError, OptimizationError, SensitivityError,
                     UndefinedAllocationError)
from .estimators import as_taus
from .io_ingest import ObservedMoments
from .bias import soo_sd_ratio
from .sigma import (BOUND, COMPONENT_NAMES, Rho, bias_at, sigma_from_rho,
                    violations)


@dataclass(frozen=True)
class TrvOptions:
    starts: int = 64
    constraint_tol: float = 1e-6     # on |Bias - b|
    ftol: float = 1e-10
    xtol: float = 1e-4             # NM stops only when ftol is met as well
    max_iter: int = 500
    norm_tol: float = 1e-6           # relative slack on ||A||^2 when searching rho*
    bound: float = BOUND
    seed: int = 0

    def __post_init__(self):
        if self.starts < 1:
            raise ValueError("starts must be >= 1")
        if min(self.constraint_tol, self.ftol, self.xtol, self.norm_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.bound < 1:
            raise ValueError("bound must lie in (0, 1)")


@dataclass
class TrvResult:
    strategy: str
    b: float
    trv: float
    rho_min: Rho
    rho_star: Rho | None = None
    allocations: dict | None = None
    components: dict = field(default_factory=dict)
    bias_residual: float = 0.0
    start_objectives: list = field(default_factory=list)
    closed_form: float | None = None
    options: TrvOptions = field(default_factory=TrvOptions)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy, "b": self.b, "trv": self.trv,
            "rho_min": asdict(self.rho_min),
            "rho_star": None if self.rho_star is None else asdict(self.rho_star),
            "allocations": self.allocations, "components": self.components,
            "bias_residual": self.bias_residual, "closed_form": self.closed_form,
            "n_starts": len(self.start_objectives),
            "best_start_objectives": sorted(self.start_objectives)[:5],
        }


def _soo_gap(strategy, b, taus):
    # SOO bias needed so that Bias(strategy) = b
    return b - taus[strategy] + taus["soo"]


def required_r3(strategy: str, b: float, m: ObservedMoments, estimates,
                bound: float = BOUND) -> tuple[float, float]:
    """|r3| and the sign s = sign(r3 r4) that produce bias ``b`` with r4 = s r3.

    Raises ``InfeasibleError`` when the needed confounding exceeds ``bound``.
    """
    taus = as_taus(estimates)
    g = _soo_gap(strategy, b, taus)
    sy, sz = soo_sd_ratio(m)
    k = sy / sz
    f = abs(g) / k
    v = (-f * f + math.sqrt(f**4 + 4 * f * f)) / 2
    reach = k * bound**2 / math.sqrt(1 - bound**2)
    if math.sqrt(v) > bound:
        lo = taus[strategy] - taus["soo"] - reach
        hi = taus[strategy] - taus["soo"] + reach
        raise InfeasibleError(
            f"bias {b:g} for {strategy} is out of reach with |r| <= {bound}; "
            f"achievable range is [{lo:.6g}, {hi:.6g}]", achievable=(lo, hi))
    return math.sqrt(v), (1.0 if g >= 0 else -1.0)


def soo_trv_closed_form(b: float, m: ObservedMoments) -> float:
    sy, sz = soo_sd_ratio(m)
    f = abs(b) * sz / sy
    return 2 * (-f * f + math.sqrt(f**4 + 4 * f * f)) / 2


def _rho(x, r3, s, bound):
    r1, r2 = bound * np.tanh(x)
    return Rho(float(r1), float(r2), r3, s * r3)


def _atanh(r, bound):
    return np.arctanh(np.clip(np.asarray(r) / bound, -0.999999, 0.999999))


def trv(strategy: str, b: float, m: ObservedMoments, estimates,
        opts: TrvOptions | None = None, with_rho_star: bool = True) -> TrvResult:
    """Minimum squared assumption violation consistent with bias ``b``.

    Parameters
    ----------
    strategy : {"soo", "iv", "prox"}
    b : float
        Target bias in the units of the (standardized) outcome. Signed:
        ``Bias(strategy, rho) = b`` is imposed.
    m : ObservedMoments
    estimates : EstimateSet or mapping of point estimates
    opts : TrvOptions
    """
    opts = opts or TrvOptions()
    if strategy not in COMPONENT_NAMES:
        raise ValueError(f"unknown strategy {strategy!r}")
    taus = as_taus(estimates)
    r3abs, s = required_r3(strategy, b, m, taus, opts.bound)

    sob = qmc.Sobol(d=3, scramble=True, seed=opts.seed)
    pts = sob.random(opts.starts)
    best = None
    trace = []
    for p in pts:
        sgn = 1.0 if p[2] < 0.5 else -1.0
        r3 = sgn * r3abs
        x0 = _atanh(0.95 * (2 * p[:2] - 1), opts.bound)

        def f(x, r3=r3):
            try:
                return violations(sigma_from_rho(m, _rho(x, r3, s, opts.bound)), strategy).sq_norm
            except SensitivityError:
                return np.inf

        res = minimize(f, x0, method="Nelder-Mead",
                       options={"xatol": opts.xtol, "fatol": opts.ftol,
                                "maxiter": opts.max_iter, "maxfev": 4 * opts.max_iter})
        trace.append(float(res.fun))
        if np.isfinite(res.fun) and (best is None or res.fun < best[0]):
            best = (float(res.fun), res.x, r3)
    if best is None:
        raise OptimizationError(f"no start converged for {strategy} (b = {b:g})")
    val, x, r3 = best
    rmin = _rho(x, r3, s, opts.bound)
    out = TrvResult(strategy, b, val, rmin, start_objectives=trace, options=opts)
    out.bias_residual = bias_at(strategy, m, taus, rmin) - b
    if abs(out.bias_residual) > opts.constraint_tol:
        raise OptimizationError(f"bias constraint violated by {out.bias_residual:.3g}")
    if strategy == "soo":
        out.closed_form = soo_trv_closed_form(b, m)
    if with_rho_star:
        out.rho_star = rho_star(strategy, out, m, taus, opts)
        out.components = violations(sigma_from_rho(m, out.rho_star), strategy).as_dict()
        try:
            out.allocations = robustness_allocation(strategy, out.rho_star, m)
        except UndefinedAllocationError:
            out.allocations = None
    return out


def rho_star(strategy: str, res: TrvResult, m: ObservedMoments, estimates,
             opts: TrvOptions | None = None) -> Rho:
    """Smallest-norm rho that still attains the TRV (within relative ``norm_tol``)."""
    opts = opts or res.options
    target = res.trv
    slack = opts.norm_tol * target + 1e-15
    r3, r4 = res.rho_min.r3, res.rho_min.r4
    s = 1.0 if r3 * r4 >= 0 else -1.0
    scale = max(target, 1e-12)

    def sqn(rho):
        return violations(sigma_from_rho(m, rho), strategy).sq_norm

    def obj(x, r3):
        try:
            rho = _rho(x, r3, s, opts.bound)
            excess = max(0.0, sqn(rho) - target - slack) / scale
        except SensitivityError:
            return np.inf
        return rho.r1**2 + rho.r2**2 + 1e6 * excess**2

    best = res.rho_min
    seeds = [(_atanh([best.r1, best.r2], opts.bound), r3),
             (np.zeros(2), r3), (np.zeros(2), -r3)]
    for x0, r3_ in seeds:
        out = minimize(obj, x0, args=(r3_,), method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 2000})
        cand = _rho(out.x, r3_, s, opts.bound)
        try:
            ok = sqn(cand) <= target + slack
        except SensitivityError:
            ok = False
        if ok and cand.norm < best.norm - 1e-12:
            best = cand
    return best


def robustness_allocation(strategy: str, rho_star: Rho, m: ObservedMoments,
                          tol: float = 1e-12) -> dict[str, float]:
    v = violations(sigma_from_rho(m, rho_star), strategy)
    tot = v.sq_norm
    if tot <= tol:
        raise UndefinedAllocationError(f"TRV = {tot:.3g}: allocation undefined")
    return {name: c * c / tot for name, c in zip(v.names, v.components)}


def resolve_b(rule: str | float, estimate) -> float:
    """Turn a CLI-style bias rule into a signed threshold.

    ``"2se"`` gives ``sign(tau) * 2 * se`` (a bias that shrinks the estimate
    toward zero), ``"estimate"`` gives ``tau`` itself, and a number is taken
    literally.
    """
    if isinstance(rule, (int, float)):
        return float(rule)
    text = str(rule).strip().lower()
    sgn = 1.0 if estimate.tau >= 0 else -1.0
    if text == "estimate":
        return float(estimate.tau)
    if text.endswith("se"):
        mult = float(text[:-2]) if text[:-2] else 1.0
        return sgn * mult * estimate.se
    return float(text)


def trv_all(m: ObservedMoments, estimates, b: Mapping[str, float],
            opts: TrvOptions | None = None) -> dict[str, TrvResult]:
    return {st: trv(st, b[st], m, estimates, opts) for st in b}
