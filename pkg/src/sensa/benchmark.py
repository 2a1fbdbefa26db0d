"""Covariate benchmarking: treat each observed covariate as if it were U."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import SchemaError, SensitivityError
from .estimators import estimate_soo
from .io_ingest import Dataset, moments, partial_out, standardize, weighted_cov
from .sigma import Rho, rho_from_sigma, sigma_from_rho, violations

B1_COLUMNS = ("soo-z", "soo-y", "iv-exog", "iv-excl", "prox-y-z", "prox-y-wz")


@dataclass
class BenchmarkRow:
    covariate: str
    rho_hat: Rho | None = None
    delta_tau: float | None = None
    totals: dict = field(default_factory=dict)
    components: dict = field(default_factory=dict)
    error: str | None = None

    def to_dict(self) -> dict:
        return {"covariate": self.covariate,
                "rho_hat": None if self.rho_hat is None else asdict(self.rho_hat),
                "delta_tau": self.delta_tau, "totals": self.totals,
                "components": self.components, "error": self.error}


def benchmark_rho(d: Dataset, covariate: str) -> tuple[Rho, float]:
    """Leave-one-out partial correlations of ``covariate`` and tau_soo without it."""
    red = partial_out(d, drop_covariate=covariate, extra=(covariate,))
    x = red.extra[covariate]
    cols = np.column_stack([red.matrix(), x])
    s = weighted_cov(cols, red.weights)
    sd = np.sqrt(np.diag(s))
    s = s / np.outer(sd, sd)
    return rho_from_sigma(s), estimate_soo(red).tau


def benchmark(d: Dataset, standardized: bool = False) -> list[BenchmarkRow]:
    """One row per covariate; failures are recorded on the row, not raised.

    ``standardized=True`` skips the outcome/treatment rescaling (use when
    ``d`` already went through ``standardize``).
    """
    if not d.schema.covariates:
        raise SchemaError("benchmarking needs at least one covariate")
    ds = d if standardized else standardize(d)
    full = partial_out(ds)
    m = moments(full)
    tau_full = estimate_soo(full).tau
    rows = []
    for cov in ds.schema.covariates:
        row = BenchmarkRow(cov)
        try:
            rho, tau_drop = benchmark_rho(ds, cov)
            row.rho_hat = rho
            row.delta_tau = tau_full - tau_drop
            s = sigma_from_rho(m, rho)
            comps = {}
            for st in ("soo", "iv", "prox"):
                v = violations(s, st)
                row.totals[st] = v.sq_norm
                comps.update(v.as_dict())
            row.components = {k: comps[k] for k in B1_COLUMNS}
        except SensitivityError as exc:
            row.error = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows
