"""CSV ingestion, role schemas, standardization and covariate partialling."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import (DegenerateInputError, DimensionError, ParseError,
                     SchemaError)
from .linalg_core import cholesky_lower, residualize

MISSING = {"", "na", "n/a", "nan", "null", "none", "."}

# order of the observed block everywhere downstream
LABELS = ("w_z", "w_y", "z", "y")
WZ, WY, Z, Y, U = range(5)


@dataclass(frozen=True)
class RoleSchema:
    outcome: str
    treatment: str
    treatment_proxy: str
    outcome_proxy: str
    covariates: tuple[str, ...] = ()
    standardize_yz: bool = True

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        roles = [self.outcome, self.treatment, self.treatment_proxy, self.outcome_proxy]
        if len(set(roles)) != 4:
            raise SchemaError(f"role columns must be distinct, got {roles}")
        clash = set(roles) & set(self.covariates)
        if clash:
            raise SchemaError(f"covariates overlap role columns: {sorted(clash)}")
        if len(set(self.covariates)) != len(self.covariates):
            raise SchemaError("duplicate covariate names")

    @property
    def columns(self) -> tuple[str, ...]:
        return (self.outcome, self.treatment, self.treatment_proxy,
                self.outcome_proxy, *self.covariates)

    @classmethod
    def from_dict(cls, d: Mapping) -> "RoleSchema":
        need = ("outcome", "treatment", "treatment_proxy", "outcome_proxy")
        missing = [k for k in need if k not in d]
        if missing:
            raise SchemaError(f"schema missing key(s): {missing}")
        return cls(d["outcome"], d["treatment"], d["treatment_proxy"], d["outcome_proxy"],
                   tuple(d.get("covariates", ())), bool(d.get("standardize_yz", True)))

    def to_dict(self) -> dict:
        return {"outcome": self.outcome, "treatment": self.treatment,
                "treatment_proxy": self.treatment_proxy, "outcome_proxy": self.outcome_proxy,
                "covariates": list(self.covariates), "standardize_yz": self.standardize_yz}


def load_schema(path) -> RoleSchema:
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    return RoleSchema.from_dict(d)


@dataclass(frozen=True)
class Dataset:
    """Column-major numeric table tied to a role schema.

    ``weights`` is ``None`` for unweighted data, otherwise nonnegative and
    summing to ``n``.
    """
    columns: Mapping[str, np.ndarray]
    schema: RoleSchema
    weights: np.ndarray | None = None
    scales: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        n = self.n
        for name in self.schema.columns:
            if name not in self.columns:
                raise SchemaError(f"column {name!r} not in dataset")
            col = self.columns[name]
            if col.shape != (n,):
                raise DimensionError(f"column {name!r} has shape {col.shape}, expected ({n},)")
            if not np.all(np.isfinite(col)):
                raise ParseError(f"column {name!r} has non-finite values")
        need = n_regressors(self.schema) + 2
        if n < need:
            raise DimensionError(f"n = {n} rows but at least {need} are required")
        if self.weights is not None:
            w = self.weights
            if w.shape != (n,) or np.any(w < 0) or not np.isfinite(w).all():
                raise DimensionError("weights must be a nonnegative vector of length n")

    @property
    def n(self) -> int:
        return len(next(iter(self.columns.values())))

    def w(self) -> np.ndarray:
        return np.ones(self.n) if self.weights is None else self.weights

    def with_weights(self, weights) -> "Dataset":
        return replace(self, weights=None if weights is None else np.asarray(weights, float))


def n_regressors(schema: RoleSchema) -> int:
    # intercept + covariates + (Z, W_Z, W_Y)
    return 1 + len(schema.covariates) + 3


def load_dataset(path, schema: RoleSchema) -> Dataset:
    """Read a CSV with a header row; rows missing any needed value are dropped."""
    path = Path(path)
    want = schema.columns
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        for name in want:
            if name not in header:
                raise SchemaError(f"{path}: column {name!r} not found in header")
        pos = [header.index(name) for name in want]
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            vals = []
            for name, p in zip(want, pos):
                cell = rec[p].strip() if p < len(rec) else ""
                if cell.lower() in MISSING:
                    vals = None
                    break
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(
                        f"{path}: row {lineno}, column {name!r}: cannot parse {cell!r}") from None
                if not math.isfinite(v):
                    raise ParseError(f"{path}: row {lineno}, column {name!r}: non-finite {cell!r}")
                vals.append(v)
            if vals is not None:
                rows.append(vals)
    arr = np.array(rows, dtype=float).reshape(len(rows), len(want))
    cols = {name: arr[:, k].copy() for k, name in enumerate(want)}
    return Dataset(cols, schema)


def _wmean_sd(x, w):
    mu = w @ x / w.sum()
    return mu, math.sqrt(w @ (x - mu) ** 2 / w.sum())


def standardize(d: Dataset) -> Dataset:
    """Divide outcome and treatment by their weighted sds (no centering)."""
    if not d.schema.standardize_yz:
        return d
    w = d.w()
    cols = dict(d.columns)
    scales = dict(d.scales)
    for name in (d.schema.outcome, d.schema.treatment):
        _, sd = _wmean_sd(cols[name], w)
        if not sd > 1e-12 * max(1.0, float(np.abs(cols[name]).max())):
            raise DegenerateInputError(f"column {name!r} has zero variance")
        cols[name] = cols[name] / sd
        scales[name] = sd
    return replace(d, columns=cols, scales=scales)


@dataclass(frozen=True)
class ReducedData:
    """Residualized, weighted-centered columns."""
    y: np.ndarray
    z: np.ndarray
    w_z: np.ndarray
    w_y: np.ndarray
    weights: np.ndarray
    p_x: int
    extra: Mapping[str, np.ndarray] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.y)

    def matrix(self) -> np.ndarray:
        """Columns stacked in (W_Z, W_Y, Z, Y) order."""
        return np.column_stack([self.w_z, self.w_y, self.z, self.y])


def covariate_design(d: Dataset, drop_covariate: str | None = None):
    covs = list(d.schema.covariates)
    if drop_covariate is not None:
        if drop_covariate not in covs:
            raise SchemaError(f"{drop_covariate!r} is not a covariate")
        covs.remove(drop_covariate)
    X = np.column_stack([np.ones(d.n)] + [d.columns[c] for c in covs])
    return X, ["(intercept)"] + covs


def partial_out(d: Dataset, drop_covariate: str | None = None,
                extra: tuple[str, ...] = ()) -> ReducedData:
    """Residualize Y, Z, W_Z, W_Y (and any ``extra`` columns) on the covariate design."""
    s = d.schema
    X, names = covariate_design(d, drop_covariate)
    targets = [s.outcome, s.treatment, s.treatment_proxy, s.outcome_proxy, *extra]
    Y = np.column_stack([d.columns[t] for t in targets])
    w = d.w()
    res, _ = residualize(X, Y, w, names)
    ex = {name: res[:, 4 + k] for k, name in enumerate(extra)}
    return ReducedData(y=res[:, 0], z=res[:, 1], w_z=res[:, 2], w_y=res[:, 3],
                       weights=w, p_x=X.shape[1], extra=ex)


@dataclass(frozen=True)
class ObservedMoments:
    """4x4 covariance over (W_Z, W_Y, Z, Y) with divisor n."""
    cov: np.ndarray
    n: float
    p_x: int = 1

    @cached_property
    def sd(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    @cached_property
    def corr(self) -> np.ndarray:
        return self.cov / np.outer(self.sd, self.sd)

    @cached_property
    def chol_corr(self) -> np.ndarray:
        return cholesky_lower(self.corr)


def check_pd(S, what="moment matrix"):
    ev = np.linalg.eigvalsh(S)
    if not ev[0] > 1e-12 * ev[-1]:
        raise DegenerateInputError(
            f"{what} is not positive definite (eigenvalues {ev[0]:.3g} .. {ev[-1]:.3g})")


def weighted_cov(X, w) -> np.ndarray:
    """Covariance with divisor sum(w). Columns are assumed centered."""
    S = (X * w[:, None]).T @ X / w.sum()
    return (S + S.T) / 2


def moments(r: ReducedData) -> ObservedMoments:
    S = weighted_cov(r.matrix(), r.weights)
    check_pd(S)
    return ObservedMoments(S, float(r.weights.sum()), r.p_x)
