"""Fractional-weighted (Dirichlet) bootstrap of the whole pipeline."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Mapping

import numpy as np

from .benchmark import benchmark
from .errors import BootstrapError, SensitivityError
from .estimators import estimate_all
from .io_ingest import Dataset, moments, partial_out, standardize
from .trv import TrvOptions, trv

log = logging.getLogger(__name__)

Statistic = Callable[[Dataset], "float | Mapping[str, float]"]


@dataclass(frozen=True)
class BootstrapSummary:
    statistic: str
    point: float
    mad: float
    B: int
    seed: int
    failures: int = 0
    median: float = float("nan")

    def to_dict(self) -> dict:
        return asdict(self)


def dirichlet_weights(n: int, rng: np.random.Generator) -> np.ndarray:
    """Flat Dirichlet draw rescaled to sum to n."""
    return rng.dirichlet(np.ones(n)) * n


def mad(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.median(np.abs(x - np.median(x))))


def _flatten(name, value) -> dict[str, float]:
    if isinstance(value, Mapping):
        return {f"{name}.{k}": float(v) for k, v in value.items()}
    return {name: float(value)}


def evaluate(d: Dataset, statistics: Mapping[str, Statistic]) -> dict[str, float]:
    out = {}
    for name, fn in statistics.items():
        out.update(_flatten(name, fn(d)))
    return out


def _replicate(args):
    d, statistics, seed_seq, scheme = args
    if scheme == "equal":
        w = np.ones(d.n)
    else:
        w = dirichlet_weights(d.n, np.random.default_rng(seed_seq))
    try:
        return evaluate(d.with_weights(w), statistics), None
    except SensitivityError as exc:
        return None, f"{type(exc).__name__}: {exc}"


def bootstrap(d: Dataset, statistics: Mapping[str, Statistic], B: int, seed: int,
              weight_scheme: str = "dirichlet", workers: int = 1,
              max_failure_rate: float = 0.2) -> list[BootstrapSummary]:
    """Bootstrap ``statistics`` with B Dirichlet-weighted replicates.

    Each statistic maps a (weighted) ``Dataset`` to a float or a dict of
    floats. A replicate in which any statistic raises a domain error is
    dropped and counted; more than ``max_failure_rate`` dropped raises
    ``BootstrapError``. Results depend only on (data, B, seed), not on
    ``workers``.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    if weight_scheme not in ("dirichlet", "equal"):
        raise ValueError(f"unknown weight scheme {weight_scheme!r}")
    try:
        point = evaluate(d, statistics)
    except SensitivityError as exc:
        # every replicate shares the defect; let them fail and be counted
        log.warning("point evaluation failed: %s", exc)
        point = None
    seeds = np.random.SeedSequence(seed).spawn(B)
    jobs = [(d, statistics, s, weight_scheme) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_replicate, jobs, chunksize=max(1, B // (4 * workers))))
    else:
        results = [_replicate(j) for j in jobs]
    ok = [r for r, err in results if r is not None]
    errs = [err for r, err in results if r is None]
    if len(errs) > max_failure_rate * B:
        raise BootstrapError(
            f"{len(errs)} of {B} replicates failed (first: {errs[0]})", failures=len(errs), B=B)
    if errs:
        log.warning("%d of %d bootstrap replicates failed and were dropped", len(errs), B)
    if point is None:
        point = {k: float("nan") for k in ok[0]}
    out = []
    for name, val in point.items():
        xs = np.array([r[name] for r in ok])
        out.append(BootstrapSummary(name, val, mad(xs), B, seed, len(errs), float(np.median(xs))))
    return out


class PipelineStatistic:
    """Estimates, TRVs at fixed thresholds and benchmark totals on one dataset.

    Thresholds ``b`` are held fixed across replicates (resolved once on the
    full data by the caller).
    """

    def __init__(self, b: Mapping[str, float] | None = None,
                 trv_options: TrvOptions | None = None, benchmarks: bool = True):
        self.b = dict(b or {})
        self.trv_options = trv_options or TrvOptions(starts=16)
        self.benchmarks = benchmarks

    def __call__(self, d: Dataset) -> dict[str, float]:
        ds = standardize(d)
        red = partial_out(ds)
        m = moments(red)
        est = estimate_all(red)
        out = {f"tau_{k}": v for k, v in est.taus().items()}
        for st, b in self.b.items():
            res = trv(st, b, m, est, self.trv_options)
            out[f"trv_{st}"] = res.trv
            for k, v in (res.allocations or {}).items():
                out[f"ra_{k}"] = v
        if self.benchmarks and ds.schema.covariates:
            for row in benchmark(ds, standardized=True):
                if row.error:
                    raise BootstrapError(f"benchmark {row.covariate}: {row.error}")
                for st, v in row.totals.items():
                    out[f"bench_{row.covariate}_{st}"] = v
        return out
