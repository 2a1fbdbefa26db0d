import numpy as np
import pytest

from sensa.benchmark import B1_COLUMNS, benchmark, benchmark_rho
from sensa.errors import CollinearityError, SchemaError
from sensa.io_ingest import Dataset, RoleSchema, moments, partial_out, standardize
from sensa.linalg_core import partial_corr
from sensa.simulate import StructuralConfig, generate


def _with_noise(cfg, extra):
    d = generate(cfg, with_u=False)
    rng = np.random.default_rng(99)
    cols = dict(d.columns)
    for name, fn in extra.items():
        cols[name] = fn(cols, rng)
    schema = RoleSchema("y", "z", "w_z", "w_y", d.schema.covariates + tuple(extra))
    return Dataset(cols, schema)


def test_noise_covariate_gives_small_totals():
    # no hidden confounding and all strategies valid: a noise benchmark adds nothing
    cfg = StructuralConfig(beta_u=0, gamma_u=0, alpha_u=0, phi_u=0, beta_wz=0, alpha_wz=0,
                           gamma_wy=0, n=20_000, seed=5, n_covariates=1)
    d = _with_noise(cfg, {"noise": lambda c, r: r.standard_normal(len(c["y"]))})
    rows = {r.covariate: r for r in benchmark(d)}
    row = rows["noise"]
    assert row.error is None
    assert all(v < 2e-3 for v in row.totals.values())
    assert abs(row.delta_tau) < 0.01
    assert list(row.components) == list(B1_COLUMNS)
    assert row.totals["soo"] == pytest.approx(row.components["soo-z"]**2 + row.components["soo-y"]**2)


def test_rho_hat_are_leave_one_out_partial_correlations():
    cfg = StructuralConfig(n=3000, seed=6, n_covariates=2)
    d = standardize(generate(cfg, with_u=False))
    rho, _ = benchmark_rho(d, "x1")
    # direct: residualize everything on x2 then take nested partial correlations
    red = partial_out(d, drop_covariate="x1", extra=("x1",))
    M = np.column_stack([red.matrix(), red.extra["x1"]])
    S = np.cov(M.T, bias=True)
    want = [partial_corr(S, 4, 0, []), partial_corr(S, 4, 1, [0]),
            partial_corr(S, 4, 2, [0, 1]), partial_corr(S, 4, 3, [0, 1, 2])]
    assert np.allclose(rho.as_array(), want, atol=1e-10)


def test_delta_tau_matches_refit():
    from sensa.estimators import estimate_soo
    cfg = StructuralConfig(n=2000, seed=7, n_covariates=2)
    d = standardize(generate(cfg, with_u=False))
    row = {r.covariate: r for r in benchmark(d, standardized=True)}["x2"]
    full = estimate_soo(partial_out(d)).tau
    drop = estimate_soo(partial_out(d, drop_covariate="x2")).tau
    assert row.delta_tau == pytest.approx(full - drop, abs=1e-12)


def test_failing_row_does_not_stop_others(monkeypatch):
    import sensa.benchmark as bm
    cfg = StructuralConfig(n=500, seed=8, n_covariates=3)
    d = generate(cfg, with_u=False)
    real = bm.benchmark_rho

    def flaky(ds, cov):
        if cov == "x2":
            raise CollinearityError("design is rank deficient", columns=("x3",))
        return real(ds, cov)
    monkeypatch.setattr(bm, "benchmark_rho", flaky)
    rows = {r.covariate: r for r in benchmark(d)}
    assert rows["x2"].error.startswith("CollinearityError")
    assert rows["x2"].totals == {} and rows["x2"].rho_hat is None
    assert rows["x1"].error is None and rows["x3"].totals


def test_needs_covariates():
    d = generate(StructuralConfig(n=100), with_u=False)
    with pytest.raises(SchemaError):
        benchmark(d)
    assert moments(partial_out(d)).n == 100
