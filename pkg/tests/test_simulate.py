from dataclasses import replace

import numpy as np
import pytest

from sensa.errors import DegenerateInputError
from sensa.io_ingest import partial_out
from sensa.simulate import (PRESETS, StructuralConfig, generate, population_cov,
                            population_oracle, preset, random_config)

ZERO_COEFS = dict(beta_u=0, beta_wy=0, beta_wz=0, tau=0, gamma_u=0, gamma_wy=0,
                  gamma_wz=0, alpha_u=0, alpha_wz=0, phi_u=0)


def test_zero_coefficients_independent():
    s = population_cov(StructuralConfig(**ZERO_COEFS, sd_y=2.0))
    assert np.array_equal(s, np.diag([1.0, 1.0, 1.0, 4.0, 1.0]))
    d = generate(StructuralConfig(**ZERO_COEFS, n=20_000, seed=1))
    c = np.corrcoef(np.column_stack([d.columns[k] for k in ("y", "z", "w_z", "w_y", "u")]).T)
    assert np.abs(c - np.eye(5)).max() < 0.03


def test_deterministic():
    a = generate(StructuralConfig(n=300, seed=7, n_covariates=2))
    b = generate(StructuralConfig(n=300, seed=7, n_covariates=2))
    for k in a.columns:
        assert np.array_equal(a.columns[k], b.columns[k])
    c = generate(StructuralConfig(n=300, seed=8, n_covariates=2))
    assert not np.array_equal(a.columns["y"], c.columns["y"])


def test_structural_equations_hold():
    cfg = StructuralConfig(n=20_000, seed=2)
    c = generate(cfg).columns
    e_y = c["y"] - (cfg.beta_u * c["u"] + cfg.beta_wy * c["w_y"] + cfg.beta_wz * c["w_z"]
                    + cfg.tau * c["z"])
    e_z = c["z"] - (cfg.gamma_u * c["u"] + cfg.gamma_wy * c["w_y"] + cfg.gamma_wz * c["w_z"])
    assert np.std(e_y) == pytest.approx(cfg.sd_y, rel=0.03)
    assert abs(np.corrcoef(e_y, e_z)[0, 1]) < 0.03
    assert abs(np.corrcoef(e_y, c["u"])[0, 1]) < 0.03


def test_preset_validity():
    for name, strategy in [("valid-soo", "soo"), ("valid-iv", "iv"), ("valid-prox", "prox")]:
        o = population_oracle(preset(name))
        assert abs(o.bias[strategy]) < 1e-12, name
    assert set(PRESETS) == {"confounded", "valid-soo", "valid-iv", "valid-prox"}
    with pytest.raises(KeyError):
        preset("nope")


def test_oracle_soo_coefficient_form():
    for seed in range(20):
        cfg = random_config(np.random.default_rng(seed))
        o = population_oracle(cfg)
        assert o.coef_form["soo"] == pytest.approx(o.bias["soo"], rel=1e-9, abs=1e-12)


def test_iv_coefficient_form_example():
    o = population_oracle(StructuralConfig(beta_wz=0.2, phi_u=0.3, beta_u=0.5))
    assert o.coef_form["iv"] == pytest.approx(o.bias["iv"], abs=1e-12)


def test_singular_config_rejected():
    with pytest.raises(DegenerateInputError):
        StructuralConfig(sd_z=0.0)


def test_moment_convergence_rate():
    cfg = StructuralConfig(n_covariates=0)
    pop = population_cov(cfg)[:4, :4]
    errs = []
    for n in (1_000, 10_000, 100_000):
        e = []
        for rep in range(20):
            r = partial_out(generate(replace(cfg, n=n, seed=1000 * rep + n), with_u=False))
            e.append(np.abs(np.cov(r.matrix().T, bias=True) - pop).max())
        errs.append(np.mean(e))
    ratios = np.array(errs[1:]) / np.array(errs[:-1])
    assert np.all((ratios > 0.2) & (ratios < 0.5)), ratios


def test_binary_treatment_mode():
    d = generate(StructuralConfig(n=200, seed=1, binary_z=True))
    assert set(np.unique(d.columns["z"])) <= {0.0, 1.0}
