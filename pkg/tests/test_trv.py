import math

import numpy as np
import pytest

from conftest import grid_trv, random_instance
from sensa.errors import InfeasibleError, UndefinedAllocationError
from sensa.estimators import Estimate
from sensa.estimators import taus_from_moments
from sensa.io_ingest import ObservedMoments
from sensa.sigma import ZERO, bias_at
from sensa.simulate import population_cov, preset
from sensa.trv import (TrvOptions, required_r3, resolve_b, robustness_allocation,
                       soo_trv_closed_form, trv)

FAST = TrvOptions(starts=16)


def _instance(seed):
    return random_instance(np.random.default_rng(seed))


@pytest.mark.parametrize("strategy", ["soo", "iv", "prox"])
def test_feasibility_and_equal_confounding(strategy):
    m, taus = _instance(1)
    b = 0.1
    res = trv(strategy, b, m, taus, FAST)
    r = res.rho_min
    assert abs(bias_at(strategy, m, taus, r) - b) <= 1e-6
    assert abs(r.r3) == abs(r.r4)
    assert res.trv >= 0
    if res.allocations is not None:
        assert sum(res.allocations.values()) == pytest.approx(1.0, abs=1e-8)
    assert res.rho_star.norm <= r.norm + 1e-12


def test_soo_closed_form_and_rho_star():
    m, taus = _instance(2)
    for b in (0.05, -0.2, 0.6):
        res = trv("soo", b, m, taus, FAST)
        assert res.trv == pytest.approx(soo_trv_closed_form(b, m), abs=1e-4)
        assert abs(res.rho_star.r1) < 1e-4 and abs(res.rho_star.r2) < 1e-4
        assert res.allocations["soo-z"] == pytest.approx(0.5, abs=1e-8)


def test_robustness_value_relation():
    # TRV_soo = 2 v, and v = r^2 is the equal-confounding partial R^2
    m, taus = _instance(3)
    b = 0.3
    r3, _ = required_r3("soo", b, m, taus)
    assert soo_trv_closed_form(b, m) == pytest.approx(2 * r3**2, rel=1e-12)


@pytest.mark.parametrize("name,strategy", [("valid-soo", "soo"), ("valid-iv", "iv"),
                                           ("valid-prox", "prox")])
def test_monotone_in_abs_b(name, strategy):
    # anchored on moments where the strategy is valid, so TRV(0) = 0
    m = ObservedMoments(population_cov(preset(name))[:4, :4], 1000)
    taus = taus_from_moments(m)
    assert trv(strategy, 0.0, m, taus, FAST, with_rho_star=False).trv < 1e-10
    for sign in (1, -1):
        vals = [trv(strategy, sign * b, m, taus, FAST, with_rho_star=False).trv
                for b in (0.02, 0.05, 0.1, 0.2, 0.4)]
        assert all(y >= x - 1e-8 for x, y in zip(vals, vals[1:]))


@pytest.mark.parametrize("strategy", ["soo", "iv", "prox"])
def test_grid_oracle(strategy):
    m, taus = _instance(5)
    b = 0.15
    res = trv(strategy, b, m, taus, FAST, with_rho_star=False)
    assert grid_trv(strategy, b, m, taus, step=0.1) >= res.trv - 1e-3


def test_infeasible_reports_range():
    m, taus = _instance(6)
    with pytest.raises(InfeasibleError) as exc:
        trv("soo", 1e6, m, taus, FAST)
    lo, hi = exc.value.achievable
    assert lo < 0 < hi


def test_zero_trv_allocation_undefined():
    m, taus = _instance(7)
    with pytest.raises(UndefinedAllocationError):
        robustness_allocation("soo", ZERO, m)
    # zero bias for soo needs no violation at all
    res = trv("soo", 0.0, m, taus, FAST)
    assert res.trv == pytest.approx(0.0, abs=1e-12)
    assert res.allocations is None


def test_results_deterministic():
    m, taus = _instance(8)
    a = trv("iv", 0.1, m, taus, FAST).to_dict()
    b = trv("iv", 0.1, m, taus, FAST).to_dict()
    assert a == b


def test_resolve_b():
    e = Estimate("soo", -0.3, 0.05, 100, 96)
    assert resolve_b("2se", e) == pytest.approx(-0.1)
    assert resolve_b("se", e) == pytest.approx(-0.05)
    assert resolve_b("estimate", e) == -0.3
    assert resolve_b(0.25, e) == 0.25
    assert resolve_b("0.4", e) == 0.4


def test_options_validation():
    with pytest.raises(ValueError):
        TrvOptions(starts=0)
    with pytest.raises(ValueError):
        TrvOptions(bound=1.0)


def test_rho_star_not_larger_than_rho_min():
    for seed in range(3):
        m, taus = _instance(10 + seed)
        for st in ("iv", "prox"):
            res = trv(st, 0.1, m, taus, FAST)
            assert res.rho_star.norm <= res.rho_min.norm + 1e-12
            comp_sq = sum(v * v for v in res.components.values())
            assert math.isclose(comp_sq, res.trv, rel_tol=1e-5, abs_tol=1e-9)
