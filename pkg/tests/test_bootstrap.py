import numpy as np
import pytest

from sensa.bootstrap import PipelineStatistic, bootstrap, dirichlet_weights, mad
from sensa.errors import BootstrapError, DegeneracyError
from sensa.estimators import estimate_all
from sensa.io_ingest import Dataset, partial_out
from sensa.simulate import StructuralConfig, generate
from sensa.trv import TrvOptions


def taus(d):
    return estimate_all(partial_out(d)).taus()


def const(d):
    return 1.25


def fragile(d):
    if d.weights is not None and d.weights[0] > 2.5:
        raise DegeneracyError("contrived failure")
    return float(np.average(d.columns["y"], weights=d.w()))


@pytest.fixture(scope="module")
def data():
    return generate(StructuralConfig(n=400, seed=3, n_covariates=1), with_u=False)


def test_weights():
    w = dirichlet_weights(50, np.random.default_rng(0))
    assert w.sum() == pytest.approx(50) and np.all(w > 0)


def test_mad():
    assert mad([1, 2, 3, 4, 100]) == 1.0
    assert mad([3.0] * 7) == 0.0


def test_deterministic(data):
    a = bootstrap(data, {"tau": taus}, B=20, seed=11)
    b = bootstrap(data, {"tau": taus}, B=20, seed=11)
    assert [x.to_dict() for x in a] == [x.to_dict() for x in b]
    c = bootstrap(data, {"tau": taus}, B=20, seed=12)
    assert [x.mad for x in a] != [x.mad for x in c]


def test_workers_do_not_change_results(data):
    a = bootstrap(data, {"tau": taus}, B=12, seed=4)
    b = bootstrap(data, {"tau": taus}, B=12, seed=4, workers=2)
    assert [x.to_dict() for x in a] == [x.to_dict() for x in b]


def test_constant_statistic(data):
    (s,) = bootstrap(data, {"c": const}, B=10, seed=0)
    assert s.mad == 0.0 and s.point == 1.25


def test_equal_weights_reproduce_point(data):
    out = bootstrap(data, {"tau": taus}, B=5, seed=0, weight_scheme="equal")
    for s in out:
        assert s.mad == 0.0
        assert s.median == pytest.approx(s.point, abs=1e-12)


def test_partial_failures_are_dropped(data):
    (s,) = bootstrap(data, {"m": fragile}, B=200, seed=1)
    assert 0 < s.failures <= 40
    assert s.mad > 0


def test_collinear_dataset_fails():
    d = generate(StructuralConfig(n=200, seed=2), with_u=False)
    cols = dict(d.columns)
    cols["w_y"] = cols["z"].copy()   # outcome proxy identical to the treatment
    bad = Dataset(cols, d.schema)
    with pytest.raises(BootstrapError) as exc:
        bootstrap(bad, {"m": const, "tau": lambda x: taus(x)["soo"]}, B=10, seed=0)
    assert exc.value.failures == 10


def test_too_many_failures():
    d = generate(StructuralConfig(n=50, seed=2), with_u=False)

    def flaky(x):
        if x.weights is not None and x.weights[0] > 0.7:
            raise DegeneracyError("x")
        return 0.0
    with pytest.raises(BootstrapError):
        bootstrap(d, {"f": flaky}, B=50, seed=0)


def test_pipeline_statistic(data):
    stat = PipelineStatistic(b={"soo": 0.1}, trv_options=TrvOptions(starts=4))
    out = stat(data)
    assert {"tau_soo", "tau_iv", "tau_prox", "trv_soo", "ra_soo-z"} <= set(out)
    assert any(k.startswith("bench_x1_") for k in out)


def test_rejects_bad_arguments(data):
    with pytest.raises(ValueError):
        bootstrap(data, {"c": const}, B=1, seed=0)
    with pytest.raises(ValueError):
        bootstrap(data, {"c": const}, B=3, seed=0, weight_scheme="poisson")
