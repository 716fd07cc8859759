"""Inference tests.

Oracles:
  * transform round trips are exact identities, with frozen values at
    hand-computable points;
  * the simplex optimizer is checked on a separable quadratic (known
    minimum) and on the banana-valley function from (-1.2, 1), whose
    minimum (1, 1) it must reach within 1e-3;
  * interval extraction is checked on closed-form profiles: a quadratic
    with known crossing points and a piecewise-linear profile where the
    interpolated crossings are exact;
  * fits must satisfy the argmax property against the true generating
    parameters on seeded data.
"""

import numpy as np
import pytest

from epikalman.errors import ConfigError, DomainError
from epikalman.inference import (
    PROFILE_THRESHOLD,
    FitResult,
    ParamSpace,
    band_coverage,
    fit,
    from_unconstrained,
    loglik_at,
    make_objective,
    make_space,
    nelder_mead,
    param_universe,
    post_predictive,
    profile_ci,
    to_unconstrained,
    _interval_from_profile,
)
from epikalman.kalman import DEGENERATE_LOGLIK
from epikalman.model import ThetaFull, sir_model, seir_model
from epikalman.simulate import gillespie, observe


# ---------------------------------------------------------------------------
# parameter transforms


def test_universe_names():
    assert param_universe(sir_model()) == ("lambda", "gamma", "i0", "p", "tau")
    assert param_universe(seir_model()) == (
        "lambda", "epsilon", "gamma", "e0", "i0", "p", "tau",
    )


def test_transform_frozen_values():
    assert from_unconstrained("p", 0.0) == pytest.approx(0.5, abs=1e-15)
    assert from_unconstrained("lambda", np.log(2.0)) == pytest.approx(2.0, rel=1e-14)
    assert to_unconstrained("lambda", 2.0) == pytest.approx(np.log(2.0), rel=1e-14)
    assert to_unconstrained("p", 0.5) == pytest.approx(0.0, abs=1e-14)
    # saturation: far-negative values report exactly one
    assert from_unconstrained("p", -30.5) == 1.0
    assert from_unconstrained("p", -29.0) < 1.0
    # the boundary value encodes to the saturated region and round-trips
    assert from_unconstrained("p", to_unconstrained("p", 1.0)) == 1.0


def test_space_round_trip_sir():
    rng = np.random.default_rng(0)
    space = make_space(sir_model(), free=("lambda", "gamma", "i0", "p", "tau"),
                       fixed={})
    for _ in range(20):
        naturals = {
            "lambda": rng.uniform(0.1, 5.0),
            "gamma": rng.uniform(0.1, 5.0),
            "i0": rng.uniform(0.01, 0.5),
            "p": rng.uniform(0.05, 0.95),
            "tau": rng.uniform(0.01, 2.0),
        }
        mu = space.encode(naturals)
        back = space.natural(mu)
        for name, v in naturals.items():
            assert back[name] == pytest.approx(v, rel=1e-10)
        theta = space.decode(mu)
        assert theta.zeta[0] == pytest.approx(naturals["lambda"], rel=1e-10)
        assert theta.zeta[1] == pytest.approx(naturals["gamma"], rel=1e-10)
        assert theta.x0[1] == pytest.approx(naturals["i0"], rel=1e-10)
        assert theta.x0[0] == pytest.approx(1 - naturals["i0"], rel=1e-10)
        assert theta.p[0] == pytest.approx(naturals["p"], rel=1e-10)
        assert theta.tau2 == pytest.approx(naturals["tau"] ** 2, rel=1e-10)


def test_space_mu_round_trip():
    space = make_space(sir_model(), free=("lambda", "p"),
                       fixed={"gamma": 0.3, "i0": 0.01, "tau": 0.0})
    rng = np.random.default_rng(1)
    for _ in range(20):
        mu = rng.uniform(-5, 5, size=2)
        back = space.encode(space.natural(mu))
        np.testing.assert_allclose(back, mu, atol=1e-10)


def test_space_seir_assembly():
    space = make_space(
        seir_model(), free=("lambda", "epsilon", "gamma", "i0"),
        fixed={"e0": 0.0, "p": 0.6, "tau": 0.1},
    )
    mu = space.encode({"lambda": 1.2, "epsilon": 0.5, "gamma": 0.4, "i0": 0.02})
    theta = space.decode(mu)
    np.testing.assert_allclose(theta.zeta, [1.2, 0.5, 0.4], rtol=1e-12)
    np.testing.assert_allclose(theta.x0, [0.98, 0.0, 0.02], rtol=1e-12)
    assert theta.p[0] == pytest.approx(0.6)
    assert theta.tau2 == pytest.approx(0.01)


def test_space_validation():
    m = sir_model()
    with pytest.raises(ConfigError):
        make_space(m, free=("lambda", "beta"), fixed={"gamma": 0.3, "i0": 0.01,
                                                      "p": 0.8, "tau": 0.0})
    with pytest.raises(ConfigError):
        # overlap between free and fixed
        make_space(m, free=("lambda",), fixed={"lambda": 1.0, "gamma": 0.3,
                                               "i0": 0.01, "p": 0.8, "tau": 0.0})
    with pytest.raises(ConfigError):
        # gamma missing entirely
        make_space(m, free=("lambda",), fixed={"i0": 0.01, "p": 0.8, "tau": 0.0})
    with pytest.raises(ConfigError):
        make_space(m, free=("lambda",), fixed={"gamma": 0.3, "i0": 0.01,
                                               "p": 1.3, "tau": 0.0})
    with pytest.raises(ConfigError):
        make_space(m, free=("lambda",), fixed={"gamma": -0.3, "i0": 0.01,
                                               "p": 0.8, "tau": 0.0})


def test_decode_rejects_leaving_simplex():
    space = make_space(
        seir_model(), free=("e0", "i0"),
        fixed={"lambda": 1.0, "epsilon": 0.5, "gamma": 0.3, "p": 0.8, "tau": 0.0},
    )
    mu = space.encode({"e0": 0.6, "i0": 0.6})
    with pytest.raises(DomainError):
        space.decode(mu)


# ---------------------------------------------------------------------------
# simplex optimizer


def test_nm_quadratic():
    target = np.array([1.5, -2.0, 0.5])
    res = nelder_mead(lambda x: float(np.sum((x - target) ** 2)), np.zeros(3))
    assert res.converged
    np.testing.assert_allclose(res.x, target, atol=1e-5)
    assert res.value < 1e-9


def test_nm_banana_valley():
    def banana(v):
        x, y = v
        return (1 - x) ** 2 + 100.0 * (y - x * x) ** 2

    res = nelder_mead(banana, np.array([-1.2, 1.0]))
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-3)


def test_nm_one_dimensional():
    res = nelder_mead(lambda x: (x[0] - 3.0) ** 2, np.array([0.0]))
    assert res.x[0] == pytest.approx(3.0, abs=1e-5)


def test_nm_respects_eval_cap():
    calls = []

    def f(x):
        calls.append(1)
        return float(np.sum(x * x))

    res = nelder_mead(f, np.full(4, 10.0), max_evals=40)
    assert not res.converged
    assert res.n_evals == len(calls)
    assert res.n_evals <= 40 + 6


def test_nm_vector_step():
    res = nelder_mead(lambda x: float(np.sum((x - 2.0) ** 2)),
                      np.zeros(2), step=np.array([0.1, 1.0]))
    np.testing.assert_allclose(res.x, [2.0, 2.0], atol=1e-5)


# ---------------------------------------------------------------------------
# interval extraction


def test_interval_quadratic_crossings():
    grid = np.linspace(-1.0, 3.0, 81)
    values = -2.0 * (grid - 1.0) ** 2
    lo, hi, lo_edge, hi_edge = _interval_from_profile(grid, values, 0.0, 1.92)
    half = np.sqrt(1.92 / 2.0)
    assert not lo_edge and not hi_edge
    assert lo == pytest.approx(1.0 - half, abs=2e-3)
    assert hi == pytest.approx(1.0 + half, abs=2e-3)


def test_interval_piecewise_linear_exact():
    # linear flanks make the interpolated crossing exact
    grid = np.linspace(-1.0, 3.0, 81)
    values = -3.0 * np.abs(grid - 1.0)
    lo, hi, lo_edge, hi_edge = _interval_from_profile(grid, values, 0.0, 1.92)
    assert lo == pytest.approx(1.0 - 0.64, abs=1e-12)
    assert hi == pytest.approx(1.0 + 0.64, abs=1e-12)


def test_interval_edges_flagged():
    grid = np.linspace(0.0, 1.0, 10)
    values = np.zeros(10)  # never drops below the threshold
    lo, hi, lo_edge, hi_edge = _interval_from_profile(grid, values, 0.0, 1.92)
    assert lo_edge and hi_edge
    assert lo == grid[0] and hi == grid[-1]


def test_profile_threshold_constant():
    assert PROFILE_THRESHOLD == 1.92


# ---------------------------------------------------------------------------
# end-to-end fitting on seeded synthetic data


@pytest.fixture(scope="module")
def sir_data():
    model = sir_model()
    zeta = np.array([1.0, 1.0 / 3.0])
    N = 10_000
    traj = gillespie(model, zeta, N, np.array([9900, 100]), rng=42)
    times = np.linspace(0.3, 12.0, 40)
    series = observe(traj, times, p=0.8, tau=0.0, rng=7)
    return model, times, series.values, N


def test_fit_single_free_parameter(sir_data):
    model, times, values, N = sir_data
    result = fit(
        model, times, values, N,
        free=("lambda",),
        fixed={"gamma": 1.0 / 3.0, "i0": 0.01, "p": 0.8, "tau": 0.0},
        start={"lambda": 0.6},
        n_starts=2,
        seed=0,
    )
    assert result.status == "ok"
    assert abs(result.params["lambda"] - 1.0) < 0.15
    # argmax property: the fit is at least as good as the truth
    truth = ThetaFull(
        zeta=np.array([1.0, 1.0 / 3.0]), x0=np.array([0.99, 0.01]),
        p=np.array([0.8]), tau2=0.0,
    )
    assert result.loglik >= loglik_at(model, times, values, N, truth) - 1e-9


def test_fit_multiparameter_smoke(sir_data):
    model, times, values, N = sir_data
    result = fit(
        model, times, values, N,
        free=("lambda", "gamma", "p", "i0"),
        fixed={"tau": 0.0},
        start={"lambda": 0.8, "gamma": 0.4, "p": 0.6, "i0": 0.02},
        n_starts=2,
        seed=1,
        max_evals=300,
    )
    assert result.status == "ok"
    assert np.isfinite(result.loglik)
    assert 0 < result.params["p"] <= 1
    assert 0 < result.params["i0"] < 1
    assert result.params["lambda"] > 0
    assert len(result.start_values) == 2
    # improves on the starting point
    space = result.space
    start_mu = space.encode({"lambda": 0.8, "gamma": 0.4, "p": 0.6, "i0": 0.02})
    obj = make_objective(model, times, values, N, space)
    assert result.loglik >= obj(start_mu)


def test_objective_degenerate_region():
    model = seir_model()
    space = make_space(
        model, free=("e0", "i0"),
        fixed={"lambda": 1.0, "epsilon": 0.5, "gamma": 0.3, "p": 0.8, "tau": 0.0},
    )
    times = np.linspace(0.5, 5.0, 8)
    values = np.full((8, 1), 0.01)
    obj = make_objective(model, times, values, N=1000, space=space)
    assert obj(space.encode({"e0": 0.01, "i0": 0.01})) > DEGENERATE_LOGLIK
    assert obj(space.encode({"e0": 0.6, "i0": 0.6})) == DEGENERATE_LOGLIK


def test_profile_interval_brackets_estimate(sir_data):
    model, times, values, N = sir_data
    result = fit(
        model, times, values, N,
        free=("lambda", "gamma"),
        fixed={"i0": 0.01, "p": 0.8, "tau": 0.0},
        start={"lambda": 0.9, "gamma": 0.35},
        n_starts=2,
        seed=2,
    )
    prof = profile_ci(
        model, times, values, N, result, "lambda",
        n_grid=8, n_starts=2, seed=3,
    )
    assert prof.threshold == 1.92
    assert not prof.at_lower_edge and not prof.at_upper_edge
    assert prof.lo < result.params["lambda"] < prof.hi
    assert prof.hi - prof.lo < 0.5
    assert prof.loglik_ref >= prof.values.max() - 1e-9
    # grid is reported on the natural scale, increasing
    assert np.all(np.diff(prof.grid) > 0)


# ---------------------------------------------------------------------------
# predictive bands


def test_post_predictive_bands():
    model = sir_model()
    theta = ThetaFull(
        zeta=np.array([1.0, 1.0 / 3.0]), x0=np.array([0.995, 0.005]),
        p=np.array([0.7]), tau2=0.01,
    )
    times = np.linspace(0.5, 15.0, 25)
    pp = post_predictive(model, theta, times, N=2000, n_sims=40, seed=5)
    assert pp.mean.shape == (25, 1)
    assert pp.q05.shape == (25, 1)
    assert np.all(pp.q05 <= pp.q50 + 1e-12)
    assert np.all(pp.q50 <= pp.q95 + 1e-12)
    assert pp.n_sims == 40
    again = post_predictive(model, theta, times, N=2000, n_sims=40, seed=5)
    np.testing.assert_array_equal(pp.q50, again.q50)

    # a path drawn from the same parameters mostly stays inside the band
    traj = gillespie(model, theta.zeta, 2000, np.array([1990, 10]), rng=11)
    series = observe(traj, times, p=0.7, tau=0.1, rng=12)
    cover = band_coverage(pp, series.values)
    assert cover >= 0.5


def test_band_coverage_counts_rows_inside():
    class Tiny:
        q05 = np.array([[0.0], [0.0], [0.0]])
        q95 = np.array([[1.0], [1.0], [1.0]])

    y = np.array([[0.5], [2.0], [1.0]])
    assert band_coverage(Tiny(), y) == pytest.approx(2.0 / 3.0)
