"""Model layer: jump lists, drift, diffusion, Jacobians.

Oracles used here:
  * brute-force summation over explicitly written jump terms (independent of
    the model's own jump bookkeeping),
  * central finite differences for Jacobians,
  * factor reconstruction sigma @ sigma.T for the diffusion factor.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from epikalman.errors import DomainError
from epikalman.model import (
    diffusion_factor,
    diffusion_matrix,
    drift,
    drift_jacobian,
    get_model,
    seir_model,
    sir_model,
)

LAM, GAM, EPS = 1.0, 1.0 / 3.0, 0.5


def fd_jacobian(f, x, h=1e-6):
    """Central finite-difference Jacobian of f at x."""
    x = np.asarray(x, dtype=float)
    d_out = len(f(x))
    jac = np.empty((d_out, x.size))
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        jac[:, j] = (f(x + e) - f(x - e)) / (2.0 * h)
    return jac


def brute_sir_terms(x, lam, gam):
    """Jump vectors and rates of the SIR process, written out by hand."""
    s, i = x
    return [
        (np.array([-1.0, 1.0]), lam * s * i),
        (np.array([0.0, -1.0]), gam * i),
    ]


def brute_seir_terms(x, lam, eps, gam):
    s, e, i = x
    return [
        (np.array([-1.0, 1.0, 0.0]), lam * s * i),
        (np.array([0.0, -1.0, 1.0]), eps * e),
        (np.array([0.0, 0.0, -1.0]), gam * i),
    ]


def brute_drift(terms):
    return sum(rate * vec for vec, rate in terms)


def brute_diffusion(terms):
    return sum(rate * np.outer(vec, vec) for vec, rate in terms)


class TestSIR:
    def test_drift_closed_form(self):
        x = np.array([0.99, 0.01])
        b = drift(sir_model(), np.array([LAM, GAM]), x)
        assert_allclose(b, [-0.0099, 0.0099 - 0.01 / 3.0], rtol=1e-14)

    def test_drift_matches_brute_force(self):
        rng = np.random.default_rng(1)
        model = sir_model()
        for _ in range(25):
            s = rng.uniform(0, 1)
            i = rng.uniform(0, 1 - s)
            x = np.array([s, i])
            zeta = rng.uniform(0.05, 5.0, size=2)
            assert_allclose(
                drift(model, zeta, x),
                brute_drift(brute_sir_terms(x, *zeta)),
                rtol=1e-13,
                atol=1e-15,
            )

    def test_diffusion_closed_form(self):
        x = np.array([0.99, 0.01])
        sig = diffusion_matrix(sir_model(), np.array([LAM, GAM]), x)
        lsi, gi = 0.0099, 0.01 / 3.0
        assert_allclose(sig, [[lsi, -lsi], [-lsi, lsi + gi]], rtol=1e-14)

    def test_diffusion_factor_closed_form(self):
        # lower-triangular factor with the conventional positive diagonal
        x = np.array([0.99, 0.01])
        sig_fac = diffusion_factor(sir_model(), np.array([LAM, GAM]), x)
        root_lsi, root_gi = np.sqrt(0.0099), np.sqrt(0.01 / 3.0)
        assert_allclose(
            sig_fac, [[root_lsi, 0.0], [-root_lsi, root_gi]], rtol=1e-12
        )

    def test_jacobian_closed_form_disease_free(self):
        jac = drift_jacobian(sir_model(), np.array([LAM, GAM]), np.array([0.0, 0.0]))
        assert_allclose(jac, [[0.0, 0.0], [0.0, -GAM]], atol=1e-15)

    def test_jacobian_matches_finite_differences(self):
        model = sir_model()
        rng = np.random.default_rng(2)
        for _ in range(20):
            s = rng.uniform(0.05, 0.9)
            i = rng.uniform(0.05, 1 - s - 0.01)
            zeta = rng.uniform(0.1, 4.0, size=2)
            x = np.array([s, i])
            num = fd_jacobian(lambda v: drift(model, zeta, v, validate=False), x)
            assert_allclose(drift_jacobian(model, zeta, x), num, rtol=1e-6, atol=1e-8)


class TestSEIR:
    ZETA = np.array([1.2, EPS, 0.4])

    def test_drift_matches_brute_force_frozen(self):
        x = np.array([0.9, 0.05, 0.05])
        b = drift(seir_model(), self.ZETA, x)
        oracle = brute_drift(brute_seir_terms(x, *self.ZETA))
        assert_allclose(b, oracle, rtol=1e-14)
        assert_allclose(b, [-0.054, 0.029, 0.005], rtol=1e-12)

    def test_diffusion_matches_brute_force(self):
        rng = np.random.default_rng(3)
        model = seir_model()
        for _ in range(25):
            u = rng.dirichlet([1.0, 1.0, 1.0, 1.0])
            x = u[:3]
            zeta = rng.uniform(0.05, 5.0, size=3)
            assert_allclose(
                diffusion_matrix(model, zeta, x),
                brute_diffusion(brute_seir_terms(x, *zeta)),
                rtol=1e-13,
                atol=1e-15,
            )

    def test_jacobian_matches_finite_differences(self):
        model = seir_model()
        rng = np.random.default_rng(4)
        for _ in range(20):
            u = rng.dirichlet([2.0, 2.0, 2.0, 2.0])
            x = np.clip(u[:3], 0.02, None)
            x = x / (x.sum() + 0.05)
            zeta = rng.uniform(0.1, 4.0, size=3)
            num = fd_jacobian(lambda v: drift(model, zeta, v, validate=False), x)
            assert_allclose(drift_jacobian(model, zeta, x), num, rtol=1e-6, atol=1e-8)

    def test_extinct_state_is_absorbing(self):
        b = drift(seir_model(), self.ZETA, np.array([0.4, 0.0, 0.0]))
        assert_allclose(b, np.zeros(3), atol=1e-15)


class TestDiffusionFactor:
    @pytest.mark.parametrize(
        "x",
        [
            np.array([0.7, 0.2]),
            np.array([0.6, 0.0]),   # rank 0: no infectives, Sigma = 0
            np.array([0.0, 0.3]),   # rank 1: no susceptibles left
            np.array([0.0, 0.0]),
        ],
    )
    def test_reconstructs_sir_diffusion(self, x):
        model = sir_model()
        zeta = np.array([LAM, GAM])
        sig = diffusion_matrix(model, zeta, x)
        fac = diffusion_factor(model, zeta, x)
        assert_allclose(fac @ fac.T, sig, atol=1e-14)
        assert_allclose(fac, np.tril(fac), atol=0)

    def test_reconstructs_seir_diffusion(self):
        model = seir_model()
        rng = np.random.default_rng(5)
        for _ in range(20):
            u = rng.dirichlet([1.0, 1.0, 1.0, 1.0])
            zeta = rng.uniform(0.05, 5.0, size=3)
            sig = diffusion_matrix(model, zeta, u[:3])
            fac = diffusion_factor(model, zeta, u[:3])
            assert_allclose(fac @ fac.T, sig, atol=1e-13)

    def test_zero_when_no_infectives(self):
        fac = diffusion_factor(sir_model(), np.array([LAM, GAM]), np.array([0.6, 0.0]))
        assert_allclose(fac, np.zeros((2, 2)), atol=0)


class TestDomain:
    def test_rejects_state_outside_simplex(self):
        model = sir_model()
        with pytest.raises(DomainError):
            drift(model, np.array([LAM, GAM]), np.array([1.2, 0.1]))
        with pytest.raises(DomainError):
            drift(model, np.array([LAM, GAM]), np.array([0.5, -1e-6]))
        with pytest.raises(DomainError):
            diffusion_matrix(model, np.array([LAM, GAM]), np.array([0.7, 0.7]))

    def test_accepts_roundoff_sized_violations(self):
        # tolerance is 1e-9: tiny negative coordinates from roundoff pass
        model = sir_model()
        drift(model, np.array([LAM, GAM]), np.array([-0.5e-9, 0.5]))
        drift(model, np.array([LAM, GAM]), np.array([0.5, 0.5 + 0.9e-9]))

    def test_validate_flag_disables_check(self):
        drift(sir_model(), np.array([LAM, GAM]), np.array([1.5, -0.2]), validate=False)


class TestVectorized:
    def test_batched_evaluation_matches_loop(self):
        model = sir_model()
        zeta = np.array([0.9, 0.25])
        rng = np.random.default_rng(6)
        s = rng.uniform(0.0, 0.7, size=(4, 7))
        i = rng.uniform(0.0, 0.3, size=(4, 7))
        x = np.stack([s, i], axis=-1)
        b = drift(model, zeta, x)
        sig = diffusion_matrix(model, zeta, x)
        jac = drift_jacobian(model, zeta, x)
        assert b.shape == (4, 7, 2)
        assert sig.shape == (4, 7, 2, 2)
        assert jac.shape == (4, 7, 2, 2)
        for a in range(4):
            for c in range(7):
                assert_allclose(b[a, c], drift(model, zeta, x[a, c]), rtol=1e-14)
                assert_allclose(
                    sig[a, c], diffusion_matrix(model, zeta, x[a, c]), rtol=1e-14
                )
                assert_allclose(
                    jac[a, c], drift_jacobian(model, zeta, x[a, c]), rtol=1e-14
                )


@st.composite
def sir_state(draw):
    s = draw(st.floats(0.0, 1.0, allow_nan=False))
    i = draw(st.floats(0.0, 1.0, allow_nan=False))
    if s + i > 1.0:
        s, i = s / (s + i), i / (s + i)
    return np.array([s, i])


@given(
    x=sir_state(),
    lam=st.floats(1e-3, 10.0),
    gam=st.floats(1e-3, 10.0),
)
@settings(max_examples=100, deadline=None)
def test_sir_mass_leaves_through_recovery_only(x, lam, gam):
    # d(s+i)/dt = -gamma*i <= 0, with equality iff i = 0
    b = drift(sir_model(), np.array([lam, gam]), x)
    assert_allclose(b.sum(), -gam * x[1], rtol=1e-12, atol=1e-15)


@given(
    x=sir_state(),
    lam=st.floats(1e-3, 10.0),
    gam=st.floats(1e-3, 10.0),
)
@settings(max_examples=100, deadline=None)
def test_sir_diffusion_is_psd(x, lam, gam):
    sig = diffusion_matrix(sir_model(), np.array([lam, gam]), x)
    assert_allclose(sig, sig.T, atol=0)
    assert np.linalg.eigvalsh(sig).min() >= -1e-13


def test_registry_round_trip():
    assert get_model("sir").name == "sir"
    assert get_model("seir").name == "seir"
    assert get_model("sir").compartments == ("s", "i")
    assert get_model("seir").compartments == ("s", "e", "i")
    with pytest.raises(KeyError):
        get_model("sis")


def test_model_metadata():
    sir = sir_model()
    assert sir.d == 2
    assert sir.zeta_names == ("lambda", "gamma")
    assert sir.susceptible == 0
    assert sir.infected == (1,)
    seir = seir_model()
    assert seir.d == 3
    assert seir.zeta_names == ("lambda", "epsilon", "gamma")
    assert seir.infected == (1, 2)
