import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lnaepi import InvalidInputError
from lnaepi.models import (
    MODEL_NAMES,
    Params,
    get_model,
    hazard_incidence,
    hazard_prevalence,
    incidence_to_prevalence,
    jacobian,
    register_model,
)

D1 = Params(gamma=0.082, beta=0.00091, x0=(119, 1))


def fd_jacobian(model, eta, params, h=1e-5):
    """Central differences of h*(eta); the log-beta row stays zero."""
    k = model.n_latent
    out = np.zeros((k, k))
    for j in range(k):
        step = h * max(1.0, abs(eta[j]))
        up, dn = eta.copy(), eta.copy()
        up[j] += step
        dn[j] -= step
        out[:model.n_events, j] = (hazard_incidence(model, up, params)
                                   - hazard_incidence(model, dn, params)) / (2 * step)
    return out


class TestCompartmentModel:
    def test_registry(self):
        assert set(MODEL_NAMES) >= {"sir", "sirs", "sir-tvbeta", "sirs-tvbeta"}

    @pytest.mark.parametrize("name,events,latent", [
        ("sir", 2, 2), ("sir-tvbeta", 2, 3), ("sirs", 3, 3), ("sirs-tvbeta", 3, 4)])
    def test_dimensions(self, name, events, latent):
        m = get_model(name, 100)
        assert m.n_events == events
        assert m.n_latent == latent
        assert m.tv_beta == name.endswith("tvbeta")

    def test_sir_stoichiometry(self):
        S = get_model("sir", 10).stoich
        np.testing.assert_array_equal(S[:, 0], [-1, 1])
        np.testing.assert_array_equal(S[:, 1], [0, -1])

    def test_sirs_third_column(self):
        np.testing.assert_array_equal(get_model("sirs", 10).stoich[:, 2], [1, 0])

    def test_unknown_model(self):
        with pytest.raises(InvalidInputError):
            get_model("seir", 100)

    def test_nonpositive_population(self):
        with pytest.raises(InvalidInputError):
            get_model("sir", 0)

    def test_params_validation(self):
        with pytest.raises(InvalidInputError):
            Params(gamma=-0.1, x0=(1, 1))
        with pytest.raises(InvalidInputError):
            Params(gamma=0.1, x0=(1, -1))

    def test_tv_model_needs_log_beta0(self):
        m = get_model("sir-tvbeta", 100)
        with pytest.raises(InvalidInputError):
            m.initial_state(Params(gamma=0.1, x0=(99, 1)))
        n0 = m.initial_state(Params(gamma=0.1, x0=(99, 1), log_beta0=-3.0))
        np.testing.assert_array_equal(n0, [0.0, 0.0, -3.0])


class TestHazards:
    def test_d1_prevalence_hazard(self):
        h = hazard_prevalence(get_model("sir", 120), (119, 1), D1)
        np.testing.assert_allclose(h, [0.00091 * 119, 0.082], rtol=1e-14)
        assert h[0] == pytest.approx(0.108290, abs=1e-6)

    def test_no_infectives(self):
        h = hazard_prevalence(get_model("sir", 120), (57, 0), D1)
        np.testing.assert_array_equal(h, [0.0, 0.0])

    def test_sirs_empty_recovered(self):
        m = get_model("sirs", 40000)
        p = Params(gamma=1.0, beta=1e-5, kappa=1.0, x0=(38600, 1400))
        assert hazard_prevalence(m, (38600, 1400), p)[2] == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            hazard_prevalence(get_model("sir", 120), (1, 2, 3), D1)
        with pytest.raises(InvalidInputError):
            hazard_incidence(get_model("sir", 120), np.zeros(3), D1)

    def test_incidence_hazard_by_hand(self):
        h = hazard_incidence(get_model("sir", 120), np.array([20.0, 5.0]), D1)
        np.testing.assert_allclose(h, [0.00091 * 99 * 16, 0.082 * 16], rtol=1e-14)
        np.testing.assert_allclose(h, [1.44144, 1.312], rtol=1e-12)

    def test_zero_counts_match_prevalence(self):
        m = get_model("sir", 120)
        np.testing.assert_array_equal(hazard_incidence(m, np.zeros(2), D1),
                                      hazard_prevalence(m, D1.x0, D1))

    def test_tv_log_rate_passthrough(self):
        m = get_model("sirs-tvbeta", 40000)
        p = Params(gamma=1.0, kappa=1.0, sigma_beta=0.5, log_beta0=-10.0, x0=(38600, 1400))
        h = hazard_incidence(m, np.array([0.0, 0.0, 0.0, -10.0]), p)
        assert h[0] == pytest.approx(np.exp(-10.0) * 38600 * 1400, rel=1e-14)

    def test_negative_state_is_clamped(self):
        m = get_model("sir", 120)
        h = hazard_incidence(m, np.array([0.0, 5.0]), D1)
        np.testing.assert_array_equal(h, [0.0, 0.0])


class TestIncidenceToPrevalence:
    def test_identity_at_origin(self):
        np.testing.assert_array_equal(
            incidence_to_prevalence(get_model("sir", 120), [0, 0], (119, 1)), [119, 1])

    def test_sir_arithmetic(self):
        np.testing.assert_array_equal(
            incidence_to_prevalence(get_model("sir", 120), [30, 12], (119, 1)), [89, 19])

    def test_sirs_arithmetic(self):
        x = incidence_to_prevalence(get_model("sirs", 40000), [10, 4, 2], (38600, 1400))
        np.testing.assert_array_equal(x, [38592, 1406])

    def test_ignores_trailing_log_beta(self):
        m = get_model("sir-tvbeta", 120)
        np.testing.assert_array_equal(incidence_to_prevalence(m, [30, 12, -4.0], (119, 1)),
                                      [89, 19])

    def test_stacked_input(self):
        m = get_model("sir", 120)
        n = np.array([[[0, 0], [30, 12]]])
        assert incidence_to_prevalence(m, n, (119, 1)).shape == (1, 2, 2)


class TestJacobian:
    def test_d1_at_origin(self):
        F = jacobian(get_model("sir", 120), np.zeros(2), D1)
        expected = [[0.00091 * (119 - 1), -0.00091 * 119], [0.082, -0.082]]
        np.testing.assert_allclose(F, expected, rtol=1e-14)
        np.testing.assert_allclose(F, [[0.107380, -0.108290], [0.082, -0.082]], atol=5e-7)

    def test_beta_zero(self):
        F = jacobian(get_model("sir", 120), np.array([3.0, 1.0]), D1.replace(beta=0.0))
        np.testing.assert_array_equal(F, [[0.0, 0.0], [0.082, -0.082]])

    def test_tv_log_beta_row_is_zero(self):
        m = get_model("sirs-tvbeta", 1000)
        p = Params(gamma=0.5, kappa=0.3, sigma_beta=0.4, log_beta0=-6.0, x0=(900, 50))
        F = jacobian(m, np.array([20.0, 10.0, 3.0, -6.5]), p)
        np.testing.assert_array_equal(F[-1], 0.0)

    @settings(max_examples=60, deadline=None)
    @given(name=st.sampled_from(["sir", "sirs", "sir-tvbeta", "sirs-tvbeta"]),
           frac=st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4),
           log_beta=st.floats(-8.0, -5.0))
    def test_matches_finite_differences(self, name, frac, log_beta):
        npop = 1000
        m = get_model(name, npop)
        p = Params(gamma=0.3, beta=0.002, kappa=0.7, sigma_beta=0.5, log_beta0=log_beta,
                   x0=(800.0, 100.0))
        # interior: s, i and r all stay well away from zero
        eta = 40.0 * np.asarray(frac[:m.n_latent])
        if m.tv_beta:
            eta[-1] = log_beta
        F = jacobian(m, eta, p)
        fd = fd_jacobian(m, eta, p)
        assert np.abs(F - fd).max() <= 1e-6 * np.abs(fd).max()


class TestRegistration:
    def test_python_callbacks_are_compiled(self):
        def hazard(n, p, out):
            i = p[5] - n[1]
            out[0] = 0.0
            out[1] = p[1] * i if i > 0.0 else 0.0

        def terms(eta, p, drift, diff, F):
            F[:, :] = 0.0
            i = p[5] - eta[1]
            drift[0] = 0.0
            drift[1] = p[1] * i if i > 0.0 else 0.0
            if i > 0.0:
                F[1, 1] = -p[1]
            diff[0] = drift[0]
            diff[1] = drift[1]

        register_model("death-test", 2, [[0, 0], [0, -1]], False, hazard, terms)
        m = get_model("death-test", 10)
        p = Params(gamma=0.5, x0=(0, 10))
        np.testing.assert_allclose(hazard_incidence(m, np.array([0.0, 4.0]), p), [0.0, 3.0])
        assert hasattr(m.hazard_fn, "address")
