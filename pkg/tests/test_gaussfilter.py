import numpy as np
import pytest

from lnaepi import InvalidInputError, NumericalFailure, ObsParams, Params, backward_sample, forward_filter, get_model
from lnaepi import ode_loglik, simulate_mjp, corrupt
from lnaepi.gaussfilter import FilterState, ff_step, initial_filter_state
from lnaepi.lna import LnaState, integrate

import oracles


class TestForwardFilter:
    def test_kalman_oracle(self, removal_case):
        model, params, y = removal_case
        ll, _ = forward_filter(model, params, y, 1.0, n_steps=200)
        assert ll == pytest.approx(oracles.kalman_removal_loglik(y), abs=1e-6)

    @pytest.mark.parametrize("gamma,sigma2", [(0.05, 1.0), (0.3, 10.0)])
    def test_kalman_oracle_other_settings(self, gamma, sigma2):
        model = get_model("sir", 50)
        obs = ObsParams("gaussian", sigma2=sigma2, target="removals")
        p = Params(gamma=gamma, beta=0.0, x0=(0, 50), obs=obs)
        path = simulate_mjp(model, p, 8, 1, rng_seed=3)
        y = corrupt(path.grid_incidence, obs, 4)
        ll, _ = forward_filter(model, p, y, 1.0, n_steps=200)
        ref = oracles.kalman_removal_loglik(y, gamma=gamma, sigma2=sigma2)
        assert ll == pytest.approx(ref, abs=1e-6)

    def test_empty_series(self, d1_case):
        model, params, _ = d1_case
        ll, archive = forward_filter(model, params, np.array([]), 10.0)
        assert ll == 0.0
        assert len(archive) == 0

    def test_likelihood_discriminates(self, d1_case):
        model, params, y = d1_case
        ll_true, _ = forward_filter(model, params, y, 10.0)
        ll_double, _ = forward_filter(model, params.replace(beta=2 * params.beta), y, 10.0)
        assert np.isfinite(ll_true)
        assert ll_true > ll_double

    def test_deterministic(self, d1_case):
        model, params, y = d1_case
        a = forward_filter(model, params, y, 10.0)[0]
        assert all(forward_filter(model, params, y, 10.0)[0] == a for _ in range(3))

    def test_continuity_in_parameters(self, d1_case):
        model, params, y = d1_case
        ll = forward_filter(model, params, y, 10.0)[0]
        for name in ("beta", "gamma"):
            bumped = params.replace(**{name: getattr(params, name) * np.exp(1e-6)})
            assert abs(forward_filter(model, bumped, y, 10.0)[0] - ll) < 1e-3

    def test_covariances_stay_psd(self):
        for npop, x0, beta, gamma, seed in ((120, (119, 1), 0.00091, 0.082, 5),
                                            (360, (359, 1), 0.00091, 0.246, 1),
                                            (1200, (1180, 20), 0.00018, 0.164, 1)):
            model = get_model("sir", npop)
            obs = ObsParams("binomial", lam=0.8)
            p = Params(gamma=gamma, beta=beta, x0=x0, obs=obs)
            path = simulate_mjp(model, p, 80, 10, seed)
            y = corrupt(path.grid_incidence, obs, seed)
            _, archive = forward_filter(model, p, y, 10.0)
            for C in archive.C:
                np.testing.assert_allclose(C, C.T, atol=1e-12)
                assert np.linalg.eigvalsh(C).min() > -1e-8

    def test_failure_modes(self, d1_case):
        model, params, y = d1_case
        crazy = params.replace(beta=1e3)
        ll, _ = forward_filter(model, crazy, y * 0 + 1e6, 10.0, raise_on_failure=False)
        assert ll == -np.inf or np.isfinite(ll)

    def test_tv_model_initial_state(self):
        m = get_model("sirs-tvbeta", 40000)
        p = Params(gamma=1.0, kappa=1.0, sigma_beta=0.5, log_beta0=-10.0, x0=(38600, 1400),
                   obs=ObsParams("binomial", lam=0.6, target="removals"))
        st = initial_filter_state(m, p, logbeta_var=0.3)
        np.testing.assert_array_equal(st.a, [0, 0, 0, -10.0])
        assert st.C[3, 3] == 0.3 and np.count_nonzero(st.C) == 1
        ll, _ = forward_filter(m, p, np.array([1024, 1414, 958, 540.0]), 1.0)
        assert np.isfinite(ll)


class TestFfStep:
    def test_matches_full_filter(self, d1_case):
        model, params, y = d1_case
        ll, archive = forward_filter(model, params, y, 10.0)
        state = initial_filter_state(model, params)
        for t, yt in enumerate(y):
            state, record = ff_step(state, yt, model, params, interval=10.0)
            np.testing.assert_allclose(state.a, archive.a[t + 1], rtol=1e-12, atol=1e-12)
            np.testing.assert_allclose(record[3], archive.G[t], rtol=1e-12)
        assert state.loglik == pytest.approx(ll, abs=1e-10)
        assert state.t == pytest.approx(80.0)

    def test_uninformative_observation(self, d1_case):
        model, params, _ = d1_case
        vague = params.replace(obs=ObsParams("gaussian", sigma2=1e30))
        st0 = FilterState(a=np.array([5.0, 2.0]), C=np.diag([2.0, 1.0]))
        st1, (a, C, eta, G, V) = ff_step(st0, 3.0, model, vague, interval=10.0)
        np.testing.assert_allclose(st1.a, eta, rtol=1e-10)
        np.testing.assert_allclose(st1.C, V, rtol=1e-8)

    def test_first_step_increment_variance(self, removal_case):
        # with C = 0 the increment variance equals the LNA covariance
        model, params, y = removal_case
        st1, (a, C, eta, G, V) = ff_step(initial_filter_state(model, params), y[0], model,
                                         params, n_steps=200)
        pred = integrate(model, LnaState.restart(np.zeros(2)), params, 0.0, 1.0, n_steps=200)
        np.testing.assert_allclose(V, pred.V, rtol=1e-12)
        s = V[1, 1] + params.obs.sigma2
        expected = -0.5 * (np.log(2 * np.pi * s) + (y[0] - eta[1]) ** 2 / s)
        assert st1.loglik == pytest.approx(expected, abs=1e-12)

    def test_failure_raises(self):
        m = get_model("sir-tvbeta", 1e6)
        p = Params(gamma=0.1, sigma_beta=1.0, log_beta0=700.0, x0=(9e5, 1e5),
                   obs=ObsParams("binomial", lam=0.5))
        with pytest.raises(NumericalFailure):
            ff_step(initial_filter_state(m, p), 10.0, m, p)


class TestOdeLoglik:
    def test_empty(self, d1_case):
        model, params, _ = d1_case
        assert ode_loglik(model, params, np.array([]), 10.0) == 0.0

    def test_observation_noise_only(self, removal_case):
        model, params, y = removal_case
        ll = ode_loglik(model, params, y, 1.0, n_steps=200)
        n = oracles.I0 * (1 - np.exp(-oracles.GAMMA * np.arange(9)))
        inc = np.diff(n)
        ref = -0.5 * np.sum(np.log(2 * np.pi * oracles.SIGMA2) + (y - inc) ** 2 / oracles.SIGMA2)
        assert ll == pytest.approx(ref, abs=1e-8)

    def test_worse_than_filter_at_scale(self):
        model = get_model("sir", 1200)
        obs = ObsParams("binomial", lam=0.8)
        p = Params(gamma=0.164, beta=0.00018, x0=(1180, 20), obs=obs)
        path = simulate_mjp(model, p, 80, 10, 1)
        y = corrupt(path.grid_incidence, obs, 1)
        assert ode_loglik(model, p, y, 10.0) < forward_filter(model, p, y, 10.0)[0]


class TestBackwardSample:
    def test_zero_noise_is_deterministic_mean(self, d1_case):
        model, params, y = d1_case
        _, archive = forward_filter(model, params, y, 10.0)
        z0 = np.zeros((len(y) + 1, 2))
        a = backward_sample(archive, z0)
        b = backward_sample(archive, z0)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_allclose(a[-1], archive.a[-1])
        np.testing.assert_allclose(a[0], 0.0, atol=1e-6)

    def test_degenerate_filter(self, d1_case, rng):
        model, params, y = d1_case
        _, archive = forward_filter(model, params, y, 10.0)
        k = 2
        zero_C = type(archive)(archive.a, np.zeros_like(archive.C), archive.eta, archive.G,
                               archive.V)
        a = backward_sample(zero_C, rng.standard_normal((len(y) + 1, k)))
        b = backward_sample(zero_C, rng.standard_normal((len(y) + 1, k)))
        np.testing.assert_allclose(a, b, atol=1e-6)

    def test_terminal_marginal(self, d1_case, rng):
        model, params, y = d1_case
        _, archive = forward_filter(model, params, y, 10.0)
        draws = np.array([backward_sample(archive, rng.standard_normal((len(y) + 1, 2)))[-1]
                          for _ in range(10_000)])
        np.testing.assert_allclose(draws.mean(axis=0), archive.a[-1], rtol=0.03)
        np.testing.assert_allclose(np.cov(draws.T), archive.C[-1], rtol=0.03,
                                   atol=0.03 * np.abs(archive.C[-1]).max())

    def test_shape_check(self, d1_case):
        model, params, y = d1_case
        _, archive = forward_filter(model, params, y, 10.0)
        with pytest.raises(InvalidInputError):
            backward_sample(archive, np.zeros((len(y), 2)))
