"""Analytic marginalisation of the latent incidence.

The observation model is replaced by a Gaussian surrogate so that the LNA
becomes a linear-Gaussian state-space model; the observed-data likelihood
then follows from Kalman-style forward recursions, and latent paths from
backward sampling.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import _kernels as K
from .exceptions import InvalidInputError, NumericalFailure
from .lna import DEFAULT_STEPS

__all__ = [
    "FilterState",
    "FilterArchive",
    "initial_filter_state",
    "ff_step",
    "forward_filter",
    "backward_sample",
    "ode_loglik",
]


@dataclass(frozen=True, eq=False)
class FilterState:
    """Filtering distribution N(a, C) at time ``t`` and accumulated log-likelihood."""

    a: np.ndarray
    C: np.ndarray
    loglik: float = 0.0
    t: float = 0.0


@dataclass(frozen=True, eq=False)
class FilterArchive:
    """Per-step output of the forward filter needed for backward sampling.

    ``a[t], C[t]`` are the filter moments at observation ``t`` (``t = 0..T``);
    ``eta[t], G[t], V[t]`` are the LNA quantities integrated from ``a[t], C[t]``
    over the following interval.
    """

    a: np.ndarray
    C: np.ndarray
    eta: np.ndarray
    G: np.ndarray
    V: np.ndarray

    @property
    def T(self):
        return self.eta.shape[0]

    def __len__(self):
        return self.T

    def record(self, t):
        return self.a[t], self.C[t], self.eta[t], self.G[t], self.V[t]


def initial_filter_state(model, params, logbeta_var=0.0):
    """Counting components at zero with no uncertainty; log beta0 optionally diffuse."""
    a0 = model.initial_state(params)
    C0 = np.zeros((model.n_latent, model.n_latent))
    if model.tv_beta:
        C0[-1, -1] = logbeta_var
    return FilterState(a=a0, C=C0)


_STATUS_MESSAGES = {
    K.INTEGRATION_FAILED: "non-finite LNA state during forward filter",
    K.NOT_PSD: "filter covariance lost positive semi-definiteness",
}


def _run(model, params, y, interval, n_steps, ode_only, state):
    if params.obs is None:
        raise InvalidInputError("params.obs must be set for filtering")
    y = np.ascontiguousarray(y, dtype=float)
    if y.ndim != 1:
        raise InvalidInputError(f"observations must be one-dimensional, got shape {y.shape}")
    T, k = y.shape[0], model.n_latent
    a_hist, C_hist = np.empty((T + 1, k)), np.empty((T + 1, k, k))
    eta_hist, G_hist, V_hist = np.empty((T, k)), np.empty((T, k, k)), np.empty((T, k, k))
    code, lam, sigma2, phi, target = params.obs.as_tuple()
    ll, status, step = K.ff_run(
        model.terms_fn, np.ascontiguousarray(state.a, dtype=float),
        np.ascontiguousarray(state.C, dtype=float), model.pack(params), y,
        float(interval), int(n_steps), code, lam, sigma2, phi, target, ode_only,
        a_hist, C_hist, eta_hist, G_hist, V_hist)
    archive = FilterArchive(a_hist, C_hist, eta_hist, G_hist, V_hist)
    return ll, status, step, archive


def _raise(status, step, interval, t0=0.0):
    t = t0 + (step + 1) * interval
    raise NumericalFailure(f"{_STATUS_MESSAGES[status]} (interval ending t={t:g})", time=t)


def ff_step(state, y_next, model, params, interval=1.0, n_steps=DEFAULT_STEPS):
    """One forward-filter step: predict over one interval, add the likelihood
    term and condition on ``y_next``.

    Returns the updated :class:`FilterState` and the archive record
    ``(a_t, C_t, eta_{t+1}, G_{t+1}, V_{t+1})``.
    """
    ll, status, step, arch = _run(model, params, [y_next], interval, n_steps, False, state)
    if status != K.OK:
        _raise(status, step, interval, state.t)
    new = FilterState(a=arch.a[1], C=arch.C[1], loglik=state.loglik + ll,
                      t=state.t + interval)
    return new, arch.record(0)


def forward_filter(model, params, y, interval=1.0, n_steps=DEFAULT_STEPS, logbeta_var=0.0,
                   raise_on_failure=True):
    """Approximate observed-data log-likelihood of ``y`` under the LNA.

    Returns ``(loglik, archive)``.  With ``raise_on_failure=False`` a
    numerical breakdown yields ``-inf`` instead of an exception, which is the
    behaviour wanted inside MCMC.
    """
    state = initial_filter_state(model, params, logbeta_var)
    ll, status, step, archive = _run(model, params, y, interval, n_steps, False, state)
    if status != K.OK:
        if raise_on_failure:
            _raise(status, step, interval)
        return -np.inf, archive
    return ll, archive


def ode_loglik(model, params, y, interval=1.0, n_steps=DEFAULT_STEPS, raise_on_failure=True):
    """Log-likelihood with a deterministic latent path (observation noise only)."""
    state = initial_filter_state(model, params)
    ll, status, step, _ = _run(model, params, y, interval, n_steps, True, state)
    if status != K.OK:
        if raise_on_failure:
            _raise(status, step, interval)
        return -np.inf
    return ll


def _psd_factor(C):
    w, U = np.linalg.eigh(0.5 * (C + C.T))
    return U * np.sqrt(np.clip(w, 0.0, None))


def backward_sample(archive, z):
    """Draw a latent incidence path ``n_{0:T}`` given forward-filter output.

    ``z`` holds standard-normal draws of shape ``(T + 1, n_latent)``; row
    ``t`` drives the draw of ``n_t``.  The result is a deterministic function
    of ``(archive, z)``.
    """
    T = archive.T
    k = archive.a.shape[1]
    z = np.asarray(z, dtype=float)
    if z.shape != (T + 1, k):
        raise InvalidInputError(f"z must have shape {(T + 1, k)}, got {z.shape}")
    path = np.empty((T + 1, k))
    path[T] = archive.a[T] + _psd_factor(archive.C[T]) @ z[T]
    L = np.empty((k, k))
    for t in range(T - 1, -1, -1):
        a, C, eta, G, V = archive.record(t)
        if not K.chol_jitter(np.ascontiguousarray(V), L):
            raise NumericalFailure(f"singular LNA covariance at step {t + 1}", time=t + 1)
        # V^{-1} applied through the jittered factor
        GC = G @ C
        rhs = np.column_stack([path[t + 1] - eta, GC])
        sol = solve_triangular(L.T, solve_triangular(L, rhs, lower=True), lower=False)
        mean = a + GC.T @ sol[:, 0]
        cov = C - GC.T @ sol[:, 1:]
        path[t] = mean + _psd_factor(cov) @ z[t]
    return path
