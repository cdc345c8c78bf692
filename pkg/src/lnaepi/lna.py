"""Linear noise approximation of the cumulative incidence process.

The LNA state is the triple (eta, G, V): the deterministic mean path, the
fundamental matrix of the linearised residual and the residual covariance.
All three are integrated jointly with fixed-step RK4 so that likelihoods
built on top of them are deterministic functions of the parameters.
"""
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .exceptions import InvalidInputError, NumericalFailure

__all__ = [
    "DEFAULT_STEPS",
    "LnaState",
    "ode_rhs",
    "integrate",
    "transition_moments",
    "sample_transition",
]

DEFAULT_STEPS = 20


@dataclass(frozen=True, eq=False)
class LnaState:
    """Point on an LNA trajectory."""

    eta: np.ndarray
    G: np.ndarray
    V: np.ndarray
    t: float = 0.0

    @classmethod
    def restart(cls, n, V=None, t=0.0):
        """State with ``eta = n``, ``G = I`` and ``V`` (default zero)."""
        n = np.asarray(n, dtype=float)
        k = n.shape[0]
        V = np.zeros((k, k)) if V is None else np.asarray(V, dtype=float)
        return cls(eta=n.copy(), G=np.eye(k), V=V.copy(), t=t)


def _check(model, state):
    k = model.n_latent
    if state.eta.shape != (k,) or state.G.shape != (k, k) or state.V.shape != (k, k):
        raise InvalidInputError(f"LNA state dimensions do not match model {model.name!r}")


def ode_rhs(model, state, params):
    """Time derivatives ``(d eta, dG, dV)`` of the coupled ODE system."""
    _check(model, state)
    k = model.n_latent
    y = np.concatenate([state.eta, state.G.ravel(), state.V.ravel()])
    dy = np.empty_like(y)
    K.lna_rhs(model.terms_fn, y, model.pack(params), k, K.MODE_FULL, dy,
              np.empty(k), np.empty(k), np.empty((k, k)))
    return dy[:k], dy[k:k + k * k].reshape(k, k), dy[k + k * k:].reshape(k, k)


def integrate(model, init, params, t0, t1, n_steps=DEFAULT_STEPS, propagate_G=True):
    """Integrate (eta, G, V) from ``t0`` to ``t1`` with RK4.

    ``V`` is symmetrised after every step.  With ``propagate_G=False`` the
    fundamental matrix is returned as the identity.

    Raises
    ------
    NumericalFailure
        If the state becomes non-finite; ``.time`` holds the failing time.
    """
    _check(model, init)
    if not t1 > t0:
        raise InvalidInputError(f"need t1 > t0, got [{t0}, {t1}]")
    if n_steps < 1:
        raise InvalidInputError("n_steps must be >= 1")
    k = model.n_latent
    eta, G, V = np.empty(k), np.empty((k, k)), np.empty((k, k))
    mode = K.MODE_FULL if propagate_G else K.MODE_ETA_V
    length = t1 - t0
    step = K.lna_integrate(model.terms_fn, np.ascontiguousarray(init.eta),
                           np.ascontiguousarray(init.G), np.ascontiguousarray(init.V),
                           model.pack(params), length, int(n_steps), mode, eta, G, V)
    if step >= 0:
        t_fail = t0 + (step + 1) * length / n_steps
        raise NumericalFailure(f"non-finite LNA state at t={t_fail:g}", time=t_fail)
    return LnaState(eta=eta, G=G, V=V, t=t1)


def transition_moments(model, n_t, params, delta, n_steps=DEFAULT_STEPS):
    """Mean and covariance of N_{t+delta} given N_t = n_t (restarted LNA)."""
    if not delta > 0:
        raise InvalidInputError(f"delta must be positive, got {delta}")
    state = integrate(model, LnaState.restart(n_t), params, 0.0, delta, n_steps,
                      propagate_G=False)
    return state.eta, state.V


def sample_transition(moments, z):
    """Draw ``mean + L z`` with ``L`` the jittered lower Cholesky factor of V."""
    mean, V = moments
    mean = np.asarray(mean, dtype=float)
    z = np.asarray(z, dtype=float)
    if z.shape != mean.shape:
        raise InvalidInputError(f"z must have shape {mean.shape}, got {z.shape}")
    L = np.empty_like(V, dtype=float)
    if not K.chol_jitter(np.ascontiguousarray(V, dtype=float), L):
        raise NumericalFailure("covariance factorisation failed after jitter escalation")
    return mean + L @ z
