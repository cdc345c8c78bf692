"""Compartment models described as data.

A model is a stoichiometry matrix plus two compiled (``numba.cfunc``)
callbacks:

``hazard(n, p, out)``
    event hazards h*(n) in terms of cumulative incidence ``n``;
``terms(eta, p, drift, diff, F)``
    LNA drift, diagonal diffusion and Jacobian at ``eta``.  ``eta`` may be
    longer than the latent dimension; only its leading entries are read.

``p`` is the packed parameter vector laid out as
``[beta, gamma, kappa, sigma_beta, s0, i0, npop]``.  For models with a
time-varying infection rate the ``beta`` slot is unused and the infection
rate is ``exp(eta[-1])``.  New compartment structures are added by writing
the two callbacks and calling :func:`register_model`.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numba
import numpy as np
from numba import types

from .exceptions import InvalidInputError
from .observation import ObsParams

__all__ = [
    "CompartmentModel",
    "Params",
    "get_model",
    "register_model",
    "hazard_prevalence",
    "hazard_incidence",
    "jacobian",
    "incidence_to_prevalence",
    "MODEL_NAMES",
]

P_BETA, P_GAMMA, P_KAPPA, P_SIGMA, P_S0, P_I0, P_NPOP = range(7)


# -- compiled callbacks ------------------------------------------------------
# Callbacks are C callbacks with fixed signatures rather than jitted
# functions: kernels receiving them are then typed by signature alone, so
# their on-disk compilation cache stays valid across processes.

_VEC = types.float64[::1]
HAZARD_SIGNATURE = types.void(_VEC, _VEC, _VEC)
TERMS_SIGNATURE = types.void(_VEC, _VEC, _VEC, _VEC, types.float64[:, ::1])
_hazard_callback = numba.cfunc(HAZARD_SIGNATURE, cache=True)
_terms_callback = numba.cfunc(TERMS_SIGNATURE, cache=True)

# Hazards are zeroed outside the physical region (s, i or r not positive);
# the matching Jacobian rows are zeroed with them.

@_hazard_callback
def _sir_hazard(n, p, out):
    s = p[4] - n[0]
    i = p[5] + n[0] - n[1]
    out[0] = p[0] * s * i if (s > 0.0 and i > 0.0) else 0.0
    out[1] = p[1] * i if i > 0.0 else 0.0


@_terms_callback
def _sir_terms(eta, p, drift, diff, F):
    F[:, :] = 0.0
    s = p[4] - eta[0]
    i = p[5] + eta[0] - eta[1]
    beta = p[0]
    if s > 0.0 and i > 0.0:
        drift[0] = beta * s * i
        F[0, 0] = beta * (s - i)
        F[0, 1] = -beta * s
    else:
        drift[0] = 0.0
    if i > 0.0:
        drift[1] = p[1] * i
        F[1, 0] = p[1]
        F[1, 1] = -p[1]
    else:
        drift[1] = 0.0
    diff[0] = drift[0]
    diff[1] = drift[1]


@_hazard_callback
def _sir_tv_hazard(n, p, out):
    s = p[4] - n[0]
    i = p[5] + n[0] - n[1]
    out[0] = np.exp(n[2]) * s * i if (s > 0.0 and i > 0.0) else 0.0
    out[1] = p[1] * i if i > 0.0 else 0.0


@_terms_callback
def _sir_tv_terms(eta, p, drift, diff, F):
    F[:, :] = 0.0
    s = p[4] - eta[0]
    i = p[5] + eta[0] - eta[1]
    beta = np.exp(eta[2])
    if s > 0.0 and i > 0.0:
        drift[0] = beta * s * i
        F[0, 0] = beta * (s - i)
        F[0, 1] = -beta * s
        F[0, 2] = drift[0]
    else:
        drift[0] = 0.0
    if i > 0.0:
        drift[1] = p[1] * i
        F[1, 0] = p[1]
        F[1, 1] = -p[1]
    else:
        drift[1] = 0.0
    drift[2] = 0.0
    diff[0] = drift[0]
    diff[1] = drift[1]
    diff[2] = p[3] * p[3]


@_hazard_callback
def _sirs_hazard(n, p, out):
    s = p[4] - n[0] + n[2]
    i = p[5] + n[0] - n[1]
    r = p[6] - s - i
    out[0] = p[0] * s * i if (s > 0.0 and i > 0.0) else 0.0
    out[1] = p[1] * i if i > 0.0 else 0.0
    out[2] = p[2] * r if r > 0.0 else 0.0


@_terms_callback
def _sirs_terms(eta, p, drift, diff, F):
    F[:, :] = 0.0
    s = p[4] - eta[0] + eta[2]
    i = p[5] + eta[0] - eta[1]
    r = p[6] - s - i
    beta = p[0]
    if s > 0.0 and i > 0.0:
        drift[0] = beta * s * i
        F[0, 0] = beta * (s - i)
        F[0, 1] = -beta * s
        F[0, 2] = beta * i
    else:
        drift[0] = 0.0
    if i > 0.0:
        drift[1] = p[1] * i
        F[1, 0] = p[1]
        F[1, 1] = -p[1]
    else:
        drift[1] = 0.0
    if r > 0.0:
        drift[2] = p[2] * r
        F[2, 1] = p[2]
        F[2, 2] = -p[2]
    else:
        drift[2] = 0.0
    for k in range(3):
        diff[k] = drift[k]


@_hazard_callback
def _sirs_tv_hazard(n, p, out):
    s = p[4] - n[0] + n[2]
    i = p[5] + n[0] - n[1]
    r = p[6] - s - i
    out[0] = np.exp(n[3]) * s * i if (s > 0.0 and i > 0.0) else 0.0
    out[1] = p[1] * i if i > 0.0 else 0.0
    out[2] = p[2] * r if r > 0.0 else 0.0


@_terms_callback
def _sirs_tv_terms(eta, p, drift, diff, F):
    F[:, :] = 0.0
    s = p[4] - eta[0] + eta[2]
    i = p[5] + eta[0] - eta[1]
    r = p[6] - s - i
    beta = np.exp(eta[3])
    if s > 0.0 and i > 0.0:
        drift[0] = beta * s * i
        F[0, 0] = beta * (s - i)
        F[0, 1] = -beta * s
        F[0, 2] = beta * i
        F[0, 3] = drift[0]
    else:
        drift[0] = 0.0
    if i > 0.0:
        drift[1] = p[1] * i
        F[1, 0] = p[1]
        F[1, 1] = -p[1]
    else:
        drift[1] = 0.0
    if r > 0.0:
        drift[2] = p[2] * r
        F[2, 1] = p[2]
        F[2, 2] = -p[2]
    else:
        drift[2] = 0.0
    drift[3] = 0.0
    for k in range(3):
        diff[k] = drift[k]
    diff[3] = p[3] * p[3]


# -- model and parameter containers -----------------------------------------

@dataclass(frozen=True, eq=False)
class CompartmentModel:
    """Immutable description of a compartment model.

    Attributes
    ----------
    name : str
    n_events : int
        Number of event types (2 for SIR, 3 for SIRS).
    stoich : ndarray of shape (2, n_events)
        Net change of (S, I) per event.
    npop : float
        Total (fixed) population size.
    tv_beta : bool
        Whether log beta is carried as an extra latent component.
    """

    name: str
    n_events: int
    stoich: np.ndarray
    npop: float
    tv_beta: bool
    hazard_fn: Callable = field(repr=False)
    terms_fn: Callable = field(repr=False)
    event_names: Tuple[str, ...] = ()

    @property
    def n_latent(self):
        return self.n_events + int(self.tv_beta)

    @property
    def has_kappa(self):
        return self.n_events == 3

    def pack(self, params):
        """Flatten ``params`` into the vector consumed by compiled kernels."""
        s0, i0 = params.x0
        return np.array([
            0.0 if self.tv_beta else params.beta,
            params.gamma,
            params.kappa,
            params.sigma_beta,
            float(s0),
            float(i0),
            float(self.npop),
        ])

    def initial_state(self, params):
        """Incidence at t = 0: zero counts, plus log beta0 when time-varying."""
        n0 = np.zeros(self.n_latent)
        if self.tv_beta:
            if params.log_beta0 is None:
                raise InvalidInputError(f"model {self.name!r} needs log_beta0")
            n0[-1] = params.log_beta0
        return n0


@dataclass(frozen=True)
class Params:
    """Natural-scale parameters of a model plus its observation process.

    ``beta`` is ignored by time-varying models, which use ``log_beta0`` as
    the initial value of the log infection rate instead.
    """

    gamma: float
    x0: Tuple[float, float]
    beta: float = 0.0
    kappa: float = 0.0
    sigma_beta: float = 0.0
    log_beta0: Optional[float] = None
    obs: Optional[ObsParams] = None

    def __post_init__(self):
        for name in ("beta", "gamma", "kappa", "sigma_beta"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise InvalidInputError(f"{name} must be finite and >= 0, got {v}")
        if len(self.x0) != 2 or min(self.x0) < 0:
            raise InvalidInputError(f"x0 must be a nonnegative pair, got {self.x0}")

    def replace(self, **changes):
        from dataclasses import replace

        return replace(self, **changes)


_REGISTRY = {}

_SIR_S = np.array([[-1, 0], [1, -1]])
_SIRS_S = np.array([[-1, 0, 1], [1, -1, 0]])


def _as_callback(fn, signature):
    if hasattr(fn, "address"):
        return fn
    return numba.cfunc(signature)(getattr(fn, "py_func", fn))


def register_model(name, n_events, stoich, tv_beta, hazard_fn, terms_fn, event_names=()):
    """Make a model available to :func:`get_model` under ``name``.

    ``hazard_fn`` and ``terms_fn`` may be plain Python functions, jitted
    functions or ``numba.cfunc`` callbacks with ``HAZARD_SIGNATURE`` and
    ``TERMS_SIGNATURE``; the first two are compiled to callbacks here.
    """
    _REGISTRY[name] = dict(
        n_events=n_events,
        stoich=np.asarray(stoich),
        tv_beta=tv_beta,
        hazard_fn=_as_callback(hazard_fn, HAZARD_SIGNATURE),
        terms_fn=_as_callback(terms_fn, TERMS_SIGNATURE),
        event_names=tuple(event_names),
    )


register_model("sir", 2, _SIR_S, False, _sir_hazard, _sir_terms, ("infection", "removal"))
register_model("sir-tvbeta", 2, _SIR_S, True, _sir_tv_hazard, _sir_tv_terms,
               ("infection", "removal"))
register_model("sirs", 3, _SIRS_S, False, _sirs_hazard, _sirs_terms,
               ("infection", "removal", "immunity_loss"))
register_model("sirs-tvbeta", 3, _SIRS_S, True, _sirs_tv_hazard, _sirs_tv_terms,
               ("infection", "removal", "immunity_loss"))

MODEL_NAMES = tuple(_REGISTRY)


def get_model(name, npop):
    """Build a registered model for a population of size ``npop``."""
    try:
        spec = _REGISTRY[name]
    except KeyError:
        raise InvalidInputError(
            f"unknown model {name!r}; choose from {sorted(_REGISTRY)}") from None
    if not npop > 0:
        raise InvalidInputError(f"npop must be positive, got {npop}")
    return CompartmentModel(name=name, npop=float(npop), **spec)


# -- python-level operations -------------------------------------------------

def incidence_to_prevalence(model, n, x0):
    """Map cumulative incidence to prevalence, ``x = x0 + S n``.

    ``n`` may carry extra trailing components (e.g. log beta); only the first
    ``n_events`` are used.  Works on a single vector or a stack of them along
    the last axis.
    """
    n = np.asarray(n, dtype=float)
    counts = n[..., : model.n_events]
    return np.asarray(x0, dtype=float) + counts @ model.stoich.T


def hazard_prevalence(model, x, params, log_beta=None):
    """Event hazards as a function of prevalence ``x = (s, i)``.

    For time-varying models the infection rate is ``exp(log_beta)``,
    defaulting to ``params.log_beta0``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (2,):
        raise InvalidInputError(f"prevalence must have shape (2,), got {x.shape}")
    s, i = x
    if model.tv_beta:
        lb = params.log_beta0 if log_beta is None else log_beta
        beta = np.exp(lb)
    else:
        beta = params.beta
    h = np.zeros(model.n_events)
    h[0] = beta * s * i if (s > 0 and i > 0) else 0.0
    h[1] = params.gamma * i if i > 0 else 0.0
    if model.n_events == 3:
        r = model.npop - s - i
        h[2] = params.kappa * r if r > 0 else 0.0
    return h


def hazard_incidence(model, n, params):
    """Event hazards h*(n) written in terms of cumulative incidence."""
    n = _check_state(model, n)
    x = incidence_to_prevalence(model, n, params.x0)
    return hazard_prevalence(model, x, params, log_beta=n[-1] if model.tv_beta else None)


def jacobian(model, eta, params):
    """Jacobian of the LNA drift with respect to the latent state."""
    eta = _check_state(model, eta)
    k = model.n_latent
    drift, diff, F = np.empty(k), np.empty(k), np.empty((k, k))
    model.terms_fn(eta, model.pack(params), drift, diff, F)
    return F


def _check_state(model, n):
    n = np.asarray(n, dtype=float)
    if n.shape != (model.n_latent,):
        raise InvalidInputError(
            f"state for {model.name!r} must have shape ({model.n_latent},), got {n.shape}")
    return n
