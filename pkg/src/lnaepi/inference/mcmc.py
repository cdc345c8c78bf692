"""Random-walk Metropolis-Hastings engines.

Four schemes share one kernel and differ only in the likelihood they plug
in:

* ``ffmh``   -- forward-filter likelihood (analytic marginalisation),
* ``ode_mh`` -- deterministic ODE latent path,
* ``pmmh``   -- particle-filter estimate with fresh auxiliary variables,
* ``cpmmh``  -- particle-filter estimate with Crank-Nicolson auxiliary moves.
"""
import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from ..exceptions import InvalidInputError, NumericalFailure
from ..gaussfilter import backward_sample, forward_filter, ode_loglik
from ..lna import DEFAULT_STEPS
from ..smc import AuxBlock, pf_loglik, sample_path

__all__ = [
    "SCHEMES",
    "DEFAULT_TARGET_ACCEPT",
    "ChainSettings",
    "ChainOutput",
    "MHState",
    "mh_kernel",
    "cn_update",
    "run_chain",
    "make_likelihood",
    "loglik_variance",
    "stream",
]

logger = logging.getLogger(__name__)

SCHEMES = ("ffmh", "ode_mh", "pmmh", "cpmmh")
DEFAULT_TARGET_ACCEPT = {"ffmh": 0.25, "ode_mh": 0.25, "pmmh": 0.10, "cpmmh": 0.15}
_STREAMS = {"simulate": 0, "corrupt": 1, "pilot": 2, "chain": 3, "aux": 4, "paths": 5}


def stream(seed, name):
    """Independent named generator derived from one master seed."""
    ss = np.random.SeedSequence(seed, spawn_key=(_STREAMS[name],))
    return np.random.default_rng(ss)


@dataclass
class ChainSettings:
    """Run-time settings of :func:`run_chain`.

    ``iterations`` counts retained draws; ``ceil(pilot_fraction *
    iterations)`` extra pilot iterations are run first and discarded.
    """

    iterations: int = 10_000
    n_particles: Optional[int] = None
    rho: Optional[float] = None
    pilot_fraction: float = 0.1
    n_steps: int = DEFAULT_STEPS
    interval: float = 1.0
    seed: Optional[int] = None
    target_accept: Optional[float] = None
    sample_paths: bool = False
    path_thin: int = 1
    init: Optional[np.ndarray] = None
    pilot_sd: float = 0.1
    sort: bool = True
    propagation: str = "lna"
    logbeta_var: float = 0.0


@dataclass
class MHState:
    theta: np.ndarray
    log_prior: float
    loglik: float
    aux: Optional[np.ndarray] = None
    extra: Any = None

    @property
    def log_post(self):
        return self.log_prior + self.loglik


@dataclass
class ChainOutput:
    """Retained MCMC output.

    Attributes
    ----------
    names : tuple of str
    draws : ndarray (iterations, n_free)
        Draws on the unconstrained (log / logit) scale.
    loglik : ndarray (iterations,)
        Log-likelihood (or its estimate) of each retained draw.
    accepted : ndarray of bool
    paths : ndarray or None
        Sampled latent incidence paths, ``(n_paths, T + 1, n_latent)``.
    path_index : ndarray or None
        Iteration index of each stored path.
    elapsed : float
        Wall-clock seconds of the retained phase.
    """

    names: tuple
    draws: np.ndarray
    loglik: np.ndarray
    accepted: np.ndarray
    scheme: str = "ffmh"
    paths: Optional[np.ndarray] = None
    path_index: Optional[np.ndarray] = None
    elapsed: float = 0.0
    proposal_cov: Optional[np.ndarray] = None
    scale: float = float("nan")
    pilot_acceptance: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def acceptance_rate(self):
        return float(np.mean(self.accepted)) if self.accepted.size else float("nan")

    def __len__(self):
        return self.draws.shape[0]


def _factor(cov):
    w, U = np.linalg.eigh(0.5 * (cov + cov.T))
    if np.any(w < -1e-12 * max(1.0, np.abs(w).max())):
        raise InvalidInputError("proposal covariance is not positive semi-definite")
    return U * np.sqrt(np.clip(w, 0.0, None))


def _evaluate(theta, loglik_fn, log_prior_fn, aux):
    lp = log_prior_fn(theta)
    if not np.isfinite(lp):
        return lp, -math.inf, None
    try:
        ll, extra = loglik_fn(theta, aux)
    except (InvalidInputError, NumericalFailure, OverflowError, FloatingPointError):
        return lp, -math.inf, None
    return lp, ll, extra


def mh_kernel(current, proposal_cov, scale, loglik_fn, log_prior_fn, rng, propose_aux=None,
              factor=None):
    """One random-walk MH step on the free scale.

    The proposal is ``theta + scale * L xi`` with ``L L' = proposal_cov``;
    being symmetric, it needs no Hastings correction.  For pseudo-marginal
    schemes ``propose_aux(aux, rng)`` proposes the auxiliary variables and
    ``loglik_fn`` returns an estimate.  Non-finite proposed log-posteriors are
    rejected.

    Returns
    -------
    (MHState, accepted, alpha)
    """
    if factor is None:
        factor = _factor(np.atleast_2d(proposal_cov))
    xi = rng.standard_normal(current.theta.shape[0])
    theta = current.theta + scale * (factor @ xi)
    aux = propose_aux(current.aux, rng) if propose_aux is not None else current.aux
    lp, ll, extra = _evaluate(theta, loglik_fn, log_prior_fn, aux)
    log_u = math.log(rng.random() or 5e-324)
    post = lp + ll
    if not np.isfinite(post):
        return current, False, 0.0
    delta = post - current.log_post
    alpha = 1.0 if delta >= 0 else math.exp(delta)
    if log_u < delta:
        return MHState(theta, lp, ll, aux, extra), True, alpha
    return current, False, alpha


def cn_update(aux, rho, rng):
    """Crank-Nicolson move ``rho * u + sqrt(1 - rho^2) * xi`` on every entry.

    Accepts an :class:`AuxBlock` or a flat array and returns the same type.
    """
    if not 0.0 <= rho <= 1.0:
        raise InvalidInputError(f"rho must lie in [0, 1], got {rho}")
    if isinstance(aux, AuxBlock):
        flat = cn_update(aux.flat(), rho, rng)
        return AuxBlock.from_flat(flat, aux.z.shape)
    aux = np.asarray(aux, dtype=float)
    xi = rng.standard_normal(aux.shape)
    if rho == 1.0:
        return aux.copy()
    return rho * aux + math.sqrt(1.0 - rho * rho) * xi


def make_likelihood(scheme, model, space, y, settings):
    """``loglik_fn(theta, aux) -> (loglik, extra)`` for a scheme.

    ``extra`` is the filter archive (ffmh), a particle system (pmmh/cpmmh)
    or ``None`` (ode_mh); it is only used for latent path sampling.
    """
    y = np.asarray(y, dtype=float)
    interval, n_steps = settings.interval, settings.n_steps
    if scheme == "ffmh":
        def fn(theta, aux):
            params = space.inverse_transform(theta)
            return forward_filter(model, params, y, interval, n_steps, settings.logbeta_var,
                                  raise_on_failure=False)
    elif scheme == "ode_mh":
        def fn(theta, aux):
            params = space.inverse_transform(theta)
            return ode_loglik(model, params, y, interval, n_steps, raise_on_failure=False), None
    elif scheme in ("pmmh", "cpmmh"):
        shape = (y.shape[0], settings.n_particles, model.n_latent)

        def fn(theta, aux):
            params = space.inverse_transform(theta)
            block = AuxBlock.from_flat(aux, shape)
            return pf_loglik(model, params, y, block, propagation=settings.propagation,
                             interval=interval, n_steps=n_steps, sort=settings.sort)
    else:
        raise InvalidInputError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    return fn


def _check_settings(scheme, settings):
    if scheme not in SCHEMES:
        raise InvalidInputError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    if settings.iterations < 0:
        raise InvalidInputError("iterations must be >= 0")
    if scheme in ("pmmh", "cpmmh"):
        if not settings.n_particles or settings.n_particles < 1:
            raise InvalidInputError(f"{scheme} needs n_particles >= 1")
    if scheme == "cpmmh":
        if settings.rho is None or not 0.0 <= settings.rho <= 1.0:
            raise InvalidInputError("cpmmh needs rho in [0, 1]")
    if not 0.0 <= settings.pilot_fraction < 1.0:
        raise InvalidInputError("pilot_fraction must lie in [0, 1)")


def _aux_dim(scheme, model, y, settings):
    if scheme not in ("pmmh", "cpmmh"):
        return 0
    T = len(y)
    return T * settings.n_particles * model.n_latent + T


def _initial_state(theta0, loglik_fn, log_prior_fn, aux_dim, aux_rng, max_tries=100):
    for _ in range(max_tries if aux_dim else 1):
        aux = aux_rng.standard_normal(aux_dim) if aux_dim else None
        lp, ll, extra = _evaluate(theta0, loglik_fn, log_prior_fn, aux)
        if np.isfinite(lp + ll):
            return MHState(np.array(theta0, dtype=float), lp, ll, aux, extra)
    raise NumericalFailure("could not find a finite log-posterior at the initial parameters")


def _sample_cov(draws):
    if draws.shape[0] < 2:
        return None
    cov = np.atleast_2d(np.cov(draws, rowvar=False))
    return cov


def _robust_cov(draws, fallback):
    cov = _sample_cov(draws)
    if cov is None:
        return fallback
    try:
        np.linalg.cholesky(cov)
        return cov
    except np.linalg.LinAlgError:
        var = np.diag(cov)
        warnings.warn("pilot covariance is singular; using its diagonal", RuntimeWarning)
        if np.all(var > 0):
            return np.diag(var)
        return fallback


def _pilot(state, n_pilot, proposal_cov, scale, target, loglik_fn, log_prior_fn, rng,
           propose_aux):
    """Short run with Robbins-Monro tuning of the log proposal scale."""
    factor = _factor(proposal_cov)
    draws = np.empty((n_pilot, state.theta.shape[0]))
    acc = 0
    log_s = math.log(scale)
    for j in range(n_pilot):
        state, accepted, alpha = mh_kernel(state, proposal_cov, math.exp(log_s), loglik_fn,
                                           log_prior_fn, rng, propose_aux, factor)
        log_s += (alpha - target) / (j + 1) ** 0.6
        log_s = min(max(log_s, -12.0), 3.0)
        acc += accepted
        draws[j] = state.theta
    return state, draws, math.exp(log_s), acc / max(n_pilot, 1)


def run_chain(scheme, model, space, y, settings=None, init=None):
    """Run one of the MH schemes and return the retained output.

    A pilot phase (discarded) estimates the proposal covariance from its
    draws and tunes the scale toward the scheme's target acceptance rate;
    the retained phase then uses a fixed proposal.
    """
    settings = settings or ChainSettings()
    _check_settings(scheme, settings)
    y = np.asarray(y, dtype=float)
    d = space.dim
    names = space.names
    if settings.iterations == 0:
        return ChainOutput(names, np.empty((0, d)), np.empty(0), np.empty(0, dtype=bool),
                           scheme=scheme)
    target = settings.target_accept or DEFAULT_TARGET_ACCEPT[scheme]
    loglik_fn = make_likelihood(scheme, model, space, y, settings)
    log_prior_fn = space.log_prior
    aux_dim = _aux_dim(scheme, model, y, settings)
    aux_rng = stream(settings.seed, "aux")
    if scheme == "cpmmh":
        rho = settings.rho

        def propose_aux(aux, rng):
            return cn_update(aux, rho, aux_rng)
    elif scheme == "pmmh":
        def propose_aux(aux, rng):
            return aux_rng.standard_normal(aux_dim)
    else:
        propose_aux = None

    theta0 = settings.init if settings.init is not None else init
    if theta0 is None:
        theta0 = space.center()
    state = _initial_state(np.asarray(theta0, dtype=float), loglik_fn, log_prior_fn, aux_dim,
                           aux_rng)

    # pilot: diagonal proposal, then the covariance of the first half
    pilot_rng = stream(settings.seed, "pilot")
    n_pilot = int(math.ceil(settings.pilot_fraction * settings.iterations))
    diag = np.eye(d) * settings.pilot_sd ** 2
    scale = 2.38 / math.sqrt(d)
    cov = diag
    pilot_acc = float("nan")
    if n_pilot >= 2:
        half = n_pilot // 2
        state, draws_a, _, _ = _pilot(state, half, diag, 1.0, target, loglik_fn,
                                      log_prior_fn, pilot_rng, propose_aux)
        cov_a = _robust_cov(draws_a[half // 2:], diag)
        state, draws_b, scale, pilot_acc = _pilot(state, n_pilot - half, cov_a, scale, target,
                                                  loglik_fn, log_prior_fn, pilot_rng,
                                                  propose_aux)
        cov = _robust_cov(draws_b, cov_a)
    logger.info("%s pilot: acceptance %.3f, scale %.3f", scheme, pilot_acc, scale)

    rng = stream(settings.seed, "chain")
    path_rng = stream(settings.seed, "paths")
    factor = _factor(cov)
    n_it = settings.iterations
    draws = np.empty((n_it, d))
    logliks = np.empty(n_it)
    accepted = np.zeros(n_it, dtype=bool)
    paths, path_index = [], []
    t_start = time.perf_counter()
    for it in range(n_it):
        state, acc, _ = mh_kernel(state, cov, scale, loglik_fn, log_prior_fn, rng,
                                  propose_aux, factor)
        draws[it] = state.theta
        logliks[it] = state.loglik
        accepted[it] = acc
        if settings.sample_paths and it % settings.path_thin == 0:
            paths.append(_draw_path(scheme, state, model, path_rng))
            path_index.append(it)
    elapsed = time.perf_counter() - t_start
    return ChainOutput(
        names=names,
        draws=draws,
        loglik=logliks,
        accepted=accepted,
        scheme=scheme,
        paths=np.array(paths) if settings.sample_paths else None,
        path_index=np.array(path_index) if settings.sample_paths else None,
        elapsed=elapsed,
        proposal_cov=cov,
        scale=scale,
        pilot_acceptance=pilot_acc,
    )


def _draw_path(scheme, state, model, rng):
    if scheme == "ffmh":
        archive = state.extra
        return backward_sample(archive, rng.standard_normal((archive.T + 1, model.n_latent)))
    if scheme in ("pmmh", "cpmmh"):
        return sample_path(state.extra, rng.random())
    raise InvalidInputError("ode_mh has no latent path to sample")


def loglik_variance(model, params, y, n_particles, n_reps=100, rho=None, seed=None,
                    interval=1.0, n_steps=DEFAULT_STEPS, sort=True, propagation="lna"):
    """Spread of particle-filter log-likelihood estimates at fixed parameters.

    With ``rho=None`` returns the variance of ``n_reps`` independent
    estimates.  With a ``rho`` the auxiliary block is moved by successive
    Crank-Nicolson steps and the variance of differences of consecutive
    estimates is returned (the quantity that governs CPMMH mixing).
    """
    y = np.asarray(y, dtype=float)
    rng = stream(seed, "aux")
    shape = (y.shape[0], n_particles, model.n_latent)
    aux = AuxBlock.draw(rng, *shape).flat()
    values = []
    for _ in range(n_reps + (rho is not None)):
        ll, _ = pf_loglik(model, params, y, AuxBlock.from_flat(aux, shape),
                          propagation=propagation, interval=interval, n_steps=n_steps,
                          sort=sort)
        values.append(ll)
        aux = cn_update(aux, rho, rng) if rho is not None else rng.standard_normal(aux.shape)
    values = np.array(values)
    if rho is not None:
        ok = np.isfinite(values[1:]) & np.isfinite(values[:-1])
        values = (values[1:] - values[:-1])[ok]
    finite = values[np.isfinite(values)]
    if finite.size < 2:
        return float("inf")
    return float(np.var(finite, ddof=1))
