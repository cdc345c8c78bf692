"""Exact simulation of the epidemic jump process and synthetic data."""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from .exceptions import InvalidInputError
from .models import incidence_to_prevalence

__all__ = ["EventPath", "simulate_mjp", "corrupt", "as_generator"]


def as_generator(rng_seed):
    """Accept a seed, ``None`` or an existing Generator."""
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.default_rng(rng_seed)


@dataclass(frozen=True, eq=False)
class EventPath:
    """A simulated realisation binned onto a fixed observation grid.

    Attributes
    ----------
    grid_incidence : ndarray (n_windows, n_events)
        Event counts per window.
    times, event_ids : ndarray or None
        Full event list when recorded.
    grid : float
        Window length.
    x0 : tuple
        Initial prevalence.
    log_beta : ndarray or None
        Log infection rate at the grid points (time-varying models only).
    """

    grid_incidence: np.ndarray
    grid: float
    x0: tuple
    times: Optional[np.ndarray] = None
    event_ids: Optional[np.ndarray] = None
    log_beta: Optional[np.ndarray] = None

    @property
    def obs_times(self):
        return self.grid * np.arange(1, self.grid_incidence.shape[0] + 1)

    def cumulative(self):
        """Cumulative incidence at ``t = 0, grid, 2 grid, ...``."""
        n = np.cumsum(self.grid_incidence, axis=0)
        return np.vstack([np.zeros((1, n.shape[1])), n])

    def latent_truth(self, model):
        """Rows ``(t, s, i, n1, n2[, n3])`` at the observation times."""
        n = self.cumulative()[1:]
        x = incidence_to_prevalence(model, n, self.x0)
        return np.column_stack([self.obs_times, x, n])


def simulate_mjp(model, params, t_end, grid, rng_seed=None, record_events=True, substep=0.01):
    """Gillespie direct-method realisation of the incidence process.

    For time-varying infection rates the log rate is advanced by Euler steps
    of width ``substep`` with the rate frozen in between, so those paths are
    approximate.
    """
    if not t_end > 0 or not grid > 0:
        raise InvalidInputError("t_end and grid must be positive")
    n_win = t_end / grid
    if abs(n_win - round(n_win)) > 1e-9:
        raise InvalidInputError(f"grid {grid} must divide t_end {t_end}")
    if not substep > 0:
        raise InvalidInputError("substep must be positive")
    s0, i0 = params.x0
    if s0 + i0 > model.npop:
        raise InvalidInputError(f"s0 + i0 = {s0 + i0} exceeds npop = {model.npop}")
    rng = as_generator(rng_seed)
    init = model.initial_state(params)
    cap = 1024 if record_events else 1
    counts, logb, times, events = K.gillespie_grid(
        model.hazard_fn, model.n_events, model.n_latent, init, model.pack(params),
        float(t_end), float(grid), rng, float(params.sigma_beta), float(substep),
        bool(record_events), np.empty(cap), np.empty(cap, dtype=np.int64))
    return EventPath(
        grid_incidence=counts.astype(np.int64),
        grid=float(grid),
        x0=tuple(params.x0),
        times=times.copy() if record_events else None,
        event_ids=events.copy() if record_events else None,
        log_beta=logb if model.tv_beta else None,
    )


def corrupt(incidence, obs, rng_seed=None):
    """Draw reported counts from the observation model, one per window."""
    inc = np.asarray(incidence)
    if inc.ndim != 2:
        raise InvalidInputError("incidence must be a (windows x events) matrix")
    if np.any(inc < 0) or np.any(inc != np.round(inc)):
        raise InvalidInputError("incidence must hold nonnegative integers")
    m = inc[:, obs.index].astype(np.int64)
    rng = as_generator(rng_seed)
    if obs.kind == "gaussian":
        return m + rng.normal(0.0, np.sqrt(obs.sigma2), size=m.shape)
    if obs.kind == "binomial":
        if not 0.0 < obs.lam <= 1.0:
            raise InvalidInputError(f"binomial lam must lie in (0, 1], got {obs.lam}")
        return rng.binomial(m, obs.lam)
    mu = obs.lam * m
    if obs.phi == 0:
        return rng.poisson(mu)
    size = 1.0 / obs.phi
    return np.where(mu > 0, rng.negative_binomial(size, size / (size + np.maximum(mu, 1e-300))), 0)
