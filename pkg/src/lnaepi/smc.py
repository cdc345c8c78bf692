"""Bootstrap particle filter giving an unbiased likelihood estimator.

The estimator is a deterministic function of the parameters and of an
auxiliary block of standard-normal variates (:class:`AuxBlock`), which is
what allows successive estimates to be correlated in CPMMH.
"""
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .exceptions import DegenerateWeightsError, InvalidInputError, NumericalFailure
from .lna import DEFAULT_STEPS

__all__ = [
    "AuxBlock",
    "ParticleSystem",
    "systematic_resample",
    "sort_particles",
    "pf_loglik",
    "sample_path",
]


@dataclass(frozen=True, eq=False)
class AuxBlock:
    """All randomness consumed by one particle-filter run.

    ``z`` has shape ``(T, N, n_latent)`` and drives propagation; ``u_bar``
    has shape ``(T,)`` and is mapped through the standard-normal CDF to the
    resampling uniforms.
    """

    z: np.ndarray
    u_bar: np.ndarray

    @classmethod
    def draw(cls, rng, T, N, n_latent):
        return cls(z=rng.standard_normal((T, N, n_latent)), u_bar=rng.standard_normal(T))

    @property
    def shape(self):
        return self.z.shape

    def flat(self):
        return np.concatenate([self.z.ravel(), self.u_bar])

    @classmethod
    def from_flat(cls, flat, shape):
        n = int(np.prod(shape))
        return cls(z=flat[:n].reshape(shape), u_bar=flat[n:].copy())


@dataclass(frozen=True, eq=False)
class ParticleSystem:
    """Stored output of a particle-filter run.

    Attributes
    ----------
    particles : ndarray (T + 1, N, n_latent)
        Propagated particles at each observation time, before resampling.
    logw : ndarray (T, N)
        Unnormalised log-weights of ``particles[1:]``.
    ancestors : ndarray (T, N)
        ``ancestors[t, k]`` indexes the parent of ``particles[t + 1, k]`` in
        ``particles[t]``.
    loglik : float
    degenerate : bool
        True if every weight vanished at some step (``loglik = -inf``).
    """

    particles: np.ndarray
    logw: np.ndarray
    ancestors: np.ndarray
    loglik: float
    degenerate: bool = False


def systematic_resample(weights, u, n=None):
    """Indices selected by systematic resampling with a single uniform ``u``.

    Draws ``n`` indices (default ``len(weights)``) at positions
    ``(j + u) / n``, ``j = 0..n-1``.
    """
    w = np.ascontiguousarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise InvalidInputError("weights must be a non-empty vector")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InvalidInputError("weights must be finite and nonnegative")
    total = w.sum()
    if total == 0:
        raise DegenerateWeightsError("all particle weights are zero")
    if abs(total - 1.0) > 1e-12:
        raise InvalidInputError(f"weights must sum to 1 (got {total!r})")
    if not 0.0 <= u < 1.0:
        raise InvalidInputError(f"u must lie in [0, 1), got {u}")
    n = w.size if n is None else int(n)
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    out = np.empty(n, dtype=np.int64)
    K.systematic_indices(w, float(u), out)
    return out


def sort_particles(particles):
    """Permutation ordering particles by Euclidean distance from the one with
    the smallest first component (ties broken by lowest index)."""
    x = np.asarray(particles, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 1:
        raise InvalidInputError("need at least one particle")
    return K.sort_permutation(np.ascontiguousarray(x))


def pf_loglik(model, params, y, aux, N=None, propagation="lna", interval=1.0,
              n_steps=DEFAULT_STEPS, sort=True):
    """Particle-filter estimate of the observed-data log-likelihood.

    Parameters
    ----------
    model, params
        Model and parameters; ``params.obs`` must be set.
    y : array of shape (T,)
    aux : AuxBlock
        Shape ``(T, N, n_latent)``.
    N : int, optional
        Number of particles; checked against ``aux`` when given.
    propagation : {"lna", "mjp"}
        ``"mjp"`` replaces the LNA transition by exact Gillespie runs driven
        by a counter-based stream seeded from ``aux`` (no CPMMH correlation).
    sort : bool
        Sort particles before propagation.

    Returns
    -------
    loglik : float
        ``-inf`` if all weights vanished at some step.
    system : ParticleSystem
    """
    if params.obs is None:
        raise InvalidInputError("params.obs must be set")
    y = np.ascontiguousarray(y, dtype=float)
    T = y.shape[0]
    k = model.n_latent
    if aux.z.ndim != 3 or aux.z.shape[0] != T or aux.z.shape[2] != k or aux.u_bar.shape != (T,):
        raise InvalidInputError(
            f"aux block shape {aux.z.shape}/{aux.u_bar.shape} does not match (T={T}, n_latent={k})")
    n_part = aux.z.shape[1]
    if N is not None and N != n_part:
        raise InvalidInputError(f"aux block holds {n_part} particles, N={N} requested")
    if propagation not in ("lna", "mjp"):
        raise InvalidInputError(f"propagation must be 'lna' or 'mjp', got {propagation!r}")
    mjp = propagation == "mjp"
    if mjp and model.tv_beta:
        raise InvalidInputError("mjp propagation needs a constant infection rate")
    hist = np.empty((T + 1, n_part, k))
    anc = np.zeros((T, n_part), dtype=np.int64)
    logw = np.full((T, n_part), -np.inf)
    code, lam, sigma2, phi, target = params.obs.as_tuple()
    init = model.initial_state(params)
    ll, status, step = K.pf_run(
        model.terms_fn, model.hazard_fn, model.n_events, init, model.pack(params), y,
        float(interval), int(n_steps), code, lam, sigma2, phi, target,
        np.ascontiguousarray(aux.z), np.ascontiguousarray(aux.u_bar), bool(sort), mjp,
        hist, anc, logw)
    system = ParticleSystem(particles=hist, logw=logw, ancestors=anc, loglik=ll,
                            degenerate=status == K.DEGENERATE)
    return ll, system


def sample_path(stored, u_path):
    """Trace one particle lineage back from the final step.

    The terminal particle is chosen with probability proportional to the
    final weights, by inverting their CDF at ``u_path``.
    """
    if stored.degenerate:
        raise NumericalFailure("cannot sample a path from a degenerate particle system")
    T = stored.logw.shape[0]
    if T == 0:
        return stored.particles[:1, 0].copy()
    lw = stored.logw[T - 1]
    w = np.exp(lw - lw.max())
    cdf = np.cumsum(w / w.sum())
    k = int(min(np.searchsorted(cdf, u_path, side="right"), w.size - 1))
    path = np.empty((T + 1, stored.particles.shape[2]))
    for t in range(T, 0, -1):
        path[t] = stored.particles[t, k]
        k = stored.ancestors[t - 1, k]
    path[0] = stored.particles[0, k]
    return path
