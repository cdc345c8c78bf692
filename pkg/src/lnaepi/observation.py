"""Observation models linking interval incidence to reported counts."""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import InvalidInputError

__all__ = ["ObsParams", "obs_logdensity", "gaussian_approx", "EPS", "KINDS", "TARGETS"]

EPS = 1e-8
KINDS = ("gaussian", "binomial", "negbinomial")
TARGETS = ("infections", "removals")

_REQUIRED = {
    "gaussian": ("sigma2",),
    "binomial": ("lam",),
    "negbinomial": ("lam", "phi"),
}


@dataclass(frozen=True)
class ObsParams:
    """Parameters of one of the three observation models.

    Attributes
    ----------
    kind : {"gaussian", "binomial", "negbinomial"}
    lam : float, optional
        Reporting proportion in (0, 1].
    sigma2 : float, optional
        Observation variance (gaussian only).
    phi : float, optional
        Inverse overdispersion, ``Var = mu + phi mu^2`` (negbinomial only).
    target : {"infections", "removals"}
        Which incidence component is observed.
    """

    kind: str
    lam: Optional[float] = None
    sigma2: Optional[float] = None
    phi: Optional[float] = None
    target: str = "infections"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"obs kind must be one of {KINDS}, got {self.kind!r}")
        if self.target not in TARGETS:
            raise InvalidInputError(f"obs target must be one of {TARGETS}, got {self.target!r}")
        needed = _REQUIRED[self.kind]
        for name in ("lam", "sigma2", "phi"):
            value = getattr(self, name)
            if name in needed and value is None:
                raise InvalidInputError(f"{self.kind} observations need {name}")
            if name not in needed and value is not None:
                raise InvalidInputError(f"{name} is not a parameter of {self.kind} observations")
        if self.lam is not None and not 0.0 < self.lam <= 1.0:
            raise InvalidInputError(f"lam must lie in (0, 1], got {self.lam}")
        if self.sigma2 is not None and not self.sigma2 > 0:
            raise InvalidInputError(f"sigma2 must be positive, got {self.sigma2}")
        if self.phi is not None and not self.phi >= 0:
            raise InvalidInputError(f"phi must be >= 0, got {self.phi}")

    @property
    def index(self):
        """Position of the observed component in the incidence vector."""
        return TARGETS.index(self.target)

    @property
    def code(self):
        return KINDS.index(self.kind)

    def as_tuple(self):
        """``(code, lam, sigma2, phi, index)`` for the compiled kernels."""
        return (
            self.code,
            1.0 if self.lam is None else float(self.lam),
            1.0 if self.sigma2 is None else float(self.sigma2),
            0.0 if self.phi is None else float(self.phi),
            self.index,
        )

    def replace(self, **changes):
        from dataclasses import replace

        return replace(self, **changes)


def _observed(delta_n, obs):
    delta_n = np.atleast_1d(np.asarray(delta_n, dtype=float))
    return float(delta_n[obs.index])


def obs_logdensity(y, delta_n, obs):
    """Log density of a reported count given the interval incidence.

    The Binomial trial count is the real number ``m = P' delta_n``; the
    coefficient uses log-Gamma so that integer ``m`` recovers the exact pmf.
    Returns ``-inf`` outside the support.
    """
    m = _observed(delta_n, obs)
    y = float(y)
    if obs.kind == "gaussian":
        r = y - m
        return -0.5 * (math.log(2 * math.pi * obs.sigma2) + r * r / obs.sigma2)
    if y < 0:
        return -math.inf
    if obs.kind == "binomial":
        if m < y or m < 0:
            return -math.inf
        if obs.lam >= 1.0:
            return 0.0 if m == y else -math.inf
        return (math.lgamma(m + 1) - math.lgamma(y + 1) - math.lgamma(m - y + 1)
                + y * math.log(obs.lam) + (m - y) * math.log1p(-obs.lam))
    mu = obs.lam * max(m, EPS)
    if obs.phi == 0:
        return y * math.log(mu) - mu - math.lgamma(y + 1)
    size = 1.0 / obs.phi
    return (math.lgamma(y + size) - math.lgamma(size) - math.lgamma(y + 1)
            + size * math.log(size / (size + mu)) + y * math.log(mu / (size + mu)))


def gaussian_approx(obs, delta_n_hat):
    """Gaussian surrogate ``(scale, variance)`` of the observation model.

    The reported count is approximated by ``N(scale * P' dn, variance)``
    with the variance evaluated at the expected increment ``delta_n_hat``
    and floored at ``EPS``.
    """
    m = _observed(delta_n_hat, obs)
    if obs.kind == "gaussian":
        return 1.0, max(obs.sigma2, EPS)
    if obs.kind == "binomial":
        return obs.lam, max(obs.lam * (1.0 - obs.lam) * max(m, EPS), EPS)
    mu = obs.lam * max(m, EPS)
    return obs.lam, max(mu + obs.phi * mu * mu, EPS)
