"""Priors and the map between natural and unconstrained parameters.

Positive parameters are sampled on the log scale and the reporting
proportion on the logit scale.  Log-prior densities returned on the
unconstrained scale include the log-Jacobian of the transform.
"""
import math
from dataclasses import dataclass

import numpy as np

from ..exceptions import InvalidInputError

__all__ = [
    "GammaPrior",
    "UniformPrior",
    "LogNormalPrior",
    "PriorSpec",
    "ParameterSpace",
    "parse_prior",
    "FREE_PARAMETERS",
]

# parameters that can be given a prior, and where they live
MODEL_FIELDS = ("beta", "gamma", "kappa", "sigma_beta")
OBS_FIELDS = ("lam", "sigma2", "phi")
FREE_PARAMETERS = MODEL_FIELDS + OBS_FIELDS


@dataclass(frozen=True)
class GammaPrior:
    shape: float
    rate: float

    def logpdf(self, x):
        if x <= 0:
            return -math.inf
        return (self.shape * math.log(self.rate) - math.lgamma(self.shape)
                + (self.shape - 1) * math.log(x) - self.rate * x)

    def center(self):
        return self.shape / self.rate

    def __str__(self):
        return f"gamma({self.shape:g}, {self.rate:g})"


@dataclass(frozen=True)
class UniformPrior:
    lo: float
    hi: float

    def logpdf(self, x):
        if self.lo < x < self.hi:
            return -math.log(self.hi - self.lo)
        return -math.inf

    def center(self):
        return 0.5 * (self.lo + self.hi)

    def __str__(self):
        return f"uniform({self.lo:g}, {self.hi:g})"


@dataclass(frozen=True)
class LogNormalPrior:
    """``log x ~ N(mean, sd^2)``."""

    mean: float
    sd: float

    def logpdf(self, x):
        if x <= 0:
            return -math.inf
        lx = math.log(x)
        r = (lx - self.mean) / self.sd
        return -0.5 * r * r - math.log(self.sd) - 0.5 * math.log(2 * math.pi) - lx

    def center(self):
        return math.exp(self.mean)

    def __str__(self):
        return f"lognormal({self.mean:g}, {self.sd:g})"


def parse_prior(text):
    """Parse ``"gamma(10, 1e4)"``, ``"uniform(0, 1)"`` or ``"lognormal(0, 0.5)"``."""
    text = text.strip()
    try:
        name, rest = text.split("(", 1)
        args = [float(a) for a in rest.rstrip(")").split(",")]
    except ValueError:
        raise InvalidInputError(f"cannot parse prior {text!r}") from None
    name = name.strip().lower()
    table = {"gamma": GammaPrior, "uniform": UniformPrior,
             "lognormal": LogNormalPrior, "normal-on-log": LogNormalPrior}
    if name not in table or len(args) != 2:
        raise InvalidInputError(f"cannot parse prior {text!r}")
    prior = table[name](*args)
    if isinstance(prior, GammaPrior) and not (prior.shape > 0 and prior.rate > 0):
        raise InvalidInputError(f"gamma prior needs positive shape and rate: {text!r}")
    if isinstance(prior, UniformPrior) and not prior.hi > prior.lo:
        raise InvalidInputError(f"uniform prior needs lo < hi: {text!r}")
    if isinstance(prior, LogNormalPrior) and not prior.sd > 0:
        raise InvalidInputError(f"lognormal prior needs sd > 0: {text!r}")
    return prior


class PriorSpec(dict):
    """Mapping from free-parameter name to prior; fixed parameters are absent."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        for name, prior in self.items():
            if name not in FREE_PARAMETERS:
                raise InvalidInputError(
                    f"no prior can be placed on {name!r}; choose from {FREE_PARAMETERS}")
            if isinstance(prior, str):
                self[name] = parse_prior(prior)


def _logit(p):
    return math.log(p) - math.log1p(-p)


def _expit(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


class ParameterSpace:
    """Bijection between :class:`~lnaepi.models.Params` and a free vector.

    Parameters
    ----------
    priors : PriorSpec
        Priors of the free parameters, in sampling order.
    base : Params
        Supplies the values of everything that is not free.
    """

    def __init__(self, priors, base):
        self.priors = PriorSpec(priors)
        self.base = base
        self.names = tuple(self.priors)
        if base.obs is None and any(n in OBS_FIELDS for n in self.names):
            raise InvalidInputError("observation parameters are free but base.obs is unset")
        self._logit = tuple(n == "lam" for n in self.names)

    @property
    def dim(self):
        return len(self.names)

    def natural_values(self, params):
        out = []
        for name in self.names:
            v = getattr(params.obs if name in OBS_FIELDS else params, name)
            if v is None:
                raise InvalidInputError(f"{name} is free but has no value")
            out.append(float(v))
        return out

    def transform(self, params):
        """Free (unconstrained) vector of ``params``."""
        vals = self.natural_values(params)
        out = np.empty(self.dim)
        for j, (name, v) in enumerate(zip(self.names, vals)):
            if self._logit[j]:
                if not 0 < v < 1:
                    raise InvalidInputError(f"{name}={v} outside (0, 1)")
                out[j] = _logit(v)
            else:
                if not v > 0:
                    raise InvalidInputError(f"{name}={v} must be positive")
                out[j] = math.log(v)
        return out

    def to_natural(self, free):
        """Natural-scale values of a free vector, in ``names`` order."""
        return np.array([_expit(x) if lg else math.exp(x) for x, lg in zip(free, self._logit)])

    def inverse_transform(self, free):
        """:class:`Params` corresponding to a free vector."""
        free = np.asarray(free, dtype=float)
        if free.shape != (self.dim,) or not np.all(np.isfinite(free)):
            raise InvalidInputError(f"free vector must be finite with shape ({self.dim},)")
        model_kw, obs_kw = {}, {}
        for name, v in zip(self.names, self.to_natural(free)):
            (obs_kw if name in OBS_FIELDS else model_kw)[name] = float(v)
        obs = self.base.obs.replace(**obs_kw) if obs_kw else self.base.obs
        return self.base.replace(obs=obs, **model_kw)

    def log_jacobian(self, free):
        total = 0.0
        for x, lg in zip(free, self._logit):
            if lg:
                # log p(1 - p) for p = expit(x)
                total += -abs(x) - 2.0 * math.log1p(math.exp(-abs(x)))
            else:
                total += x
        return total

    def log_prior(self, free):
        """Log prior density of the free vector (transform Jacobian included)."""
        total = self.log_jacobian(free)
        for prior, v in zip(self.priors.values(), self.to_natural(free)):
            total += prior.logpdf(v)
        return total

    def center(self):
        """Free vector at the prior centres (mean, midpoint or exp(mean))."""
        vals = [p.center() for p in self.priors.values()]
        out = np.empty(self.dim)
        for j, v in enumerate(vals):
            out[j] = _logit(v) if self._logit[j] else math.log(v)
        return out
