"""scikit-learn style front end to the inference schemes."""
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import InvalidInputError
from .gaussfilter import forward_filter, ode_loglik
from .inference.diagnostics import dic, posterior_summary, predictive_bands
from .inference.mcmc import ChainSettings, run_chain, stream
from .inference.priors import ParameterSpace, PriorSpec
from .lna import DEFAULT_STEPS
from .models import Params, get_model
from .observation import ObsParams
from .smc import AuxBlock, pf_loglik

__all__ = ["EpidemicLNA", "check_observations"]


def check_observations(y, obs_kind="binomial"):
    """Validate a 1-D series of counts; returns a float array."""
    arr = check_array(np.asarray(y, dtype=float).reshape(-1, 1), ensure_min_samples=1,
                      input_name="y")
    arr = arr.ravel()
    if obs_kind in ("binomial", "negbinomial") and np.any(arr < 0):
        raise InvalidInputError("count observations must be nonnegative")
    return arr


class EpidemicLNA(BaseEstimator):
    """Bayesian fit of an LNA epidemic model to incidence counts.

    Parameters
    ----------
    model : str
        One of ``sir``, ``sir-tvbeta``, ``sirs``, ``sirs-tvbeta``.
    npop : int
    x0 : tuple
        Initial ``(s0, i0)``.
    priors : dict
        Free parameter name to prior (object or string such as
        ``"gamma(10, 1e4)"``).
    fixed : dict, optional
        Values of non-free model and observation parameters (``beta``,
        ``gamma``, ``kappa``, ``sigma_beta``, ``log_beta0``, ``lam``,
        ``sigma2``, ``phi``).
    obs_kind, obs_target : str
    scheme : str
        ``ffmh``, ``ode_mh``, ``pmmh`` or ``cpmmh``.
    iterations, n_particles, rho, pilot_fraction, n_steps, interval
        See :class:`~lnaepi.inference.mcmc.ChainSettings`.
    sample_paths : bool
        Store latent paths every ``path_thin`` iterations.
    random_state : int, optional

    Attributes
    ----------
    chain_ : ChainOutput
    space_ : ParameterSpace
    model_ : CompartmentModel
    y_ : ndarray
    """

    def __init__(self, model="sir", npop=120, x0=(119, 1), priors=None, fixed=None,
                 obs_kind="binomial", obs_target="infections", scheme="ffmh",
                 iterations=10_000, n_particles=None, rho=None, pilot_fraction=0.1,
                 n_steps=DEFAULT_STEPS, interval=1.0, sample_paths=False, path_thin=10,
                 random_state=None):
        self.model = model
        self.npop = npop
        self.x0 = x0
        self.priors = priors
        self.fixed = fixed
        self.obs_kind = obs_kind
        self.obs_target = obs_target
        self.scheme = scheme
        self.iterations = iterations
        self.n_particles = n_particles
        self.rho = rho
        self.pilot_fraction = pilot_fraction
        self.n_steps = n_steps
        self.interval = interval
        self.sample_paths = sample_paths
        self.path_thin = path_thin
        self.random_state = random_state

    def _base_params(self, priors):
        fixed = dict(self.fixed or {})
        obs_kw = {}
        for key in ("lam", "sigma2", "phi"):
            v = fixed.pop(key, None)
            if v is None and key in priors:
                v = priors[key].center()
            if v is not None:
                obs_kw[key] = v
        need = {"gaussian": ("sigma2",), "binomial": ("lam",), "negbinomial": ("lam", "phi")}
        obs = ObsParams(self.obs_kind, target=self.obs_target,
                        **{k: obs_kw.get(k) for k in need[self.obs_kind]})
        kw = {}
        for key in ("beta", "gamma", "kappa", "sigma_beta"):
            v = fixed.pop(key, None)
            if v is None and key in priors:
                v = priors[key].center()
            if v is not None:
                kw[key] = v
        log_beta0 = fixed.pop("log_beta0", None)
        if fixed:
            raise InvalidInputError(f"unknown fixed parameters: {sorted(fixed)}")
        if "gamma" not in kw:
            raise InvalidInputError("gamma needs either a prior or a fixed value")
        return Params(x0=tuple(self.x0), log_beta0=log_beta0, obs=obs, **kw)

    def fit(self, y, X=None):
        """Run the sampler on the observed series ``y``.

        ``X`` is accepted for pipeline compatibility and ignored.
        """
        y = check_observations(y, self.obs_kind)
        if not self.priors:
            raise InvalidInputError("at least one free parameter needs a prior")
        priors = PriorSpec(self.priors)
        self.model_ = get_model(self.model, self.npop)
        self.space_ = ParameterSpace(priors, self._base_params(priors))
        settings = ChainSettings(
            iterations=self.iterations, n_particles=self.n_particles, rho=self.rho,
            pilot_fraction=self.pilot_fraction, n_steps=self.n_steps,
            interval=self.interval, seed=self.random_state,
            sample_paths=self.sample_paths, path_thin=self.path_thin)
        self.chain_ = run_chain(self.scheme, self.model_, self.space_, y, settings)
        self.y_ = y
        return self

    def loglik(self, theta, y=None):
        """Log-likelihood of the fitted scheme at a free vector.

        Pseudo-marginal schemes use one particle-filter estimate with a fixed
        auxiliary block drawn from the ``aux`` stream.
        """
        check_is_fitted(self, "chain_")
        y = self.y_ if y is None else check_observations(y, self.obs_kind)
        params = self.space_.inverse_transform(theta)
        if self.scheme == "ffmh":
            return forward_filter(self.model_, params, y, self.interval, self.n_steps,
                                  raise_on_failure=False)[0]
        if self.scheme == "ode_mh":
            return ode_loglik(self.model_, params, y, self.interval, self.n_steps,
                              raise_on_failure=False)
        rng = stream(self.random_state, "aux")
        aux = AuxBlock.draw(rng, y.shape[0], self.n_particles, self.model_.n_latent)
        return pf_loglik(self.model_, params, y, aux, interval=self.interval,
                         n_steps=self.n_steps)[0]

    def score(self, y, X=None):
        """Log-likelihood of ``y`` at the posterior mean (transformed scale)."""
        check_is_fitted(self, "chain_")
        return float(self.loglik(self.chain_.draws.mean(axis=0), y))

    def dic(self):
        """``(DIC, p_D)`` of the fitted chain."""
        check_is_fitted(self, "chain_")
        return dic(self.chain_, self.loglik)

    def summary(self):
        check_is_fitted(self, "chain_")
        return posterior_summary(self.chain_, self.space_, self.model_)

    def predictive_bands(self, probs=(0.025, 0.975)):
        check_is_fitted(self, "chain_")
        if self.chain_.paths is None or len(self.chain_.paths) == 0:
            raise InvalidInputError("fit with sample_paths=True to get predictive bands")
        T = self.y_.shape[0]
        return predictive_bands(self.chain_.paths, self.model_, self.x0,
                                times=self.interval * np.arange(T + 1), probs=probs)
