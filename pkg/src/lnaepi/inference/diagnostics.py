"""Chain diagnostics and posterior summaries."""
import math
import warnings

import numpy as np

from ..exceptions import InvalidInputError
from ..models import incidence_to_prevalence

__all__ = [
    "ess",
    "ess_or_nan",
    "autocorrelation",
    "dic",
    "r0",
    "r0_samples",
    "posterior_summary",
    "predictive_bands",
]


def autocorrelation(x):
    """Sample autocorrelation at all lags (FFT, biased normalisation)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    if acov[0] <= 0:
        return np.zeros(n)
    return acov / acov[0]


def ess(x):
    """Effective sample size with Geyer's initial monotone sequence.

    Sums of adjacent autocorrelation pairs are accumulated while they stay
    positive, each capped at the previous pair so the sequence is
    non-increasing; ``ESS = n / (1 + 2 * sum(rho_k))``.

    Parameters
    ----------
    x : array_like, shape (n,)
        One chain column, ``n >= 10``.

    Returns
    -------
    float
        0.0 (with a ``RuntimeWarning``) for a constant chain.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 10:
        raise InvalidInputError("ess needs a one-dimensional chain of at least 10 draws")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("chain contains non-finite values")
    n = x.size
    if np.ptp(x) == 0:
        warnings.warn("constant chain: ESS reported as 0", RuntimeWarning)
        return 0.0
    rho = autocorrelation(x)
    total = 0.0
    prev = math.inf
    k = 0
    # pairs (rho_{2m}, rho_{2m+1}), starting from rho_0 = 1
    while 2 * k + 1 < n:
        pair = rho[2 * k] + rho[2 * k + 1]
        if pair <= 0:
            break
        prev = min(prev, pair)
        total += prev
        k += 1
    tau = -1.0 + 2.0 * total
    tau = max(tau, 1.0 / math.log10(max(n, 10)))
    return float(n / tau)


def dic(chain, loglik_fn):
    """Deviance information criterion.

    ``p_D = -2 E[loglik] + 2 loglik(theta_bar)`` and
    ``DIC = -2 E[loglik] + p_D``, with ``theta_bar`` the posterior mean of
    the transformed parameters.

    Parameters
    ----------
    chain : ChainOutput
    loglik_fn : callable
        Maps a free (transformed) vector to the log-likelihood.

    Returns
    -------
    (dic, p_D)
    """
    if len(chain) == 0:
        raise InvalidInputError("empty chain")
    mean_ll = float(np.mean(chain.loglik))
    theta_bar = chain.draws.mean(axis=0)
    ll_bar = float(loglik_fn(theta_bar))
    p_d = -2.0 * mean_ll + 2.0 * ll_bar
    return -2.0 * mean_ll + p_d, p_d


def r0(params, model, log_beta_t=None):
    """Basic reproduction number ``npop * beta / gamma``.

    For time-varying models pass ``log_beta_t`` (scalar or array) to get the
    time-resolved value ``npop * exp(log_beta_t) / gamma``.
    """
    if not params.gamma > 0:
        raise InvalidInputError("R0 is undefined for gamma = 0")
    if log_beta_t is None:
        if model.tv_beta:
            beta = math.exp(model.initial_state(params)[-1])
        else:
            beta = params.beta
        return model.npop * beta / params.gamma
    return model.npop * np.exp(np.asarray(log_beta_t, dtype=float)) / params.gamma


def posterior_summary(chain, space, model=None):
    """Per-parameter posterior mean, SD and ESS on the natural scale.

    Returns a list of dicts with keys ``name, mean, sd, ess, ess_per_s``.
    With a constant-rate ``model`` and ``beta`` present (free or fixed) an
    ``R0`` row is appended.
    """
    if len(chain) == 0:
        raise InvalidInputError("empty chain")
    nat = np.array([space.to_natural(row) for row in chain.draws])
    rows = []
    elapsed = chain.elapsed if chain.elapsed > 0 else float("nan")
    for j, name in enumerate(space.names):
        col = nat[:, j]
        e = ess_or_nan(col)
        rows.append(dict(name=name, mean=float(col.mean()), sd=float(col.std(ddof=1)) if
                         col.size > 1 else 0.0, ess=e, ess_per_s=e / elapsed))
    if model is not None:
        vals = r0_samples(nat, space, model)
        if vals is not None:
            e = ess_or_nan(vals)
            rows.append(dict(name="R0", mean=float(vals.mean()),
                             sd=float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
                             ess=e, ess_per_s=e / elapsed))
    return rows


def ess_or_nan(col):
    """ESS without warnings; NaN for fewer than 10 draws."""
    if col.size < 10:
        return float("nan")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return ess(col)


def r0_samples(nat, space, model):
    """R0 for each row of natural-scale draws (None if gamma can vanish)."""
    names = list(space.names)
    base = space.base
    if model.tv_beta:
        beta = np.full(nat.shape[0], math.exp(model.initial_state(base)[-1]))
    elif "beta" in names:
        beta = nat[:, names.index("beta")]
    else:
        beta = np.full(nat.shape[0], base.beta)
    gamma = nat[:, names.index("gamma")] if "gamma" in names else np.full(nat.shape[0], base.gamma)
    if np.any(gamma <= 0):
        return None
    return model.npop * beta / gamma


def predictive_bands(paths, model, x0, times=None, probs=(0.025, 0.975)):
    """Pointwise mean and quantile bands of S_t, I_t (and log beta_t).

    Parameters
    ----------
    paths : ndarray (n_draws, T + 1, n_latent)
        Sampled cumulative-incidence paths (log beta last for time-varying
        models).
    x0 : tuple
        Initial prevalence.

    Returns
    -------
    dict
        ``{"t": ..., "S": (mean, lo, hi), "I": ..., ["log_beta": ...]}``.
    """
    paths = np.asarray(paths, dtype=float)
    if paths.ndim != 3 or paths.shape[0] == 0:
        raise InvalidInputError("paths must be a non-empty (draws, T + 1, n_latent) array")
    n_counts = model.n_events
    prev = incidence_to_prevalence(model, paths[..., :n_counts], x0)
    T1 = paths.shape[1]
    out = {"t": np.arange(T1, dtype=float) if times is None else np.asarray(times, dtype=float)}
    series = {"S": prev[..., 0], "I": prev[..., 1]}
    if model.tv_beta:
        series["log_beta"] = paths[..., -1]
    for key, val in series.items():
        lo, hi = np.quantile(val, probs, axis=0)
        out[key] = (val.mean(axis=0), lo, hi)
    return out
