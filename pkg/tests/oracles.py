"""Reference implementations used as test oracles.

Everything here is written directly from the underlying mathematics with
plain numpy/scipy and shares no code with the package under test.
"""
import numpy as np
from scipy.stats import norm

# pure-removal test case: no infections, 50 infectives removed at rate 0.1
GAMMA = 0.1
I0 = 50
SIGMA2 = 4.0
DELTA = 1.0
T = 8


def death_moments(i, gamma, delta):
    """Mean and variance of removals over ``delta`` from ``i`` infectives.

    Each infective is removed independently with probability
    ``1 - exp(-gamma delta)``, so the count is Binomial.
    """
    p = 1.0 - np.exp(-gamma * delta)
    return i * p, i * p * (1.0 - p)


def kalman_removal_loglik(y, gamma=GAMMA, i0=I0, sigma2=SIGMA2, delta=DELTA):
    """Kalman filter for noisy removal increments of a linear death process.

    State ``x_t = (N_{t-1}, N_t)`` of cumulative removals; the transition is
    ``N_{t+1} = i0 (1 - e) + e N_t + w`` with ``e = exp(-gamma delta)`` and
    process variance ``(i0 - m_t) e (1 - e)`` evaluated at the filtered mean
    ``m_t``; the observation is ``y = N_t - N_{t-1} + eps``.
    """
    e = np.exp(-gamma * delta)
    A = np.array([[0.0, 1.0], [0.0, e]])
    b = np.array([0.0, i0 * (1.0 - e)])
    H = np.array([-1.0, 1.0])
    m = np.zeros(2)
    P = np.zeros((2, 2))
    ll = 0.0
    for yt in y:
        q = (i0 - m[1]) * e * (1.0 - e)
        m = A @ m + b
        P = A @ P @ A.T + np.diag([0.0, q])
        s = H @ P @ H + sigma2
        ll += norm.logpdf(yt, H @ m, np.sqrt(s))
        K = P @ H / s
        m = m + K * (yt - H @ m)
        P = P - np.outer(K, H @ P)
    return float(ll)


def quadrature_removal_loglik(y, gamma=GAMMA, i0=I0, sigma2=SIGMA2, delta=DELTA,
                              lo=-15.0, hi=75.0, n_grid=3001):
    """Grid-quadrature likelihood of the restarted Gaussian transition chain.

    Each step draws ``N_{t+1} ~ N(N_t + mean, var)`` with the death-process
    moments evaluated at the exact previous value, which is the model the
    particle filter targets.
    """
    grid = np.linspace(lo, hi, n_grid)
    h = grid[1] - grid[0]
    ll = 0.0
    alpha = None
    for t, yt in enumerate(y):
        if t == 0:
            mu, v = death_moments(i0, gamma, delta)
            dens = norm.pdf(grid, mu, np.sqrt(v)) * norm.pdf(yt, grid, np.sqrt(sigma2))
        else:
            mu, v = death_moments(np.maximum(i0 - grid, 0.0), gamma, delta)
            K = norm.pdf(grid[None, :], (grid + mu)[:, None],
                         np.sqrt(np.maximum(v, 1e-12))[:, None])
            K = K * norm.pdf(yt, grid[None, :] - grid[:, None], np.sqrt(sigma2))
            dens = (alpha[:, None] * K).sum(axis=0) * h
        c = dens.sum() * h
        ll += np.log(c)
        alpha = dens / c
    return float(ll)
