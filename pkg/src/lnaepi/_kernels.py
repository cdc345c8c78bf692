"""Compiled inner loops.

Everything here is a pure function of its inputs (plus an explicit
``numpy.random.Generator`` for the simulator), so results are reproducible
bit for bit.  Status codes are returned instead of raising so that callers
inside MCMC can turn failures into rejections.
"""
import math

import numba
import numpy as np

EPS = 1e-8
LOG_2PI = math.log(2.0 * math.pi)
JITTER_START = 1e-10
JITTER_MAX = 1e-6

# status codes
OK = 0
INTEGRATION_FAILED = 1
NOT_PSD = 2
DEGENERATE = 3

# integration modes
MODE_ETA = 0
MODE_ETA_V = 1
MODE_FULL = 2


# -- observation densities ---------------------------------------------------

@numba.njit(cache=True)
def obs_logpdf(code, lam, sigma2, phi, y, m):
    if code == 0:
        r = y - m
        return -0.5 * (LOG_2PI + math.log(sigma2) + r * r / sigma2)
    if y < 0.0:
        return -np.inf
    if code == 1:
        if m < y or m < 0.0:
            return -np.inf
        if lam >= 1.0:
            return 0.0 if m == y else -np.inf
        return (math.lgamma(m + 1.0) - math.lgamma(y + 1.0) - math.lgamma(m - y + 1.0)
                + y * math.log(lam) + (m - y) * math.log1p(-lam))
    mu = lam * max(m, EPS)
    if phi <= 0.0:
        return y * math.log(mu) - mu - math.lgamma(y + 1.0)
    size = 1.0 / phi
    return (math.lgamma(y + size) - math.lgamma(size) - math.lgamma(y + 1.0)
            + size * math.log(size / (size + mu)) + y * math.log(mu / (size + mu)))


@numba.njit(cache=True)
def gauss_approx(code, lam, sigma2, phi, m):
    if code == 0:
        return 1.0, max(sigma2, EPS)
    if code == 1:
        return lam, max(lam * (1.0 - lam) * max(m, EPS), EPS)
    mu = lam * max(m, EPS)
    return lam, max(mu + phi * mu * mu, EPS)


# -- LNA ODE system ------------------------------------------------------------

@numba.njit(cache=True, inline="always")
def lna_rhs(terms, y, p, k, mode, dy, drift, diff, F):
    """Derivative of the flattened state ``[eta, (G), (V)]``.

    ``terms`` receives the whole state and must only read its first ``k``
    entries (slicing here costs more than the model arithmetic).
    """
    terms(y, p, drift, diff, F)
    for a in range(k):
        dy[a] = drift[a]
    off = k
    if mode == MODE_FULL:
        for a in range(k):
            for b in range(k):
                acc = 0.0
                for c in range(k):
                    acc += F[a, c] * y[k + c * k + b]
                dy[k + a * k + b] = acc
        off = k + k * k
    if mode >= MODE_ETA_V:
        # F V + V F' + diag(diff), using symmetry of V
        for a in range(k):
            for b in range(a, k):
                acc = 0.0
                for c in range(k):
                    acc += F[a, c] * y[off + c * k + b] + F[b, c] * y[off + c * k + a]
                if a == b:
                    acc += diff[a]
                dy[off + a * k + b] = acc
                dy[off + b * k + a] = acc


@numba.njit(cache=True)
def lna_integrate(terms, eta, G, V, p, length, n_steps, mode, eta_out, G_out, V_out):
    """Fixed-step classical RK4 over ``[0, length]``.

    Returns -1 on success, otherwise the index of the step at which the
    state became non-finite.
    """
    k = eta.shape[0]
    kk = k * k
    off_v = k + (kk if mode == MODE_FULL else 0)
    size = off_v + (kk if mode >= MODE_ETA_V else 0)
    y = np.empty(size)
    for a in range(k):
        y[a] = eta[a]
    if mode == MODE_FULL:
        for a in range(k):
            for b in range(k):
                y[k + a * k + b] = G[a, b]
    if mode >= MODE_ETA_V:
        for a in range(k):
            for b in range(k):
                y[off_v + a * k + b] = V[a, b]
    k1 = np.empty(size)
    k2 = np.empty(size)
    k3 = np.empty(size)
    k4 = np.empty(size)
    tmp = np.empty(size)
    drift = np.empty(k)
    diff = np.empty(k)
    F = np.empty((k, k))
    h = length / n_steps
    for step in range(n_steps):
        lna_rhs(terms, y, p, k, mode, k1, drift, diff, F)
        for j in range(size):
            tmp[j] = y[j] + 0.5 * h * k1[j]
        lna_rhs(terms, tmp, p, k, mode, k2, drift, diff, F)
        for j in range(size):
            tmp[j] = y[j] + 0.5 * h * k2[j]
        lna_rhs(terms, tmp, p, k, mode, k3, drift, diff, F)
        for j in range(size):
            tmp[j] = y[j] + h * k3[j]
        lna_rhs(terms, tmp, p, k, mode, k4, drift, diff, F)
        finite = True
        for j in range(size):
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            if not np.isfinite(y[j]):
                finite = False
        if not finite:
            return step
        if mode >= MODE_ETA_V:
            for a in range(k):
                for b in range(a + 1, k):
                    s = 0.5 * (y[off_v + a * k + b] + y[off_v + b * k + a])
                    y[off_v + a * k + b] = s
                    y[off_v + b * k + a] = s
    for a in range(k):
        eta_out[a] = y[a]
    if mode == MODE_FULL:
        for a in range(k):
            for b in range(k):
                G_out[a, b] = y[k + a * k + b]
    else:
        for a in range(k):
            for b in range(k):
                G_out[a, b] = 1.0 if a == b else 0.0
    if mode >= MODE_ETA_V:
        for a in range(k):
            for b in range(k):
                V_out[a, b] = y[off_v + a * k + b]
    else:
        V_out[:, :] = 0.0
    return -1


# -- small dense linear algebra ---------------------------------------------------

@numba.njit(cache=True)
def _chol_with(V, jitter, L):
    k = V.shape[0]
    L[:, :] = 0.0
    for j in range(k):
        s = V[j, j] + jitter
        for c in range(j):
            s -= L[j, c] * L[j, c]
        if not s > 0.0:
            return False
        L[j, j] = math.sqrt(s)
        for i in range(j + 1, k):
            s = V[i, j]
            for c in range(j):
                s -= L[i, c] * L[j, c]
            L[i, j] = s / L[j, j]
    return True


@numba.njit(cache=True)
def chol_jitter(V, L):
    """Lower factor of ``V + jitter I`` with jitter escalating x10 from 1e-10.

    The jitter is relative to ``max(1, max diag V)``.
    """
    k = V.shape[0]
    scale = 1.0
    for j in range(k):
        if V[j, j] > scale:
            scale = V[j, j]
    jit = JITTER_START
    while jit <= JITTER_MAX * (1.0 + 1e-9):
        if _chol_with(V, jit * scale, L):
            return True
        jit *= 10.0
    return False


@numba.njit(cache=True)
def min_eig_ok(C):
    k = C.shape[0]
    scale = 1.0
    for r in range(k):
        for c in range(k):
            if not np.isfinite(C[r, c]):
                return False
    for j in range(k):
        if abs(C[j, j]) > scale:
            scale = abs(C[j, j])
    ev = np.linalg.eigvalsh(C)
    return ev[0] >= -1e-8 * scale


# -- forward filter --------------------------------------------------------------

@numba.njit(cache=True)
def ff_run(terms, a0, C0, p, y, length, n_steps, code, lam, sigma2, phi, target,
           ode_only, a_hist, C_hist, eta_hist, G_hist, V_hist):
    """Approximate Kalman forward filter; returns ``(loglik, status, step)``."""
    T = y.shape[0]
    k = a0.shape[0]
    a = a0.copy()
    C = C0.copy()
    a_hist[0] = a
    C_hist[0] = C
    eta1 = np.empty(k)
    G1 = np.empty((k, k))
    V1 = np.empty((k, k))
    Ik = np.eye(k)
    GC = np.empty((k, k))
    cov = np.empty(k)
    ll = 0.0
    j = target
    mode = MODE_ETA if ode_only else MODE_FULL
    for t in range(T):
        st = lna_integrate(terms, a, Ik, C, p, length, n_steps, mode, eta1, G1, V1)
        if st >= 0:
            return ll, INTEGRATION_FAILED, t
        for r in range(k):
            for c in range(k):
                acc = 0.0
                for m in range(k):
                    acc += G1[r, m] * C[m, c]
                GC[r, c] = acc
        dn = eta1[j] - a[j]
        scale, s2 = gauss_approx(code, lam, sigma2, phi, dn)
        var_dn = V1[j, j] + C[j, j] - 2.0 * GC[j, j]
        S = scale * scale * var_dn + s2
        if not (S > 0.0 and S < np.inf):
            return ll, NOT_PSD, t
        resid = y[t] - scale * dn
        ll += -0.5 * (LOG_2PI + math.log(S) + resid * resid / S)
        for r in range(k):
            cov[r] = scale * (V1[r, j] - GC[r, j])
        for r in range(k):
            a[r] = eta1[r] + cov[r] * resid / S
        for r in range(k):
            for c in range(r, k):
                v = 0.5 * (V1[r, c] + V1[c, r]) - cov[r] * cov[c] / S
                C[r, c] = v
                C[c, r] = v
        if not ode_only and not min_eig_ok(C):
            return ll, NOT_PSD, t
        eta_hist[t] = eta1
        G_hist[t] = G1
        V_hist[t] = V1
        a_hist[t + 1] = a
        C_hist[t + 1] = C
    return ll, OK, -1


# -- resampling and sorting ---------------------------------------------------------

@numba.njit(cache=True)
def systematic_indices(w, u, out):
    """Systematic resampling of ``len(out)`` indices from weights ``w``.

    Cumulative weights are compared in expected-count space, ``N * cdf``,
    against positions ``m + u``; counts within 1e-9 of an integer are snapped
    to it so that boundary cases (equal weights, ``u = 0``) are exact.
    """
    n_w = w.shape[0]
    N = out.shape[0]
    total = 0.0
    last = -1
    for i in range(n_w):
        total += w[i]
        if w[i] > 0.0:
            last = i
    cum = np.empty(n_w)
    acc = 0.0
    for i in range(n_w):
        acc += w[i]
        c = N * acc / total
        r = np.floor(c + 0.5)
        cum[i] = r if abs(c - r) <= 1e-9 else c
    for i in range(last, n_w):
        cum[i] = np.inf
    i = 0
    for m in range(N):
        pos = m + u
        while pos >= cum[i]:
            i += 1
        out[m] = i


@numba.njit(cache=True)
def sort_permutation(x):
    """Order by distance from the particle with smallest first component."""
    N, k = x.shape
    ref = 0
    for i in range(1, N):
        if x[i, 0] < x[ref, 0]:
            ref = i
    d = np.empty(N)
    for i in range(N):
        acc = 0.0
        for c in range(k):
            diff = x[i, c] - x[ref, c]
            acc += diff * diff
        d[i] = acc
    return np.argsort(d, kind="mergesort")


@numba.njit(cache=True)
def std_normal_cdf(x):
    u = 0.5 * math.erfc(-x / math.sqrt(2.0))
    if u >= 1.0:
        u = 1.0 - 2.0 ** -53
    return u


# -- counter-based random stream (MJP propagation inside the filter) ------------

@numba.njit(cache=True)
def _splitmix(state):
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return state, z


@numba.njit(cache=True)
def _to_unit(z):
    # uniform on (0, 1]
    return (float(z >> np.uint64(11)) + 1.0) * (2.0 ** -53)


@numba.njit(cache=True)
def stream_seed(value, t, k):
    buf = np.empty(1)
    buf[0] = value
    bits = buf.view(np.uint64)[0]
    s, z = _splitmix(bits ^ (np.uint64(t) * np.uint64(0x632BE59BD9B4E019)))
    s, z = _splitmix(z ^ (np.uint64(k) * np.uint64(0xD1B54A32D192ED03)))
    return z


@numba.njit(cache=True)
def gillespie_counter(hazard, n_events, n, p, length, state):
    """Advance ``n`` in place by an exact MJP run of duration ``length``."""
    h = np.empty(n_events)
    t = 0.0
    while True:
        hazard(n, p, h)
        H = 0.0
        for e in range(n_events):
            H += h[e]
        if H <= 0.0:
            return
        state, z = _splitmix(state)
        t += -math.log(_to_unit(z)) / H
        if t > length:
            return
        state, z = _splitmix(state)
        target = (1.0 - _to_unit(z)) * H
        e = 0
        acc = h[0]
        while acc <= target and e < n_events - 1:
            e += 1
            acc += h[e]
        n[e] += 1.0


# -- particle filter ------------------------------------------------------------------

@numba.njit(cache=True)
def pf_run(terms, hazard, n_events, init, p, y, length, n_steps, code, lam, sigma2, phi,
           target, z, ubar, do_sort, mjp, hist, anc, logw_hist):
    """Bootstrap filter over restarted LNA (or exact MJP) transitions.

    Returns ``(loglik, status, step)``.  A step where every weight vanishes
    returns ``-inf`` with status DEGENERATE.
    """
    T, N, k = z.shape
    cur = np.empty((N, k))
    for i in range(N):
        cur[i] = init
    orig = np.arange(N)
    hist[0] = cur
    new = np.empty((N, k))
    logw = np.empty(N)
    w = np.empty(N)
    idx = np.empty(N, dtype=np.int64)
    zeros = np.zeros((k, k))
    Ik = np.eye(k)
    eta1 = np.empty(k)
    G1 = np.empty((k, k))
    V1 = np.empty((k, k))
    L = np.empty((k, k))
    ll = 0.0
    for t in range(T):
        if do_sort and N > 1:
            perm = sort_permutation(cur)
            cur = cur[perm]
            orig = orig[perm]
        for i in range(N):
            anc[t, i] = orig[i]
            if mjp:
                for c in range(k):
                    new[i, c] = cur[i, c]
                gillespie_counter(hazard, n_events, new[i], p, length,
                                  stream_seed(z[t, i, 0], t, i))
            else:
                st = lna_integrate(terms, cur[i], Ik, zeros, p, length, n_steps,
                                   MODE_ETA_V, eta1, G1, V1)
                if st >= 0 or not chol_jitter(V1, L):
                    for c in range(k):
                        new[i, c] = cur[i, c]
                    logw[i] = -np.inf
                    continue
                for r in range(k):
                    acc = eta1[r]
                    for c in range(r + 1):
                        acc += L[r, c] * z[t, i, c]
                    new[i, r] = acc
            logw[i] = obs_logpdf(code, lam, sigma2, phi, y[t], new[i, target] - cur[i, target])
        hist[t + 1] = new
        logw_hist[t] = logw
        mx = -np.inf
        for i in range(N):
            if logw[i] > mx:
                mx = logw[i]
        if mx == -np.inf:
            return -np.inf, DEGENERATE, t
        sw = 0.0
        for i in range(N):
            w[i] = math.exp(logw[i] - mx)
            sw += w[i]
        ll += mx + math.log(sw / N)
        systematic_indices(w, std_normal_cdf(ubar[t]), idx)
        for i in range(N):
            cur[i] = new[idx[i]]
        orig = idx.copy()
    return ll, OK, -1


# -- exact simulation -------------------------------------------------------------------

@numba.njit(cache=True)
def gillespie_grid(hazard, n_events, n_latent, init, p, t_end, grid, rng, sigma_beta,
                   substep, record, times, events):
    """Direct-method simulation with online binning into windows of ``grid``.

    For a time-varying infection rate the log rate follows an Euler scheme
    on a sub-grid of width ``substep`` and is frozen between sub-grid points.
    Returns ``(counts, logbeta_at_grid, event_times, event_ids)``.
    """
    n_win = int(round(t_end / grid))
    counts = np.zeros((n_win, n_events))
    logb = np.zeros(n_win + 1)
    n = init.copy()
    h = np.empty(n_events)
    tv = n_latent > n_events
    if tv:
        logb[0] = n[n_latent - 1]
    n_rec = 0
    t = 0.0
    for w in range(n_win):
        w_end = (w + 1) * grid
        while t < w_end:
            seg_start = t
            seg_end = min(t + substep, w_end) if tv else w_end
            while True:
                hazard(n, p, h)
                H = 0.0
                for e in range(n_events):
                    H += h[e]
                if H <= 0.0:
                    t = seg_end
                    break
                t_next = t + rng.exponential(1.0 / H)
                if t_next > seg_end:
                    t = seg_end
                    break
                t = t_next
                target = rng.random() * H
                e = 0
                acc = h[0]
                while acc <= target and e < n_events - 1:
                    e += 1
                    acc += h[e]
                n[e] += 1.0
                counts[w, e] += 1.0
                if record:
                    if n_rec == times.shape[0]:
                        times2 = np.empty(2 * times.shape[0])
                        events2 = np.empty(2 * events.shape[0], dtype=np.int64)
                        times2[:n_rec] = times[:n_rec]
                        events2[:n_rec] = events[:n_rec]
                        times = times2
                        events = events2
                    times[n_rec] = t
                    events[n_rec] = e
                    n_rec += 1
            if tv:
                n[n_latent - 1] += (sigma_beta * math.sqrt(seg_end - seg_start)
                                    * rng.standard_normal())
        if tv:
            logb[w + 1] = n[n_latent - 1]
    return counts, logb, times[:n_rec], events[:n_rec]
