"""Compiled inner loops for run-length simulation.

Every kernel takes a ``numpy.random.Generator`` and draws from it in a fixed
order, so a repetition's output is a pure function of its random stream.
Mean profiles (``mu``) are in standardized error units; index ``t - 1`` holds
the mean of the error at time ``t`` and the last entry is repeated beyond the
end of the array. An empty profile means zero mean.
"""

import numpy as np
from numba import njit

SIGNAL = 0
CENSORED = 1
REJECTED = 2

INIT_GIVEN = 0
INIT_ZERO = 1
INIT_TRUNCATED = 2


@njit(cache=True, nogil=True)
def box_draw(gen, L, h, max_attempts, out):
    """Rejection draw of ``L @ z`` with max-norm below ``h``.

    Each attempt consumes exactly K standard normals. Returns the number of
    attempts used, or -1 if the budget ran out.
    """
    K = L.shape[0]
    z = np.empty(K)
    for attempt in range(1, max_attempts + 1):
        for i in range(K):
            z[i] = gen.standard_normal()
        ok = True
        for i in range(K):
            s = 0.0
            for j in range(i + 1):
                s += L[i, j] * z[j]
            out[i] = s
            if abs(s) >= h:
                ok = False
        if ok:
            return attempt
    return -1


@njit(cache=True, nogil=True)
def box_draw_many(gen, L, h, max_attempts, n):
    K = L.shape[0]
    out = np.empty((n, K))
    attempts = 0
    for r in range(n):
        a = box_draw(gen, L, h, max_attempts, out[r])
        if a < 0:
            return out[:r], -1
        attempts += a
    return out, attempts


@njit(cache=True, nogil=True)
def _mean_at(mu, t):
    n = mu.shape[0]
    if n == 0:
        return 0.0
    if t <= n:
        return mu[t - 1]
    return mu[n - 1]


@njit(cache=True, nogil=True)
def tsay_step(lam, x, b, c):
    """Advance the window by one standardized error; return (max|lam|, argmax).

    Ties in the argmax go to the most recent candidate.
    """
    K = lam.shape[0]
    stat = -1.0
    arg = -1
    for j in range(K - 1):
        m = K - 2 - j
        v = b[m] * lam[j + 1] + c[m] * x
        lam[j] = v
        a = abs(v)
        if a >= stat:
            stat = a
            arg = j
    lam[K - 1] = x
    a = abs(x)
    if a >= stat:
        stat = a
        arg = K - 1
    return stat, arg


@njit(cache=True, nogil=True)
def tsay_trace(lam, xs, b, c):
    n = xs.shape[0]
    K = lam.shape[0]
    out = np.empty((n, K))
    for t in range(n):
        tsay_step(lam, xs[t], b, c)
        out[t] = lam
    return out


@njit(cache=True, nogil=True)
def tsay_run(gen, lam, L, h, b, c, mu, init_mode, max_attempts, max_steps):
    """One Tsay-chart run from time 0 until the first signal.

    Returns ``(status, steps, argmax, statistic)``; ``lam`` holds the final
    window on return.
    """
    K = lam.shape[0]
    if init_mode == INIT_TRUNCATED:
        if h > 0.0:
            if box_draw(gen, L, h, max_attempts, lam) < 0:
                return REJECTED, 0, -1, 0.0
        else:
            lam[:] = 0.0
    elif init_mode == INIT_ZERO:
        lam[:] = 0.0
    stat = 0.0
    arg = K - 1
    for t in range(1, max_steps + 1):
        x = gen.standard_normal() + _mean_at(mu, t)
        stat, arg = tsay_step(lam, x, b, c)
        if stat >= h:
            return SIGNAL, t, arg, stat
    return CENSORED, max_steps, arg, stat


@njit(cache=True, nogil=True)
def cusum_run(gen, s, hc, mu, burnin, max_steps):
    """One two-sided CUSUM run from time 0 until the first signal.

    ``burnin`` in-control updates precede time 0, resetting both sums to zero
    whenever either crosses ``hc``. Returns ``(status, steps, change_point)``.
    """
    cp = 0.0
    cm = 0.0
    n_p = 0
    n_m = 0
    for _ in range(burnin):
        x = gen.standard_normal()
        cp = max(0.0, x - s + cp)
        cm = max(0.0, -s - x + cm)
        n_p = n_p + 1 if cp > 0.0 else 0
        n_m = n_m + 1 if cm > 0.0 else 0
        if cp >= hc or cm >= hc:
            cp = 0.0
            cm = 0.0
            n_p = 0
            n_m = 0
    for t in range(1, max_steps + 1):
        x = gen.standard_normal() + _mean_at(mu, t)
        cp = max(0.0, x - s + cp)
        cm = max(0.0, -s - x + cm)
        n_p = n_p + 1 if cp > 0.0 else 0
        n_m = n_m + 1 if cm > 0.0 else 0
        if cp >= hc or cm >= hc:
            if cp >= hc and cp >= cm:
                return SIGNAL, t, t - n_p + 1
            return SIGNAL, t, t - n_m + 1
    return CENSORED, max_steps, 0


@njit(cache=True, nogil=True)
def cusum_restart_state(gen, s, hc, burnin):
    cp = 0.0
    cm = 0.0
    n_p = 0
    n_m = 0
    for _ in range(burnin):
        x = gen.standard_normal()
        cp = max(0.0, x - s + cp)
        cm = max(0.0, -s - x + cm)
        n_p = n_p + 1 if cp > 0.0 else 0
        n_m = n_m + 1 if cm > 0.0 else 0
        if cp >= hc or cm >= hc:
            cp = 0.0
            cm = 0.0
            n_p = 0
            n_m = 0
    return cp, cm, n_p, n_m


@njit(cache=True, nogil=True)
def cusum_first_passage(gen, s, hs, max_steps, out):
    """Zero-state in-control run lengths for every limit in ascending ``hs``.

    The CUSUM path does not depend on the limit, so one pass yields the run
    length for all limits. Limits never reached get -1.
    """
    nh = hs.shape[0]
    cp = 0.0
    cm = 0.0
    k = 0
    for t in range(1, max_steps + 1):
        x = gen.standard_normal()
        cp = max(0.0, x - s + cp)
        cm = max(0.0, -s - x + cm)
        v = max(cp, cm)
        while k < nh and v >= hs[k]:
            out[k] = t
            k += 1
        if k == nh:
            return
    for j in range(k, nh):
        out[j] = -1
