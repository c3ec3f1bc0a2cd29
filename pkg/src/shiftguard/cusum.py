"""Two-sided CUSUM on standardized one-step prediction errors.

Used as the comparison baseline. Slack values and limits are in
standardized-error units throughout.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .calibration import arl_confidence_interval
from .detector import Signal
from .exceptions import DetectorSignalled, NoBracket, NonFiniteInput
from .numerics import as_source, map_replications


@dataclass(frozen=True)
class CusumConfig:
    slack: float
    limit: float
    restart_burnin: int = 50

    def __post_init__(self):
        if not self.slack >= 0:
            raise ValueError("slack must be non-negative")
        if not self.limit > 0:
            raise ValueError("limit must be positive")
        if self.restart_burnin < 0:
            raise ValueError("restart_burnin must be non-negative")


@dataclass(frozen=True)
class CusumState:
    c_plus: float = 0.0
    c_minus: float = 0.0
    n_plus: int = 0
    n_minus: int = 0
    time: int = 0


def cusum_update(state, e_std, config):
    """Advance one observation; return ``(new_state, signal_or_None)``."""
    e_std = float(e_std)
    if not np.isfinite(e_std):
        raise NonFiniteInput(f"non-finite standardized error {e_std!r}")
    cp = max(0.0, e_std - config.slack + state.c_plus)
    cm = max(0.0, -config.slack - e_std + state.c_minus)
    n_p = state.n_plus + 1 if cp > 0.0 else 0
    n_m = state.n_minus + 1 if cm > 0.0 else 0
    t = state.time + 1
    new = CusumState(cp, cm, n_p, n_m, t)
    if cp >= config.limit or cm >= config.limit:
        if cp >= config.limit and cp >= cm:
            return new, Signal(t, cp, t - n_p + 1, float("nan"))
        return new, Signal(t, cm, t - n_m + 1, float("nan"))
    return new, None


def cusum_restart_init(config, rng, time=0):
    """State at ``time`` after ``restart_burnin`` in-control updates from zero,
    resetting both sums whenever either crosses the limit."""
    gen = as_source(rng).generator
    cp, cm, n_p, n_m = _kernels.cusum_restart_state(
        gen, float(config.slack), float(config.limit), int(config.restart_burnin))
    return CusumState(cp, cm, n_p, n_m, time)


class CusumChart:
    """Stateful wrapper with the same update/reset surface as ``TsayDetector``."""

    def __init__(self, config, sigma_a=1.0, state=None):
        self.config = config
        self.sigma_a = float(sigma_a)
        self.state = state or CusumState()
        self.signal = None

    @property
    def time(self):
        return self.state.time

    @property
    def signalled(self):
        return self.signal is not None

    @property
    def statistic(self):
        return max(self.state.c_plus, self.state.c_minus)

    def reset(self, rng=None, time=None):
        t = self.state.time if time is None else time
        self.signal = None
        if rng is None:
            self.state = CusumState(time=t)
        else:
            self.state = cusum_restart_init(self.config, rng, time=t)

    def update(self, error):
        if self.signal is not None:
            raise DetectorSignalled("chart has signalled; call reset() first")
        self.state, self.signal = cusum_update(self.state, float(error) / self.sigma_a, self.config)
        return self.signal


def slack_setting_1(tau, eta1, sigma_a=1.0):
    """Slack tuned to the stable post-shift level ``tau * eta1``."""
    return tau * eta1 / (2.0 * sigma_a)


def slack_grid_setting_2(eta1, n_points=8, scale=1.0):
    """Evenly spaced slacks from ``0.05 * eta1 * scale`` to ``1.5 * eta1 * scale``.

    ``scale`` is ``tau / (2 sigma_a)``, the factor that turns ``eta1`` into
    the setting-1 slack.
    """
    if n_points < 2:
        raise ValueError("n_points must be at least 2")
    return np.linspace(0.05 * eta1 * scale, 1.5 * eta1 * scale, int(n_points))


def simulate_cusum_runs(config, n, rng, mu=None, zero_state=False, max_steps=10**5,
                        threads=1):
    """Run ``n`` independent CUSUM charts from time 0 until their first signal.

    Repetition ``r`` draws from stream ``r`` of ``rng``'s seed. Returns
    ``(steps, status, change_points)``.
    """
    source = as_source(rng)
    mu = np.zeros(0) if mu is None else np.ascontiguousarray(mu, dtype=float)
    burnin = 0 if zero_state else int(config.restart_burnin)
    steps = np.empty(n, dtype=np.int64)
    status = np.empty(n, dtype=np.int64)
    cpe = np.empty(n, dtype=np.int64)
    s = float(config.slack)
    hc = float(config.limit)

    def work(lo, hi):
        for r in range(lo, hi):
            gen = source.stream(r).generator
            status[r], steps[r], cpe[r] = _kernels.cusum_run(
                gen, s, hc, mu, burnin, int(max_steps))

    map_replications(work, n, threads)
    return steps, status, cpe


def _first_passage_table(slack, hs, n, source, max_steps, threads):
    out = np.empty((n, len(hs)), dtype=np.int64)
    hs = np.ascontiguousarray(hs, dtype=float)

    def work(lo, hi):
        for r in range(lo, hi):
            gen = source.stream(r).generator
            _kernels.cusum_first_passage(gen, float(slack), hs, int(max_steps), out[r])

    map_replications(work, n, threads)
    out[out < 0] = max_steps
    return out


def cusum_calibrate_limit(slack, target_arl0=370.4, rng=0, N=21512, lo=0.1, hi=50.0,
                          xtol=1e-3, grid=33, cap_factor=20.0, beta=0.05, threads=1,
                          clip=False):
    """Limit ``h_c`` whose zero-state Monte Carlo ARL0 matches ``target_arl0``.

    All evaluations share the same N random streams, so the estimated ARL0 is
    non-decreasing in ``h_c`` and the bracket search is exact on the sample.
    Each pass evaluates ``grid`` limits inside the current bracket from one
    simulation. Runs longer than ``cap_factor * target_arl0`` are censored at
    the cap, which only matters far above the solution.

    Returns ``(h_c, summary)`` where ``summary`` is the ARL0 estimate at
    ``h_c`` on the calibration sample. A slack so large that even ``lo``
    overshoots the target raises ``NoBracket``, or returns ``lo`` when
    ``clip`` is set.
    """
    if not target_arl0 > 1:
        raise ValueError("target_arl0 must exceed 1")
    if not slack >= 0:
        raise ValueError("slack must be non-negative")
    source = as_source(rng)
    cap = int(np.ceil(cap_factor * target_arl0))

    a, b = float(lo), float(hi)
    mean_a = mean_b = None
    while mean_a is None or b - a > xtol:
        hs = np.linspace(a, b, grid)
        means = _first_passage_table(slack, hs, N, source, cap, threads).mean(axis=0)
        above = np.flatnonzero(means >= target_arl0)
        if above.size == 0:
            raise NoBracket(f"ARL0 stays below {target_arl0} up to h_c={b}")
        i = int(above[0])
        if i == 0:
            if clip and mean_a is None:
                return a, arl_confidence_interval(N, float(means[0]), beta)
            raise NoBracket(f"ARL0 already reaches {target_arl0} at h_c={a}")
        a, b = float(hs[i - 1]), float(hs[i])
        mean_a, mean_b = float(means[i - 1]), float(means[i])
    if abs(mean_a - target_arl0) <= abs(mean_b - target_arl0):
        return a, arl_confidence_interval(N, mean_a, beta)
    return b, arl_confidence_interval(N, mean_b, beta)
