"""Critical-value calibration for the moving-window chart.

Run lengths are simulated from a truncated in-control start and averaged;
the chi-square interval for a geometric mean gives the stopping rule of the
sequential search over window sizes. A tensor-product quadrature of the
box probability serves as an independent check for small windows.
"""

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import _kernels
from .arma import model_eta
from .detector import DetectorConfig, build_transfer_matrix
from .exceptions import (
    BudgetExceeded,
    DimensionTooLarge,
    NonConvergence,
    RejectionBudgetExceeded,
    RunLengthCapExceeded,
)
from .numerics import (
    as_source,
    chi_square_quantile,
    cholesky,
    map_replications,
    normal_quantile,
)

RUN_LENGTH_CAP = 10**7
CSV_COLUMNS = ["model_id", "K", "h_candidate", "N", "arl_mean", "ci_low", "ci_high",
               "chosen_flag", "seed"]


@dataclass(frozen=True)
class RunLengthSummary:
    n: int
    mean: float
    ci_low: float
    ci_high: float
    beta: float = 0.05
    n_censored: int = 0

    def covers(self, value):
        return self.ci_low <= value <= self.ci_high

    @property
    def margin(self):
        return max(self.mean - self.ci_low, self.ci_high - self.mean)


def arl_confidence_interval(n, mean, beta=0.05, n_censored=0):
    """``1 - beta`` interval for the mean of ``n`` geometric run lengths."""
    n = int(n)
    if n < 1:
        raise ValueError("need at least one run length")
    if not mean > 0:
        raise ValueError("mean run length must be positive")
    lo = 2 * n * mean / chi_square_quantile(1 - beta / 2, 2 * n)
    hi = 2 * n * mean / chi_square_quantile(beta / 2, 2 * n)
    return RunLengthSummary(n, float(mean), float(lo), float(hi), float(beta), int(n_censored))


def summarize_run_lengths(run_lengths, beta=0.05, n_censored=0):
    rl = np.asarray(run_lengths)
    return arl_confidence_interval(rl.size, float(rl.mean()), beta, n_censored)


def choose_n_for_margin(target_arl0=370.4, beta=0.05, margin=5.0):
    """Smallest N whose interval around ``target_arl0`` has both margins <= ``margin``."""
    if not margin > 0:
        raise ValueError("margin must be positive")

    def ok(n):
        return arl_confidence_interval(n, target_arl0, beta).margin <= margin

    if ok(1):
        return 1
    hi = 2
    while not ok(hi):
        hi *= 2
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def analytic_critical_value(target_arl0=370.4):
    """Critical value of the K = 1 chart (standardized residuals, two-sided)."""
    return -normal_quantile(1.0 / (2.0 * target_arl0))


class _TsayKernelArgs:
    """Arrays the compiled run kernel needs for one (config, h) pair."""

    def __init__(self, config):
        K = config.window_size
        b, c = config.coefficients()
        self.K = K
        self.h = float(config.critical_value)
        self.b = np.ascontiguousarray(b, dtype=float)
        self.c = np.ascontiguousarray(c, dtype=float)
        if self.h > 0:
            self.L = np.ascontiguousarray(config.covariance_factor().L)
        else:
            self.L = np.zeros((K, K))


def simulate_tsay_runs(config, n, rng, mu=None, init="truncated", max_steps=RUN_LENGTH_CAP,
                       max_attempts=10**6, threads=1):
    """Run ``n`` independent charts from time 0 until their first signal.

    Repetition ``r`` uses stream ``r`` of ``rng``'s seed. ``mu`` is the mean of
    the standardized errors for ``t = 1, 2, ...`` (last value repeated).
    Returns ``(steps, status, change_points)``; change points are absolute
    times, so candidates from the initial window are <= 0.
    """
    source = as_source(rng)
    args = _TsayKernelArgs(config)
    mode = {"truncated": _kernels.INIT_TRUNCATED, "zero": _kernels.INIT_ZERO}[init]
    mu = np.zeros(0) if mu is None else np.ascontiguousarray(mu, dtype=float)
    steps = np.empty(n, dtype=np.int64)
    status = np.empty(n, dtype=np.int64)
    cpe = np.empty(n, dtype=np.int64)
    K = args.K

    def work(lo, hi):
        lam = np.empty(K)
        for r in range(lo, hi):
            gen = source.stream(r).generator
            st, t, arg, _ = _kernels.tsay_run(
                gen, lam, args.L, args.h, args.b, args.c, mu, mode,
                int(max_attempts), int(max_steps))
            status[r] = st
            steps[r] = t
            cpe[r] = t - (K - 1 - arg)

    map_replications(work, n, threads)
    if np.any(status == _kernels.REJECTED):
        raise RejectionBudgetExceeded(
            f"truncated initialization failed at h={args.h} within {max_attempts} attempts")
    return steps, status, cpe


def simulate_run_length(config, rng, max_steps=RUN_LENGTH_CAP):
    """One in-control run length from a truncated in-control start."""
    source = as_source(rng)
    args = _TsayKernelArgs(config)
    lam = np.empty(args.K)
    st, t, _, _ = _kernels.tsay_run(
        source.generator, lam, args.L, args.h, args.b, args.c, np.zeros(0),
        _kernels.INIT_TRUNCATED, 10**6, int(max_steps))
    if st == _kernels.REJECTED:
        raise RejectionBudgetExceeded(f"truncated initialization failed at h={args.h}")
    if st == _kernels.CENSORED:
        raise RunLengthCapExceeded(f"no signal within {max_steps} steps at h={args.h}")
    return int(t)


def estimate_arl0(config, N, rng, beta=0.05, threads=1, max_steps=RUN_LENGTH_CAP):
    """Monte Carlo in-control ARL with its chi-square interval."""
    steps, status, _ = simulate_tsay_runs(config, N, rng, max_steps=max_steps,
                                          threads=threads)
    if np.any(status == _kernels.CENSORED):
        raise RunLengthCapExceeded(
            f"run length cap {max_steps} hit at h={config.critical_value}")
    return summarize_run_lengths(steps, beta)


@dataclass
class Candidate:
    window_size: int
    h: float
    summary: RunLengthSummary
    chosen: bool = False
    refinement: bool = False


@dataclass
class CalibrationResult:
    window_size: int
    critical_value: float
    target_arl0: float
    beta: float
    n: int
    seed: int
    candidates: list = field(default_factory=list)
    model_id: str = ""

    @property
    def summary(self):
        for c in self.candidates:
            if c.chosen:
                return c.summary
        return None

    def rows(self):
        for c in self.candidates:
            yield {
                "model_id": self.model_id,
                "K": c.window_size,
                "h_candidate": f"{c.h:.6f}",
                "N": c.summary.n,
                "arl_mean": f"{c.summary.mean:.6f}",
                "ci_low": f"{c.summary.ci_low:.6f}",
                "ci_high": f"{c.summary.ci_high:.6f}",
                "chosen_flag": int(c.chosen),
                "seed": self.seed,
            }


def _h_key(h):
    return int(round(h * 1e6))


def _golden_section(f, a, b, n_evals):
    """Minimize ``f`` on ``[a, b]`` with ``n_evals`` evaluations (n_evals >= 2)."""
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = b - inv * (b - a)
    x2 = a + inv * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(n_evals - 2):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - inv * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + inv * (b - a)
            f2 = f(x2)


def find_critical_values(model, window_sizes, target_arl0=370.4, beta=0.05, N=21512,
                         step=0.05, rng=0, refine_evals=8, max_candidates=200,
                         threads=1, warm_start=None, progress=None):
    """Sequential critical-value search for every window size in ``window_sizes``.

    Starting from the analytic K = 1 value, each window size k = 2..max(K)
    raises the candidate by ``step`` until the interval's lower bound reaches
    the target, then hands the largest candidate proven too small (or else
    the smallest tested) to k + 1. For each requested K the tested candidate
    closest to the target is refined by a golden-section pass over
    ``[h - step, h + step]`` on common random numbers; ``critical_value`` is
    the tested candidate (refinements included) closest to the target.

    Candidate ``(k, h)`` always uses the same random streams, so a run to
    ``K = 100`` reproduces a run to ``K = 10`` on their common prefix.
    ``warm_start`` maps ``(k, round(h * 1e6))`` to cached summaries.
    """
    source = as_source(rng)
    seed = source.seed
    requested = sorted({int(k) for k in window_sizes})
    if not requested or requested[0] < 1:
        raise ValueError("window sizes must be positive")
    K_max = requested[-1]
    eta = model_eta(model, K_max + 1)
    q_lo = chi_square_quantile(beta / 2, 2 * N)
    q_hi = chi_square_quantile(1 - beta / 2, 2 * N)
    cache = dict(warm_start or {})
    mid = model.model_id()
    h0 = analytic_critical_value(target_arl0)
    results = {}

    if requested[0] == 1:
        # exact, so the row carries N = 0 and a degenerate interval
        exact = RunLengthSummary(0, float(target_arl0), float(target_arl0), float(target_arl0),
                                 float(beta))
        results[1] = CalibrationResult(1, h0, target_arl0, beta, N, seed,
                                       [Candidate(1, h0, exact, chosen=True)], mid)

    def evaluate(k, h, streams):
        key = (k, _h_key(h), streams)
        if key not in cache:
            cfg = DetectorConfig(k, h, eta, model.sigma_a)
            label = -1 if streams == "refine" else _h_key(h)
            cache[key] = estimate_arl0(cfg, N, source.derive(k, label), beta, threads)
        return cache[key]

    h_start = h0
    for k in range(2, K_max + 1):
        tested = []
        h = h_start
        s = evaluate(k, h, "fresh")
        tested.append(Candidate(k, h, s))
        while target_arl0 > 2 * N * s.mean / q_hi:
            if len(tested) >= max_candidates:
                raise BudgetExceeded(
                    f"more than {max_candidates} candidates at window size {k}")
            h = round(h + step, 10)
            s = evaluate(k, h, "fresh")
            tested.append(Candidate(k, h, s))
        too_small = [c.h for c in tested if 2 * N * c.summary.mean / q_lo < target_arl0]
        h_start = max(too_small) if too_small else min(c.h for c in tested)

        if k in requested:
            best = min(tested, key=lambda c: abs(target_arl0 - c.summary.mean))
            refined = []
            if refine_evals >= 2:
                def loss(x):
                    sx = evaluate(k, x, "refine")
                    refined.append(Candidate(k, x, sx, refinement=True))
                    return abs(target_arl0 - sx.mean)

                _golden_section(loss, max(best.h - step, 0.0), best.h + step, refine_evals)
            table = tested + refined
            chosen = min(table, key=lambda c: abs(target_arl0 - c.summary.mean))
            chosen.chosen = True
            results[k] = CalibrationResult(k, chosen.h, target_arl0, beta, N, seed, table, mid)
        if progress is not None:
            progress(k, tested)
    return results


def find_critical_value(model, K, target_arl0=370.4, beta=0.05, N=21512, step=0.05, rng=0,
                        **kwargs):
    """Critical value for one window size; K = 1 is solved analytically."""
    return find_critical_values(model, [K], target_arl0, beta, N, step, rng, **kwargs)[K]


def write_calibration_csv(path_or_file, results):
    """Write one or more :class:`CalibrationResult` tables as CSV."""
    if isinstance(results, CalibrationResult):
        results = [results]
    own = isinstance(path_or_file, str)
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for res in results:
            for row in res.rows():
                writer.writerow(row)
    finally:
        if own:
            fh.close()


def read_warm_start(path, model_id, N, seed, beta=0.05):
    """Cache entries for :func:`find_critical_values` from a calibration CSV.

    Only plain candidates matching model, N and seed are reused.
    """
    cache = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if (row["model_id"] != model_id or int(row["N"]) != N
                    or int(row["seed"]) != seed):
                continue
            k = int(row["K"])
            h = float(row["h_candidate"])
            cache[(k, _h_key(h), "fresh")] = arl_confidence_interval(
                N, float(row["arl_mean"]), beta)
    return cache


def box_probability_quadrature(A, h, tol=1e-6, max_nodes=128):
    """``P(max|Lambda| < h)`` for ``Lambda ~ N(0, A A^T)`` by Gauss-Legendre cubature.

    The node count per axis doubles until two successive rules agree to
    ``tol``. Only K <= 4 is supported.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    K = A.shape[0]
    if K > 4:
        raise DimensionTooLarge(f"quadrature supports K <= 4, got {K}")
    if h <= 0:
        return 0.0
    factor = cholesky(A @ A.T)
    Linv = np.linalg.inv(factor.L)
    log_norm = -0.5 * K * math.log(2 * math.pi) - np.sum(np.log(np.diag(factor.L)))

    def rule(n):
        x, w = np.polynomial.legendre.leggauss(n)
        x = x * h
        w = w * h
        last = min(K, 2)
        grids = np.meshgrid(*([x] * last), indexing="ij")
        tail_pts = np.stack([g.ravel() for g in grids], axis=1)
        tail_w = np.ones(len(tail_pts))
        for g in np.meshgrid(*([w] * last), indexing="ij"):
            tail_w = tail_w * g.ravel()
        total = 0.0
        for head in itertools.product(range(n), repeat=K - last):
            pts = np.empty((len(tail_pts), K))
            hw = 1.0
            for i, idx in enumerate(head):
                pts[:, i] = x[idx]
                hw *= w[idx]
            pts[:, K - last:] = tail_pts
            z = pts @ Linv.T
            dens = np.exp(log_norm - 0.5 * np.einsum("ij,ij->i", z, z))
            total += hw * np.dot(tail_w, dens)
        return total

    n = 8
    prev = rule(n)
    while n < max_nodes:
        n *= 2
        cur = rule(n)
        if abs(cur - prev) < tol:
            return float(cur)
        prev = cur
    raise NonConvergence(f"box quadrature did not settle within {max_nodes} nodes per axis")


def quadrature_critical_value(A, target_arl0=370.4, bracket=(0.5, 10.0), tol=1e-9):
    """``h`` with ``1 - P(max|Lambda| < h) = 1 / target_arl0`` (per-step false-alarm rate)."""
    alpha = 1.0 / target_arl0
    f = lambda hh: (1.0 - box_probability_quadrature(A, hh, tol=tol)) - alpha
    return float(optimize.brentq(f, *bracket, xtol=1e-10))


def transfer_matrix_for(model, K):
    return build_transfer_matrix(model_eta(model, K + 1), K, 1.0)
