"""Statistics kernel: quantiles, Cholesky factors, truncated MVN draws and
reproducible per-repetition random streams."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import _kernels
from .exceptions import (
    DomainError,
    NonConvergence,
    NotPositiveDefinite,
    RejectionBudgetExceeded,
)

_MASK64 = (1 << 64) - 1


def derive_seed(seed, *labels):
    """Hash a seed and integer labels into a new 64-bit seed."""
    entropy = [int(seed) & _MASK64] + [int(v) & _MASK64 for v in labels]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


class RandomSource:
    """Counter-based random stream identified by ``(seed, stream_id)``.

    Backed by a Philox generator whose 128-bit key is the pair, so distinct
    stream ids give independent sequences and the same pair always replays
    the same sequence. Instances are stateful; do not share one across
    threads.
    """

    def __init__(self, seed=0, stream_id=0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        self.generator = np.random.Generator(
            np.random.Philox(key=np.array([self.seed, self.stream_id], dtype=np.uint64))
        )

    def __repr__(self):
        return f"RandomSource(seed={self.seed}, stream_id={self.stream_id})"

    def stream(self, stream_id):
        """Fresh source on the same seed with another stream id."""
        return RandomSource(self.seed, stream_id)

    def derive(self, *labels):
        """Fresh source whose seed is hashed from this one's key and ``labels``."""
        return RandomSource(derive_seed(self.seed, self.stream_id, *labels), 0)

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)


def as_source(rng):
    """Accept a RandomSource or an integer seed."""
    if isinstance(rng, RandomSource):
        return rng
    if rng is None:
        return RandomSource(0)
    return RandomSource(int(rng))


def map_replications(func, n, threads=1, chunk=256):
    """Evaluate ``func(start, stop)`` over ``range(n)`` in chunks.

    ``func`` must fill results for its own index range only; chunk boundaries
    and the thread count therefore never change the outcome.
    """
    bounds = [(i, min(i + chunk, n)) for i in range(0, n, chunk)]
    if threads is None or threads <= 1 or len(bounds) <= 1:
        for lo, hi in bounds:
            func(lo, hi)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for _ in pool.map(lambda b: func(*b), bounds):
            pass


def normal_cdf(x):
    return special.ndtr(x)


def normal_quantile(p):
    """Inverse standard normal CDF."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {p}")
    return float(special.ndtri(p))


def chi_square_cdf(x, dof):
    return special.gammainc(0.5 * dof, 0.5 * np.asarray(x, dtype=float))


def chi_square_quantile(p, dof):
    """Inverse CDF of the chi-square distribution with ``dof`` degrees of freedom."""
    p = float(p)
    dof = float(dof)
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {p}")
    if not dof > 0.0:
        raise DomainError(f"degrees of freedom must be positive, got {dof}")
    x = 2.0 * float(special.gammaincinv(0.5 * dof, p))
    if not np.isfinite(x) or x <= 0.0:
        raise NonConvergence(f"chi-square quantile failed for p={p}, dof={dof}")
    return x


@dataclass(frozen=True)
class CovarianceFactor:
    """Lower-triangular ``L`` with ``L @ L.T`` equal to the covariance."""

    L: np.ndarray

    @property
    def dimension(self):
        return self.L.shape[0]

    @property
    def covariance(self):
        return self.L @ self.L.T


def cholesky(sigma):
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise NotPositiveDefinite(f"expected a square matrix, got shape {sigma.shape}")
    scale = np.max(np.abs(sigma)) if sigma.size else 1.0
    if np.max(np.abs(sigma - sigma.T), initial=0.0) > 1e-12 * max(scale, 1.0):
        raise NotPositiveDefinite("matrix is not symmetric")
    try:
        L = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    pivots = np.diag(L) ** 2
    if np.min(pivots) <= 1e-12 * np.max(np.diag(sigma)):
        raise NotPositiveDefinite("pivot below 1e-12 of the largest diagonal entry")
    L = np.tril(L)
    L.setflags(write=False)
    return CovarianceFactor(L)


def sample_mvn_truncated_box(factor, h, rng, max_attempts=10**6, size=None):
    """Draw from N(0, L L^T) conditioned on max-norm < h by rejection.

    Returns a vector, or an ``(size, K)`` array when ``size`` is given.
    """
    if not h > 0:
        raise DomainError(f"h must be positive, got {h}")
    L = np.ascontiguousarray(factor.L, dtype=float)
    gen = as_source(rng).generator
    if size is None:
        out = np.empty(L.shape[0])
        if _kernels.box_draw(gen, L, float(h), int(max_attempts), out) < 0:
            raise RejectionBudgetExceeded(
                f"no draw inside the box |x| < {h} after {max_attempts} attempts")
        return out
    out, attempts = _kernels.box_draw_many(gen, L, float(h), int(max_attempts), int(size))
    if attempts < 0:
        raise RejectionBudgetExceeded(
            f"no draw inside the box |x| < {h} after {max_attempts} attempts")
    return out
