"""Moving-window level-shift chart built on Tsay's pointwise Wald statistics.

The chart keeps the K statistics ``lambda_{d,T}`` for the candidate change
points ``T-K+1 <= d <= T`` and signals when their max-norm reaches ``h``.
Statistics are kept in standardized units; sigma_a only enters when an
error is ingested.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .arma import EtaWeights, model_eta
from .exceptions import DetectorSignalled, NonFiniteInput
from .numerics import cholesky, sample_mvn_truncated_box


def rho_table(eta, K):
    """``rho[m] = (1 + sum_{i=1..m} eta_i^2)^(-1/2)`` for lags ``m = 0..K-1``."""
    e = eta.values(K) if isinstance(eta, EtaWeights) else np.asarray(eta, float)[:K]
    sq = np.cumsum(e ** 2)
    return 1.0 / np.sqrt(sq)


def update_coefficients(eta, K):
    """Per-lag coefficients of the recursive update (standardized units).

    A statistic at lag ``m`` becomes ``b[m] * lam + c[m] * e / sigma_a``.
    """
    e = eta.values(K + 1) if isinstance(eta, EtaWeights) else np.asarray(eta, float)[:K + 1]
    rho = 1.0 / np.sqrt(np.cumsum(e ** 2))
    b = rho[1:K] / rho[:K - 1]
    c = rho[1:K] * e[1:K]
    return b, c


def build_transfer_matrix(eta, K, sigma_a=1.0):
    """Matrix ``A`` with ``Lambda_T = A @ e_T``, both ordered oldest to newest."""
    e = eta.values(K) if isinstance(eta, EtaWeights) else np.asarray(eta, float)[:K]
    rho = rho_table(e, K)
    A = np.zeros((K, K))
    for j in range(K):
        m = K - 1 - j
        A[j, j:] = rho[m] * e[:m + 1]
    return A / sigma_a


def pointwise_correlation(eta, m_d, t):
    """In-control correlation of ``lambda_{d,T}`` and ``lambda_{d+t,T}``, ``m_d = T - d``."""
    if not 0 <= t <= m_d:
        raise ValueError("need 0 <= t <= m_d")
    e = eta.values(m_d + 1) if isinstance(eta, EtaWeights) else np.asarray(eta, float)[:m_d + 1]
    n = m_d - t
    num = np.dot(e[t:t + n + 1], e[:n + 1])
    return float(num / np.sqrt(np.sum(e[:m_d + 1] ** 2) * np.sum(e[:n + 1] ** 2)))


@dataclass(frozen=True)
class DetectorConfig:
    window_size: int
    critical_value: float
    eta: EtaWeights
    sigma_a: float = 1.0

    def __post_init__(self):
        if self.window_size < 1:
            raise ValueError("window_size must be at least 1")
        if not self.critical_value >= 0:
            raise ValueError("critical_value must be non-negative")
        if not self.sigma_a > 0:
            raise ValueError("sigma_a must be positive")
        if abs(self.eta[0] - 1.0) > 1e-12:
            raise ValueError("eta[0] must equal 1")

    @classmethod
    def for_model(cls, model, window_size, critical_value):
        eta = model_eta(model, window_size + 1)
        return cls(int(window_size), float(critical_value), eta, model.sigma_a)

    @property
    def K(self):
        return self.window_size

    @property
    def h(self):
        return self.critical_value

    def coefficients(self):
        return update_coefficients(self.eta, self.window_size)

    def transfer_matrix(self, standardized=True):
        return build_transfer_matrix(
            self.eta, self.window_size, 1.0 if standardized else self.sigma_a)

    def covariance_factor(self):
        A = self.transfer_matrix()
        return cholesky(A @ A.T)


@dataclass(frozen=True)
class Signal:
    signal_time: int
    statistic: float
    change_point: int
    tau_estimate: float


class TsayDetector:
    """Online chart: feed one-step prediction errors through :meth:`update`.

    ``lambdas[j]`` is the statistic for candidate ``d = time - K + 1 + j``.
    After a signal the state is frozen until :meth:`reset`.
    """

    def __init__(self, config, time=0, lambdas=None):
        self.config = config
        K = config.window_size
        self._b, self._c = config.coefficients()
        self._b = np.ascontiguousarray(self._b)
        self._c = np.ascontiguousarray(self._c)
        self._rho = rho_table(config.eta, K)
        self.time = int(time)
        self.signal = None
        self.lambdas = np.zeros(K) if lambdas is None else np.array(lambdas, dtype=float)
        if self.lambdas.shape != (K,):
            raise ValueError(f"expected {K} statistics, got shape {self.lambdas.shape}")

    @classmethod
    def initialized(cls, config, rng, time=0):
        """Chart whose window is drawn from its in-control law, truncated to the box."""
        det = cls(config, time)
        det.reset(rng)
        return det

    def reset(self, rng=None, time=None):
        """Clear the signal; redraw the window from ``rng`` or zero it."""
        if time is not None:
            self.time = int(time)
        self.signal = None
        if rng is None:
            self.lambdas[:] = 0.0
        else:
            factor = self.config.covariance_factor()
            self.lambdas[:] = sample_mvn_truncated_box(factor, self.config.critical_value, rng)

    @property
    def signalled(self):
        return self.signal is not None

    @property
    def statistic(self):
        return float(np.max(np.abs(self.lambdas)))

    def update(self, error):
        """Ingest ``e_{T+1}``; return a :class:`Signal` if ``max|lambda| >= h``."""
        if self.signal is not None:
            raise DetectorSignalled("chart has signalled; call reset() first")
        error = float(error)
        if not np.isfinite(error):
            raise NonFiniteInput(f"non-finite prediction error {error!r}")
        x = error / self.config.sigma_a
        stat, arg = _kernels.tsay_step(self.lambdas, x, self._b, self._c)
        self.time += 1
        if stat >= self.config.critical_value:
            self.signal = self._make_signal(stat, arg)
            return self.signal
        return None

    def _make_signal(self, stat, arg):
        K = self.config.window_size
        lag = K - 1 - arg
        tau = self.lambdas[arg] * self._rho[lag] * self.config.sigma_a
        return Signal(self.time, float(stat), self.time - lag, float(tau))

    def trace(self, errors):
        """Statistics after each error in ``errors`` (no signalling, no freeze)."""
        xs = np.asarray(errors, dtype=float) / self.config.sigma_a
        if not np.all(np.isfinite(xs)):
            raise NonFiniteInput("non-finite prediction error in input")
        out = _kernels.tsay_trace(self.lambdas, xs, self._b, self._c)
        self.time += len(xs)
        return out

    def tau_estimates(self):
        """Shift-size estimates for every candidate in the window."""
        K = self.config.window_size
        lags = K - 1 - np.arange(K)
        return self.lambdas * self._rho[lags] * self.config.sigma_a
