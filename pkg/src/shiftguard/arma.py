"""Known-parameter ARMA models, their AR(infinity) form and the level-shift
response of the one-step prediction errors.

Sign conventions: ``Phi(B) = 1 - sum(phi_i B^i)``, ``Theta(B) = 1 +
sum(theta_i B^i)`` and ``Pi(B) = Phi(B) / Theta(B) = 1 - sum(pi_i B^i)``.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .exceptions import (
    InsufficientHistory,
    ModelError,
    NonInvertible,
    NonStationary,
    TruncationWarning,
)
from .numerics import as_source

ROOT_TOL = 1e-9


def _min_root_modulus(coeffs, sign):
    """Smallest |z| solving ``1 + sign * sum(c_i z^i) = 0``.

    Roots are the reciprocals of the companion-matrix eigenvalues.
    """
    c = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    n = len(c)
    if n == 0:
        return np.inf
    companion = np.zeros((n, n))
    companion[0, :] = -sign * c
    companion[1:, :-1] = np.eye(n - 1)
    eig = np.abs(np.linalg.eigvals(companion))
    with np.errstate(divide="ignore", over="ignore"):
        return float(1.0 / eig.max())


def _frozen(values):
    arr = np.array(values, dtype=float).ravel()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ArmaModel:
    """Stationary, invertible ARMA(p, q) process with known parameters."""

    ar: tuple = ()
    ma: tuple = ()
    sigma_a: float = 1.0
    mean: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "ar", tuple(float(v) for v in np.ravel(self.ar)))
        object.__setattr__(self, "ma", tuple(float(v) for v in np.ravel(self.ma)))
        object.__setattr__(self, "sigma_a", float(self.sigma_a))
        object.__setattr__(self, "mean", float(self.mean))
        if not np.all(np.isfinite(self.ar + self.ma + (self.sigma_a, self.mean))):
            raise ModelError("model parameters must be finite")
        if not self.sigma_a > 0:
            raise ModelError(f"sigma_a must be positive, got {self.sigma_a}")
        if _min_root_modulus(self.ar, -1.0) <= 1.0 + ROOT_TOL:
            raise NonStationary(
                f"AR polynomial with phi={list(self.ar)} has a root on or inside the unit circle")
        if _min_root_modulus(self.ma, 1.0) <= 1.0 + ROOT_TOL:
            raise NonInvertible(
                f"MA polynomial with theta={list(self.ma)} has a root on or inside the unit circle")

    @property
    def p(self):
        return len(self.ar)

    @property
    def q(self):
        return len(self.ma)

    @property
    def ar_poly(self):
        return np.r_[1.0, -np.asarray(self.ar)]

    @property
    def ma_poly(self):
        return np.r_[1.0, np.asarray(self.ma)]

    @classmethod
    def ar1(cls, phi, sigma_a=1.0, mean=0.0):
        return cls(ar=(phi,), sigma_a=sigma_a, mean=mean)

    def model_id(self):
        ar = ",".join(f"{v:g}" for v in self.ar)
        ma = ",".join(f"{v:g}" for v in self.ma)
        return f"arma(ar=[{ar}];ma=[{ma}];sigma={self.sigma_a:g})"

    def simulate(self, n, rng=None, burn=500):
        """Simulate ``n`` observations of the in-control process."""
        a = as_source(rng).normal(0.0, self.sigma_a, n + burn)
        x = signal.lfilter(self.ma_poly, self.ar_poly, a)
        return x[burn:] + self.mean


@dataclass(frozen=True)
class PiWeights:
    """Coefficients ``pi_1..pi_{p*}`` of the truncated AR representation."""

    pi: np.ndarray
    truncation_tol: float = 1e-8
    truncated: bool = False

    def __post_init__(self):
        object.__setattr__(self, "pi", _frozen(self.pi))

    @property
    def p_star(self):
        return len(self.pi)


def ar_representation(model, tol=1e-8, max_order=500):
    """AR(p*) form of ``model`` by long division of Phi(B) by Theta(B).

    The expansion is cut after the last coefficient with magnitude >= ``tol``.
    A ``TruncationWarning`` is issued (and ``truncated`` set) when the tail
    is still above ``tol`` at ``max_order``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_order < model.p:
        raise ValueError("max_order must be at least the AR order")
    if model.q == 0:
        return PiWeights(np.asarray(model.ar), tol, False)
    if _min_root_modulus(model.ma, 1.0) <= 1.0 + ROOT_TOL:
        raise NonInvertible("MA polynomial is not invertible")
    phi_poly = model.ar_poly
    theta = model.ma_poly
    q = model.q
    # Theta(B) * P(B) = Phi(B), P(B) = 1 - sum(pi_i B^i)
    coef = np.zeros(max_order + 1)
    coef[0] = 1.0
    for j in range(1, max_order + 1):
        v = phi_poly[j] if j < len(phi_poly) else 0.0
        for i in range(1, min(j, q) + 1):
            v -= theta[i] * coef[j - i]
        coef[j] = v
    pi = -coef[1:]
    big = np.flatnonzero(np.abs(pi) >= tol)
    p_star = max(int(big[-1]) + 1 if big.size else 0, model.p)
    truncated = bool(abs(pi[-1]) >= tol)
    if truncated:
        warnings.warn(
            f"AR representation still above {tol:g} at order {max_order}",
            TruncationWarning, stacklevel=2)
    return PiWeights(pi[:p_star], tol, truncated)


@dataclass(frozen=True)
class EtaWeights:
    """Coefficients of H(B) = Pi(B) / (1 - B).

    Stored as an explicit head ``eta[0..L-1]``; every index past the AR
    truncation order equals ``tail``.
    """

    eta: np.ndarray
    tail: float = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "eta", _frozen(self.eta))
        if self.tail is None:
            object.__setattr__(self, "tail", float(self.eta[-1]))

    def __len__(self):
        return len(self.eta)

    def __getitem__(self, j):
        return self.eta[j]

    def values(self, n):
        """First ``n`` coefficients, extending the constant tail as needed."""
        if n <= len(self.eta):
            return np.array(self.eta[:n])
        return np.r_[self.eta, np.full(n - len(self.eta), self.tail)]

    @property
    def eta1(self):
        return float(self.values(2)[1])


def eta_weights(pi, length):
    if length < 1:
        raise ValueError("length must be at least 1")
    if isinstance(pi, PiWeights):
        pi = pi.pi
    pi = np.asarray(pi, dtype=float)
    n = max(int(length), len(pi) + 1)
    cum = np.zeros(n)
    cum[1:len(pi) + 1] = np.cumsum(pi)
    cum[len(pi) + 1:] = cum[len(pi)]
    eta = 1.0 - cum
    return EtaWeights(eta, float(eta[-1]))


def model_eta(model, length, tol=1e-8, max_order=500):
    """Shortcut: eta weights of ``model`` with at least ``length`` entries."""
    return eta_weights(ar_representation(model, tol, max_order), length)


def one_step_errors(pi, observations, mean=0.0):
    """One-step prediction errors ``e_t = y_t - sum(pi_i y_{t-i})``, ``y = x - mean``.

    The first ``p*`` observations serve as warm-up and produce no error, so
    the result has ``len(observations) - p*`` entries.
    """
    if isinstance(pi, PiWeights):
        pi = pi.pi
    pi = np.asarray(pi, dtype=float)
    y = np.asarray(observations, dtype=float) - mean
    p = len(pi)
    n = len(y)
    if n < p + 1:
        raise InsufficientHistory(f"need at least {p + 1} observations, got {n}")
    e = y[p:].copy()
    for i in range(1, p + 1):
        e -= pi[i - 1] * y[p - i:n - i]
    return e


class OneStepPredictor:
    """Streaming counterpart of :func:`one_step_errors`.

    :meth:`update` returns ``None`` for the first ``p*`` observations and the
    prediction error afterwards.
    """

    def __init__(self, pi, mean=0.0):
        if isinstance(pi, PiWeights):
            pi = pi.pi
        self.pi = np.asarray(pi, dtype=float)
        self.mean = float(mean)
        self._history = np.zeros(len(self.pi))  # newest first
        self._seen = 0

    @property
    def warm(self):
        return self._seen >= len(self.pi)

    def update(self, x):
        y = float(x) - self.mean
        err = y - float(np.dot(self.pi, self._history)) if self.warm else None
        if len(self._history):
            self._history[1:] = self._history[:-1]
            self._history[0] = y
        self._seen += 1
        return err


@dataclass(frozen=True)
class ShiftSpec:
    """Level shift of raw size ``tau`` starting at time ``t_star``."""

    t_star: int = 1
    tau: float = 0.0
    delta: float = None

    @classmethod
    def from_delta(cls, delta, phi1, sigma_a=1.0, t_star=1):
        """Shift parametrized in units of the AR(1) process standard deviation."""
        tau = delta * sigma_a / np.sqrt(1.0 - phi1 ** 2)
        return cls(t_star=t_star, tau=float(tau), delta=float(delta))


def shift_profile(eta, shift, horizon):
    """Mean of ``e_t`` for ``t = 1..horizon`` under ``shift``."""
    mu = np.zeros(horizon)
    start = max(shift.t_star, 1)
    if shift.tau == 0.0 or start > horizon:
        return mu
    lag0 = start - shift.t_star
    mu[start - 1:] = shift.tau * eta.values(lag0 + horizon - start + 1)[lag0:]
    return mu


def simulate_errors(eta, shift, horizon, rng, sigma_a=1.0):
    """Simulate one-step prediction errors for ``t = 1..horizon`` under a level shift."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    noise = as_source(rng).normal(0.0, sigma_a, horizon)
    return noise + shift_profile(eta, shift, horizon)
