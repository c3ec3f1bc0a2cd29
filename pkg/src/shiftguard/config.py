"""Flat TOML run configuration shared by the command-line tools.

Example::

    ar = [0.5]
    sigma_a = 1.0
    method = "tsay"
    K = 10
    h = "auto"
    seed = 7
"""

import dataclasses
from dataclasses import dataclass, field

import toml

from .arma import ArmaModel
from .exceptions import ConfigError

AUTO = "auto"
METHODS = ("tsay", "cusum")
ON_SIGNAL = ("halt", "reset")
GRIDS = ("desk", "full")
STUDIES = ("arl1", "accuracy", "comparison", "robustness", "all")

_LIST_FLOAT = ("ar", "ma", "phi_values", "delta_values")
_LIST_INT = ("window_sizes",)
_LIST_STR = ("studies",)


@dataclass
class RunConfig:
    # model
    ar: list = field(default_factory=list)
    ma: list = field(default_factory=list)
    sigma_a: float = 1.0
    mean: float = 0.0
    # chart
    method: str = "tsay"
    K: int = None
    h: object = None
    slack: float = None
    h_c: object = None
    on_signal: str = "halt"
    # calibration
    target_arl0: float = 370.4
    beta: float = 0.05
    N: int = None
    margin: float = 5.0
    step: float = 0.05
    # io and execution
    input: str = None
    output: str = None
    seed: int = 0
    threads: int = None
    # studies
    grid: str = "desk"
    studies: list = field(default_factory=lambda: ["arl1"])
    outdir: str = "results"
    phi_values: list = None
    delta_values: list = None
    window_sizes: list = None
    n_reps: int = None
    calib_n: int = None

    def __post_init__(self):
        for name in _LIST_FLOAT:
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, [_number(name, x) for x in _as_list(name, v)])
        for name in _LIST_INT:
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, [_integer(name, x) for x in _as_list(name, v)])
        for name in _LIST_STR:
            setattr(self, name, [str(x) for x in _as_list(name, getattr(self, name))])
        for name in ("sigma_a", "mean", "target_arl0", "beta", "margin", "step"):
            setattr(self, name, _number(name, getattr(self, name)))
        for name in ("seed",):
            setattr(self, name, _integer(name, getattr(self, name)))
        for name in ("K", "N", "threads", "n_reps", "calib_n"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, _integer(name, v))
        if self.slack is not None:
            self.slack = _number("slack", self.slack)
        self.h = _limit("h", self.h)
        self.h_c = _limit("h_c", self.h_c)

    # -- (de)serialization -------------------------------------------------
    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def loads(cls, text):
        try:
            data = toml.loads(text)
        except toml.TomlDecodeError as exc:
            raise ConfigError(f"cannot parse config: {exc}") from None
        nested = [k for k, v in data.items() if isinstance(v, dict)]
        if nested:
            raise ConfigError(f"config must be flat; found tables {nested}")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                return cls.loads(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None

    def to_dict(self):
        """Keys with a value; unset optional keys are left out."""
        return {k: v for k, v in dataclasses.asdict(self).items() if v is not None}

    def dumps(self):
        return toml.dumps(self.to_dict())

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    def override(self, **values):
        """Copy with the non-None entries of ``values`` replaced."""
        data = dataclasses.asdict(self)
        data.update({k: v for k, v in values.items() if v is not None})
        return type(self).from_dict(data)

    # -- validation ----------------------------------------------------------
    def model(self):
        """The ARMA model; raises the model's own errors if it is invalid."""
        return ArmaModel(ar=tuple(self.ar), ma=tuple(self.ma), sigma_a=self.sigma_a,
                         mean=self.mean)

    def calibration_n(self):
        from .calibration import choose_n_for_margin

        if self.N is not None:
            return self.N
        return choose_n_for_margin(self.target_arl0, self.beta, self.margin)

    def validate(self, chart=True):
        if not self.target_arl0 > 1:
            raise ConfigError("target_arl0 must exceed 1")
        if not 0 < self.beta < 1:
            raise ConfigError("beta must lie in (0, 1)")
        if self.N is not None and self.N < 1:
            raise ConfigError("N must be positive")
        if self.N is None and not self.margin > 0:
            raise ConfigError("margin must be positive when N is not given")
        if not self.step > 0:
            raise ConfigError("step must be positive")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be positive")
        if self.on_signal not in ON_SIGNAL:
            raise ConfigError(f"on_signal must be one of {ON_SIGNAL}")
        if self.grid not in GRIDS:
            raise ConfigError(f"grid must be one of {GRIDS}")
        bad = [s for s in self.studies if s not in STUDIES]
        if bad:
            raise ConfigError(f"unknown studies {bad}; choose from {STUDIES}")
        if chart:
            self._validate_chart()
        return self

    def _validate_chart(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        tsay_keys = [k for k in ("K", "h") if getattr(self, k) is not None]
        cusum_keys = [k for k in ("slack", "h_c") if getattr(self, k) is not None]
        if self.method == "tsay":
            if cusum_keys:
                raise ConfigError(f"method 'tsay' selected but CUSUM keys {cusum_keys} set")
            if self.K is None or self.K < 1:
                raise ConfigError("method 'tsay' needs a window size K >= 1")
            if isinstance(self.h, float) and not self.h > 0:
                raise ConfigError("h must be positive")
        else:
            if tsay_keys:
                raise ConfigError(f"method 'cusum' selected but window keys {tsay_keys} set")
            if self.slack is None or not self.slack >= 0:
                raise ConfigError("method 'cusum' needs a non-negative slack")
            if isinstance(self.h_c, float) and not self.h_c > 0:
                raise ConfigError("h_c must be positive")

    @property
    def limit(self):
        """Configured critical value of the selected chart, or ``"auto"``."""
        v = self.h if self.method == "tsay" else self.h_c
        return AUTO if v is None else v


def _as_list(name, v):
    if isinstance(v, (list, tuple)):
        return list(v)
    raise ConfigError(f"{name} must be an array")


def _number(name, v):
    if isinstance(v, bool):
        raise ConfigError(f"{name} must be a number")
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {v!r}") from None


def _integer(name, v):
    if isinstance(v, bool):
        raise ConfigError(f"{name} must be an integer")
    try:
        f = float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be an integer, got {v!r}") from None
    if not f.is_integer():
        raise ConfigError(f"{name} must be an integer, got {v!r}")
    return int(f)


def _limit(name, v):
    if v is None:
        return None
    if isinstance(v, str) and v.strip().lower() == AUTO:
        return AUTO
    return _number(name, v)
