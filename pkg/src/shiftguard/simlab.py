"""Simulation studies on AR(1) processes: out-of-control run lengths, change-point
accuracy and CUSUM-versus-window-chart comparisons, written as tidy CSV.

Every cell draws from random streams derived from the grid seed and the cell's
own coordinates, so results do not depend on evaluation order or threads.
"""

import csv
import dataclasses
import hashlib
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .arma import ArmaModel, ShiftSpec, model_eta, shift_profile
from .calibration import (
    analytic_critical_value,
    arl_confidence_interval,
    find_critical_values,
    write_calibration_csv,
)
from .cusum import (
    CusumConfig,
    cusum_calibrate_limit,
    simulate_cusum_runs,
    slack_grid_setting_2,
    slack_setting_1,
)
from .calibration import simulate_tsay_runs
from .detector import DetectorConfig
from .exceptions import UncalibratedMethod
from .numerics import RandomSource, as_source

TSAY = "TSAY"
CUSUM_S1 = "CUSUM_S1"
CUSUM_S2 = "CUSUM_S2"
METHODS = (TSAY, CUSUM_S1, CUSUM_S2)
_METHOD_CODE = {TSAY: 1, CUSUM_S1: 2, CUSUM_S2: 3}
T_STAR = 1
ACCURACY_WINDOW = 10


def _key(x):
    return int(round(float(x) * 1e6))


@dataclass
class ExperimentGrid:
    phi_values: tuple = (-0.9, -0.5, 0.0, 0.5, 0.9)
    delta_values: tuple = (0.5, 1.0, 1.5)
    window_sizes: tuple = (1, 2, 5, 10, 25, 50, 100)
    n_reps: int = 2000
    seed: int = 0
    calib_n: int = 5000
    slack_points: int = 8
    target_arl0: float = 370.4
    beta: float = 0.05
    step: float = 0.05
    max_steps: int = 10**5

    def __post_init__(self):
        self.phi_values = tuple(float(v) for v in self.phi_values)
        self.delta_values = tuple(float(v) for v in self.delta_values)
        self.window_sizes = tuple(sorted(int(v) for v in self.window_sizes))
        if any(not -1.0 < p < 1.0 for p in self.phi_values):
            raise ValueError("phi values must lie strictly inside (-1, 1)")
        if any(d < 0 for d in self.delta_values):
            raise ValueError("delta values must be non-negative")
        if any(k < 1 for k in self.window_sizes):
            raise ValueError("window sizes must be positive")

    @property
    def empty(self):
        return not (self.phi_values and self.delta_values and self.window_sizes)

    @classmethod
    def desk(cls, **overrides):
        return cls(**overrides)

    @classmethod
    def full(cls, **overrides):
        """Full-scale grid: long batch job."""
        base = dict(
            phi_values=tuple(np.round(np.arange(-0.95, 0.951, 0.05), 2)),
            delta_values=tuple(np.round(np.arange(0.1, 2.01, 0.1), 2)),
            window_sizes=tuple(range(1, 101)),
            n_reps=20000,
            calib_n=21512,
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class TunedChart:
    """A chart ready to run: window size or slack plus its critical value."""

    method: str
    tuning: float
    critical_value: float = None


@dataclass
class ExperimentRecord:
    method: str
    phi: float
    delta: float
    tuning: float
    critical_value: float
    arl1: float
    arl1_ci_low: float
    arl1_ci_high: float
    frac_signal_within_10: float
    frac_cpe_within_10: float
    n_reps: int
    n_censored: int
    seed: int
    tuned_delta: float = None

    def __post_init__(self):
        if self.tuned_delta is None:
            self.tuned_delta = self.delta


RECORD_COLUMNS = [f.name for f in dataclasses.fields(ExperimentRecord)]


def run_arl1_cell(chart, phi, delta, n_reps, rng, tuned_delta=None, sigma_a=1.0,
                  max_steps=10**5, threads=1):
    """Simulate ``n_reps`` runs of ``chart`` on an AR(1) stream with a level shift
    of ``delta`` process standard deviations at time 1.

    Charts start in control at time 0: the window chart from its truncated
    in-control law, CUSUM after its restart burn-in.
    """
    if chart.critical_value is None:
        raise UncalibratedMethod(f"{chart.method} chart has no critical value")
    source = as_source(rng)
    model = ArmaModel.ar1(phi, sigma_a)
    K = int(chart.tuning) if chart.method == TSAY else 1
    eta = model_eta(model, K + 2)
    shift = ShiftSpec.from_delta(delta, phi, sigma_a, T_STAR)
    mu = shift_profile(eta, shift, len(eta)) / sigma_a
    if chart.method == TSAY:
        cfg = DetectorConfig(K, chart.critical_value, eta, sigma_a)
        steps, status, cpe = simulate_tsay_runs(cfg, n_reps, source, mu=mu,
                                                max_steps=max_steps, threads=threads)
    else:
        cfg = CusumConfig(chart.tuning, chart.critical_value)
        steps, status, cpe = simulate_cusum_runs(cfg, n_reps, source, mu=mu,
                                                 max_steps=max_steps, threads=threads)
    censored = status == _kernels.CENSORED
    summary = arl_confidence_interval(n_reps, float(steps.mean()), 0.05, int(censored.sum()))
    near_signal = np.abs(steps - T_STAR) <= ACCURACY_WINDOW
    near_cpe = (np.abs(cpe - T_STAR) <= ACCURACY_WINDOW) & ~censored
    return ExperimentRecord(
        method=chart.method, phi=float(phi), delta=float(delta), tuning=float(chart.tuning),
        critical_value=float(chart.critical_value), arl1=summary.mean,
        arl1_ci_low=summary.ci_low, arl1_ci_high=summary.ci_high,
        frac_signal_within_10=float(near_signal.mean()),
        frac_cpe_within_10=float(near_cpe.mean()), n_reps=int(n_reps),
        n_censored=summary.n_censored, seed=int(source.seed),
        tuned_delta=float(delta if tuned_delta is None else tuned_delta))


def best_over_tuning(records):
    """Record with the smallest ARL1; ties go to the smaller window or larger slack."""
    records = list(records)
    if not records:
        raise ValueError("no records to choose from")

    def order(r):
        tie = r.tuning if r.method == TSAY else -r.tuning
        return (r.arl1, tie)

    return min(records, key=order)


def comparison_ratio(cusum_record, tsay_record):
    """``ARL1(CUSUM) / ARL1(window chart)``; above 1 favours the window chart."""
    if (cusum_record.phi, cusum_record.delta) != (tsay_record.phi, tsay_record.delta):
        raise ValueError("records belong to different (phi, delta) cells")
    return cusum_record.arl1 / tsay_record.arl1


class ChartBook:
    """Calibrated critical values for a grid, computed lazily and cached."""

    def __init__(self, grid, threads=1, progress=None):
        self.grid = grid
        self.threads = threads
        self.progress = progress
        self.tsay = {}
        self.tsay_results = {}
        self.cusum = {}
        self._source = RandomSource(grid.seed)

    def tsay_h(self, phi, K):
        phi = float(phi)
        if phi not in self.tsay:
            self._calibrate_tsay(phi)
        return self.tsay[phi][int(K)]

    def _calibrate_tsay(self, phi):
        g = self.grid
        table = {1: analytic_critical_value(g.target_arl0)}
        ks = [k for k in g.window_sizes if k > 1]
        if ks:
            t0 = time.time()
            res = find_critical_values(
                ArmaModel.ar1(phi), ks, g.target_arl0, g.beta, g.calib_n, g.step,
                self._source.derive(0, _key(phi)), threads=self.threads)
            self.tsay_results[phi] = res
            table.update({k: r.critical_value for k, r in res.items()})
            self._say(f"calibrated window chart phi={phi:g} up to K={max(ks)} "
                      f"in {time.time() - t0:.0f}s")
        self.tsay[phi] = table

    def cusum_h(self, slack):
        k = _key(slack)
        if k not in self.cusum:
            h, summary = cusum_calibrate_limit(
                float(slack), self.grid.target_arl0, self._source.derive(1),
                self.grid.calib_n, beta=self.grid.beta, threads=self.threads, clip=True)
            self.cusum[k] = (float(slack), h, summary)
        return self.cusum[k][1]

    def chart(self, method, tuning, phi):
        if method == TSAY:
            return TunedChart(TSAY, int(tuning), self.tsay_h(phi, int(tuning)))
        return TunedChart(method, float(tuning), self.cusum_h(tuning))

    def _say(self, msg):
        if self.progress is not None:
            self.progress(msg)

    def write(self, outdir):
        """Write calibration tables; return ``{filename: sha256}``."""
        paths = {}
        tsay_path = os.path.join(outdir, "tsay_calibration.csv")
        results = [r for phi in sorted(self.tsay_results)
                   for _, r in sorted(self.tsay_results[phi].items())]
        write_calibration_csv(tsay_path, results)
        paths["tsay_calibration.csv"] = tsay_path
        cusum_path = os.path.join(outdir, "cusum_calibration.csv")
        with open(cusum_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["slack", "h_c", "N", "arl_mean", "ci_low", "ci_high", "seed"])
            for k in sorted(self.cusum):
                s, h, summ = self.cusum[k]
                w.writerow([repr(s), repr(h), summ.n, repr(summ.mean), repr(summ.ci_low),
                            repr(summ.ci_high), self.grid.seed])
        paths["cusum_calibration.csv"] = cusum_path
        return {name: _sha256(p) for name, p in paths.items()}


def _sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def cusum_slacks(method, phi, delta, n_points):
    tau = ShiftSpec.from_delta(delta, phi).tau
    eta1 = 1.0 - phi
    if method == CUSUM_S1:
        return [slack_setting_1(tau, eta1)]
    return list(slack_grid_setting_2(eta1, n_points, scale=tau / 2.0))


def _cell_source(grid, method, phi, delta, tuning, factor=1.0):
    return RandomSource(grid.seed).derive(
        2, _METHOD_CODE[method], _key(phi), _key(delta), _key(tuning), _key(factor))


def _run(book, grid, method, tuning, phi, delta, tuned_delta=None, factor=1.0):
    chart = book.chart(method, tuning, phi)
    rng = _cell_source(grid, method, phi, tuned_delta if tuned_delta is not None else delta,
                       tuning, factor)
    return run_arl1_cell(chart, phi, delta, grid.n_reps, rng, tuned_delta=tuned_delta,
                         max_steps=grid.max_steps, threads=book.threads)


def tuning_study(grid, book=None, methods=METHODS, threads=1, progress=None):
    """All cells of the grid for every method and tuning value."""
    book = book or ChartBook(grid, threads, progress)
    records = []
    for phi in grid.phi_values:
        for delta in grid.delta_values:
            for method in methods:
                if method == TSAY:
                    tunings = grid.window_sizes
                else:
                    tunings = cusum_slacks(method, phi, delta, grid.slack_points)
                for tuning in tunings:
                    records.append(_run(book, grid, method, tuning, phi, delta))
            if progress:
                progress(f"cells done for phi={phi:g}, delta={delta:g}")
    return records


def _group(records):
    out = {}
    for r in records:
        out.setdefault((r.method, r.phi, r.delta), []).append(r)
    return out


@dataclass
class ComparisonRow:
    condition: str
    setting: int
    phi: float
    delta: float
    actual_delta: float
    tsay_window: int
    tsay_arl1: float
    cusum_slack: float
    cusum_arl1: float
    ratio: float


COMPARISON_COLUMNS = [f.name for f in dataclasses.fields(ComparisonRow)]


def optimal_comparison(records):
    """Best window chart against both CUSUM settings in every (phi, delta) cell."""
    groups = _group(records)
    rows = []
    cells = sorted({(r.phi, r.delta) for r in records})
    for phi, delta in cells:
        tsay = best_over_tuning(groups[(TSAY, phi, delta)])
        for setting, method in ((1, CUSUM_S1), (2, CUSUM_S2)):
            if (method, phi, delta) not in groups:
                continue
            cus = best_over_tuning(groups[(method, phi, delta)])
            rows.append(ComparisonRow("optimal", setting, phi, delta, delta, int(tsay.tuning),
                                      tsay.arl1, cus.tuning, cus.arl1,
                                      comparison_ratio(cus, tsay)))
    return rows


def robustness_study(grid, records, factor, book=None, threads=1, progress=None):
    """Re-run each cell's optimal tunings against a shift ``factor`` times larger.

    Returns ``(new_records, comparison_rows)``.
    """
    book = book or ChartBook(grid, threads, progress)
    groups = _group(records)
    condition = {0.5: "half", 2.0: "double"}.get(float(factor), f"x{factor:g}")
    new_records = []
    rows = []
    cells = sorted({(r.phi, r.delta) for r in records})
    for phi, delta in cells:
        actual = delta * factor
        best_t = best_over_tuning(groups[(TSAY, phi, delta)])
        if factor == 1.0:
            t_rec = best_t
        else:
            t_rec = _run(book, grid, TSAY, best_t.tuning, phi, actual, delta, factor)
            new_records.append(t_rec)
        for setting, method in ((1, CUSUM_S1), (2, CUSUM_S2)):
            if (method, phi, delta) not in groups:
                continue
            best_c = best_over_tuning(groups[(method, phi, delta)])
            if factor == 1.0:
                c_rec = best_c
            else:
                c_rec = _run(book, grid, method, best_c.tuning, phi, actual, delta, factor)
                new_records.append(c_rec)
            rows.append(ComparisonRow(condition, setting, phi, delta, actual, int(t_rec.tuning),
                                      t_rec.arl1, c_rec.tuning, c_rec.arl1,
                                      c_rec.arl1 / t_rec.arl1))
        if progress:
            progress(f"robustness x{factor:g} done for phi={phi:g}, delta={delta:g}")
    return new_records, rows


def table1_summary(rows):
    """``{(setting, condition): (low, median, high)}`` of the comparison ratios."""
    out = {}
    keys = sorted({(r.setting, r.condition) for r in rows})
    for setting, condition in keys:
        ratios = np.array([r.ratio for r in rows
                           if r.setting == setting and r.condition == condition])
        out[(setting, condition)] = (float(ratios.min()), float(np.median(ratios)),
                                     float(ratios.max()))
    return out


def format_table1(summary):
    conditions = [c for c in ("optimal", "half", "double")
                  if any(k[1] == c for k in summary)]
    lines = ["setting  stat    " + "".join(f"{c:>9}" for c in conditions)]
    for setting in sorted({k[0] for k in summary}):
        for i, stat in enumerate(("low", "median", "high")):
            vals = "".join(f"{summary[(setting, c)][i]:9.2f}" if (setting, c) in summary
                           else f"{'':>9}" for c in conditions)
            lines.append(f"{setting:<8} {stat:<7}{vals}")
    return "\n".join(lines)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            d = dataclasses.asdict(r)
            w.writerow([_fmt(d[c]) for c in columns])


def write_records(path, records):
    write_csv(path, records, RECORD_COLUMNS)


def read_records(path):
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(ExperimentRecord(
                method=row["method"], phi=float(row["phi"]), delta=float(row["delta"]),
                tuning=float(row["tuning"]), critical_value=float(row["critical_value"]),
                arl1=float(row["arl1"]), arl1_ci_low=float(row["arl1_ci_low"]),
                arl1_ci_high=float(row["arl1_ci_high"]),
                frac_signal_within_10=float(row["frac_signal_within_10"]),
                frac_cpe_within_10=float(row["frac_cpe_within_10"]),
                n_reps=int(row["n_reps"]), n_censored=int(row["n_censored"]),
                seed=int(row["seed"]), tuned_delta=float(row["tuned_delta"])))
    return out


@dataclass
class StudyOutput:
    records: list = field(default_factory=list)
    comparison: list = field(default_factory=list)
    robustness: list = field(default_factory=list)
    robustness_rows: list = field(default_factory=list)
    files: dict = field(default_factory=dict)

    @property
    def table1(self):
        return table1_summary(self.comparison + self.robustness_rows)


def run_studies(grid, studies, outdir=None, threads=1, progress=None):
    """Run the requested studies (``arl1``, ``accuracy``, ``comparison``,
    ``robustness``) and optionally write their CSVs plus a manifest."""
    studies = set(studies)
    if "all" in studies:
        studies = {"arl1", "accuracy", "comparison", "robustness"}
    book = ChartBook(grid, threads, progress)
    out = StudyOutput()
    methods = (TSAY,) if studies <= {"arl1", "accuracy"} else METHODS
    out.records = tuning_study(grid, book, methods, threads, progress)
    if studies & {"comparison", "robustness"}:
        out.comparison = optimal_comparison(out.records)
    if "robustness" in studies:
        for factor in (0.5, 2.0):
            recs, rows = robustness_study(grid, out.records, factor, book, threads, progress)
            out.robustness += recs
            out.robustness_rows += rows
    if outdir is not None:
        os.makedirs(outdir, exist_ok=True)
        names = []
        if "arl1" in studies:
            names.append(("arl1.csv", out.records, RECORD_COLUMNS))
        if "accuracy" in studies:
            names.append(("accuracy.csv", out.records, RECORD_COLUMNS))
        if studies & {"comparison", "robustness"}:
            names.append(("comparison.csv", out.comparison + out.robustness_rows,
                          COMPARISON_COLUMNS))
        if "robustness" in studies:
            names.append(("robustness.csv", out.robustness, RECORD_COLUMNS))
        for name, rows, cols in names:
            path = os.path.join(outdir, name)
            write_csv(path, rows, cols)
            out.files[name] = _sha256(path)
        calib_hashes = book.write(outdir)
        manifest = {
            "grid": grid.to_dict(),
            "studies": sorted(studies),
            "seed": grid.seed,
            "outputs": out.files,
            "calibration_files": calib_hashes,
            "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        }
        with open(os.path.join(outdir, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
    return out
