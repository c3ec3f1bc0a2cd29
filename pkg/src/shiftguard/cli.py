"""``shiftguard`` command line: calibrate, monitor, simulate and compare.

Exit codes: 0 success, 1 malformed monitor input lines were skipped,
2 configuration or model error, 3 compute budget exhausted.
"""

import argparse
import csv
import math
import os
import sys

from . import simlab
from .arma import OneStepPredictor, ar_representation
from .calibration import (
    analytic_critical_value,
    find_critical_values,
    write_calibration_csv,
)
from .config import AUTO, GRIDS, ON_SIGNAL, STUDIES, RunConfig
from .cusum import CusumChart, CusumConfig, cusum_calibrate_limit, cusum_restart_init
from .detector import DetectorConfig, TsayDetector
from .exceptions import BudgetError, ConfigError, ModelError, ShiftGuardError
from .numerics import RandomSource

EXIT_OK = 0
EXIT_SKIPPED = 1
EXIT_CONFIG = 2
EXIT_BUDGET = 3

MONITOR_COLUMNS = ["record", "time", "value", "error", "statistic", "signal",
                   "change_point", "tau_estimate"]


def _floats(text):
    text = text.strip()
    return [float(x) for x in text.split(",") if x.strip()] if text else []


def _ints(text):
    return [int(v) for v in _floats(text)]


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run configuration (flags override --config)")
    g.add_argument("--config", help="TOML run configuration")
    g.add_argument("--seed", type=int)
    g.add_argument("--threads", type=int,
                   help="worker threads (fallback: SHIFTGUARD_THREADS, then 1)")
    g.add_argument("--ar", type=_floats, help="comma-separated AR coefficients")
    g.add_argument("--ma", type=_floats, help="comma-separated MA coefficients")
    g.add_argument("--sigma-a", dest="sigma_a", type=float)
    g.add_argument("--mean", type=float)
    g.add_argument("--method", choices=("tsay", "cusum"))
    g.add_argument("--K", "--window", dest="K", type=int)
    g.add_argument("--h", help="critical value or 'auto'")
    g.add_argument("--slack", type=float)
    g.add_argument("--h-c", dest="h_c", help="CUSUM limit or 'auto'")
    g.add_argument("--target-arl0", dest="target_arl0", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--N", dest="N", type=int, help="Monte Carlo runs per candidate")
    g.add_argument("--margin", type=float, help="CI half-width that fixes N when N is unset")
    g.add_argument("--step", type=float)
    g.add_argument("--input", help="input path ('-' for stdin)")
    g.add_argument("--output", help="output path ('-' for stdout)")

    study = argparse.ArgumentParser(add_help=False)
    s = study.add_argument_group("study grid")
    s.add_argument("--grid", choices=GRIDS)
    s.add_argument("--study", dest="studies", action="append", choices=STUDIES)
    s.add_argument("--outdir")
    s.add_argument("--phi", dest="phi_values", type=_floats)
    s.add_argument("--delta", dest="delta_values", type=_floats)
    s.add_argument("--windows", dest="window_sizes", type=_ints)
    s.add_argument("--n-reps", dest="n_reps", type=int)
    s.add_argument("--calib-n", dest="calib_n", type=int)

    parser = argparse.ArgumentParser(prog="shiftguard", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("calibrate", parents=[common], help="calibrate a chart's critical value")
    mon = sub.add_parser("monitor", parents=[common], help="run a chart over a CSV stream")
    mon.add_argument("--on-signal", dest="on_signal", choices=ON_SIGNAL)
    sub.add_parser("simulate", parents=[common, study], help="run simulation studies")
    sub.add_parser("compare", parents=[common, study],
                   help="comparison study with a summary table")
    return parser


_OVERRIDES = ("seed", "threads", "ar", "ma", "sigma_a", "mean", "method", "K", "h", "slack",
              "h_c", "target_arl0", "beta", "N", "margin", "step", "input", "output",
              "on_signal", "grid", "studies", "outdir", "phi_values", "delta_values",
              "window_sizes", "n_reps", "calib_n")


def load_config(args):
    """Config file (if any) with the command-line flags applied on top."""
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    values = {k: getattr(args, k, None) for k in _OVERRIDES}
    if values.get("method") is not None:
        # switching method on the command line drops the other method's keys
        other = ("slack", "h_c") if values["method"] == "tsay" else ("K", "h")
        data = cfg.to_dict()
        for k in other:
            data.pop(k, None)
        cfg = RunConfig.from_dict(data)
    return cfg.override(**values)


def resolve_threads(cfg):
    if cfg.threads is not None:
        return cfg.threads
    env = os.environ.get("SHIFTGUARD_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"SHIFTGUARD_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError("SHIFTGUARD_THREADS must be positive")
        return n
    return 1


def _progress(msg):
    print(msg, file=sys.stderr, flush=True)


# -- calibrate ----------------------------------------------------------------

def calibrate_chart(cfg, threads, progress=None):
    """Calibrate the configured chart; return ``(limit, summary, csv_writer)``."""
    model = cfg.model()
    if cfg.method == "tsay":
        if cfg.K == 1:
            h = analytic_critical_value(cfg.target_arl0)
            res = find_critical_values(model, [1], cfg.target_arl0, cfg.beta, 1,
                                       rng=cfg.seed)[1]
            return h, res.summary, lambda fh: write_calibration_csv(fh, res)
        N = cfg.calibration_n()

        def report(k, tested):
            if progress:
                progress(f"K={k}: {len(tested)} candidates, last h={tested[-1].h:.3f}")

        res = find_critical_values(model, [cfg.K], cfg.target_arl0, cfg.beta, N, cfg.step,
                                   RandomSource(cfg.seed), threads=threads,
                                   progress=report)[cfg.K]
        return res.critical_value, res.summary, lambda fh: write_calibration_csv(fh, res)

    N = cfg.calibration_n()
    h, summary = cusum_calibrate_limit(cfg.slack, cfg.target_arl0, RandomSource(cfg.seed), N,
                                       beta=cfg.beta, threads=threads)

    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["slack", "h_c", "N", "arl_mean", "ci_low", "ci_high", "seed"])
        w.writerow([repr(cfg.slack), repr(h), summary.n, repr(summary.mean),
                    repr(summary.ci_low), repr(summary.ci_high), cfg.seed])
    return h, summary, write


def cmd_calibrate(cfg, threads):
    cfg.validate()
    h, summary, write = calibrate_chart(cfg, threads, _progress)
    out = cfg.output or "calibration.csv"
    if out == "-":
        write(sys.stdout)
    else:
        with open(out, "w", newline="") as fh:
            write(fh)
    label = f"K={cfg.K}" if cfg.method == "tsay" else f"slack={cfg.slack:g}"
    print(f"{cfg.method} {label} h_opt={h:.3f} "
          f"ARL0={summary.mean:.2f} CI=[{summary.ci_low:.2f}, {summary.ci_high:.2f}] "
          f"N={summary.n}", flush=True)
    return EXIT_OK


# -- monitor ------------------------------------------------------------------

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.10g}"
    return str(v)


class _Monitor:
    """Predictor plus chart; maps chart time back to the input's time labels."""

    def __init__(self, cfg, limit):
        model = cfg.model()
        self.cfg = cfg
        self.predictor = OneStepPredictor(ar_representation(model), model.mean)
        self.source = RandomSource(cfg.seed).derive(3)
        self.resets = 0
        if cfg.method == "tsay":
            dcfg = DetectorConfig.for_model(model, cfg.K, limit)
            self.chart = TsayDetector.initialized(dcfg, self.source.stream(0))
        else:
            ccfg = CusumConfig(cfg.slack, limit)
            state = cusum_restart_init(ccfg, self.source.stream(0))
            self.chart = CusumChart(ccfg, model.sigma_a, state)
        self.labels = {}

    def step(self, label, value):
        err = self.predictor.update(value)
        if err is None:
            return err, None, None
        sig = self.chart.update(err)
        t = self.chart.time
        self.labels[t] = label
        self._prune(t)
        return err, self.chart.statistic, sig

    def _prune(self, t):
        # keep only the times a future change-point estimate can refer to
        if self.cfg.method == "tsay":
            oldest = t - self.cfg.K + 1
        else:
            st = self.chart.state
            oldest = t - max(st.n_plus, st.n_minus)
        for old in [k for k in self.labels if k < oldest]:
            del self.labels[old]

    def label_of(self, t):
        return self.labels.get(t, "")

    def reset(self):
        self.resets += 1
        self.chart.reset(self.source.stream(self.resets))


def _parse_line(line):
    parts = [p.strip() for p in line.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected 'time,value', got {len(parts)} fields")
    value = float(parts[1])
    if not math.isfinite(value):
        raise ValueError("value is not finite")
    return parts[0], value


def cmd_monitor(cfg, threads, stdin=None, stdout=None):
    cfg.validate()
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    limit = cfg.limit
    if limit == AUTO:
        limit, summary, _ = calibrate_chart(cfg, threads, _progress)
        _progress(f"calibrated {cfg.method} limit {limit:.4f} "
                  f"(ARL0 {summary.mean:.1f}, CI [{summary.ci_low:.1f}, {summary.ci_high:.1f}])")
    mon = _Monitor(cfg, float(limit))
    try:
        fin = stdin if cfg.input in (None, "-") else open(cfg.input, newline="")
        fout = stdout if cfg.output in (None, "-") else open(cfg.output, "w", newline="")
    except OSError as exc:
        raise ConfigError(f"cannot open {exc.filename}: {exc.strerror}") from None
    skipped = 0
    try:
        w = csv.writer(fout, lineterminator="\n")
        w.writerow(MONITOR_COLUMNS)
        fout.flush()
        for lineno, raw in enumerate(fin, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                label, value = _parse_line(line)
            except ValueError as exc:
                if lineno == 1 and line.replace(" ", "").lower().startswith("time,"):
                    continue
                print(f"line {lineno}: skipped ({exc})", file=sys.stderr, flush=True)
                skipped += 1
                continue
            err, stat, sig = mon.step(label, value)
            w.writerow(["obs", label, _fmt(value), _fmt(err), _fmt(stat),
                        int(sig is not None), "", ""])
            if sig is not None:
                w.writerow(["alarm", mon.label_of(sig.signal_time), "", "",
                            _fmt(sig.statistic), 1, mon.label_of(sig.change_point),
                            _fmt(sig.tau_estimate)])
            fout.flush()
            if sig is not None:
                if cfg.on_signal == "halt":
                    break
                mon.reset()
    finally:
        if fin is not stdin:
            fin.close()
        if fout is not stdout:
            fout.close()
    return EXIT_SKIPPED if skipped else EXIT_OK


# -- simulate / compare ------------------------------------------------------

def study_grid(cfg):
    base = simlab.ExperimentGrid.full if cfg.grid == "full" else simlab.ExperimentGrid.desk
    overrides = {"seed": cfg.seed, "target_arl0": cfg.target_arl0, "beta": cfg.beta,
                 "step": cfg.step}
    for key in ("phi_values", "delta_values", "window_sizes", "n_reps", "calib_n"):
        v = getattr(cfg, key)
        if v is not None:
            overrides[key] = tuple(v) if isinstance(v, list) else v
    try:
        return base(**overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _run_grid(cfg, threads, studies, parser):
    cfg.validate(chart=False)
    grid = study_grid(cfg)
    if grid.empty:
        parser.print_usage(sys.stderr)
        print("error: the study grid is empty (need phi, delta and window values)",
              file=sys.stderr)
        return None
    return simlab.run_studies(grid, studies, cfg.outdir, threads, _progress)


def cmd_simulate(cfg, threads, parser):
    out = _run_grid(cfg, threads, cfg.studies, parser)
    if out is None:
        return EXIT_CONFIG
    for name in sorted(out.files):
        print(os.path.join(cfg.outdir, name))
    return EXIT_OK


def cmd_compare(cfg, threads, parser):
    studies = {"comparison"} | ({"robustness"} & set(cfg.studies)) | (
        {"robustness"} if "all" in cfg.studies else set())
    out = _run_grid(cfg, threads, studies, parser)
    if out is None:
        return EXIT_CONFIG
    print(simlab.format_table1(out.table1))
    return EXIT_OK


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        threads = resolve_threads(cfg)
        if args.command == "calibrate":
            return cmd_calibrate(cfg, threads)
        if args.command == "monitor":
            return cmd_monitor(cfg, threads)
        if args.command == "simulate":
            return cmd_simulate(cfg, threads, parser)
        return cmd_compare(cfg, threads, parser)
    except (ConfigError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ShiftGuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
