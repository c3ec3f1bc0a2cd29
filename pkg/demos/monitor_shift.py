"""Watch a window chart and a CUSUM chart pick up a level shift in an AR(1) series.

    python3 demos/monitor_shift.py

The series has phi = 0.6 and jumps by two process standard deviations at
t = 200. Both charts read the same one-step prediction errors and restart after
a false alarm; each stops at its first alarm once the shift is in.
"""

import numpy as np

from shiftguard import (
    ArmaModel,
    CusumChart,
    CusumConfig,
    DetectorConfig,
    OneStepPredictor,
    RandomSource,
    TsayDetector,
    ar_representation,
    cusum_calibrate_limit,
    find_critical_value,
)

PHI, K, SLACK, T_SHIFT, DELTA = 0.6, 10, 0.5, 200, 2.0


def main():
    model = ArmaModel.ar1(PHI)
    x = model.simulate(400, rng=RandomSource(11))
    tau = DELTA / np.sqrt(1 - PHI ** 2)
    x[T_SHIFT - 1:] += tau

    h = find_critical_value(model, K, N=3000, rng=3).critical_value
    h_c, _ = cusum_calibrate_limit(SLACK, 370.4, RandomSource(4), N=3000)
    print(f"window chart K={K} h={h:.3f}; CUSUM s={SLACK} h_c={h_c:.3f}")

    predictor = OneStepPredictor(ar_representation(model))
    charts = {"window": TsayDetector(DetectorConfig.for_model(model, K, h)),
              "cusum": CusumChart(CusumConfig(SLACK, h_c))}
    alarms = {name: [] for name in charts}
    for t, value in enumerate(x, 1):
        e = predictor.update(value)
        if e is None:
            continue
        for name, chart in charts.items():
            if alarms[name] and alarms[name][-1][0] >= T_SHIFT:
                continue
            sig = chart.update(e)
            if sig is not None:
                alarms[name].append((t, sig))
                chart.reset()
    for name, hits in alarms.items():
        for t, sig in hits:
            tag = "false alarm" if t < T_SHIFT else f"delay {t - T_SHIFT}"
            print(f"{name:6s} alarm at t={t} ({tag}); change point {sig.change_point}, "
                  f"tau estimate {sig.tau_estimate:.2f} (true {tau:.2f})")
        if not hits:
            print(f"{name:6s} no alarm")


if __name__ == "__main__":
    main()
