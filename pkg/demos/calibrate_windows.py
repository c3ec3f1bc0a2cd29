"""Critical value of the window chart as the window grows, for a few AR(1) models.

    python3 demos/calibrate_windows.py [N]

N is the number of Monte Carlo runs per candidate (default 2000, about a
minute). The K = 1 column is the analytic residual-chart limit.
"""

import sys
import time

from shiftguard import ArmaModel, find_critical_values

WINDOWS = [1, 2, 5, 10, 25]


def main(n_runs=2000):
    print("phi   " + "".join(f"K={k:<6d}" for k in WINDOWS))
    t0 = time.time()
    for phi in (-0.5, 0.0, 0.5, 0.9):
        res = find_critical_values(ArmaModel.ar1(phi), WINDOWS, N=n_runs, rng=7)
        print(f"{phi:<5g} " + "".join(f"{res[k].critical_value:<8.3f}" for k in WINDOWS))
    print(f"({time.time() - t0:.0f}s)")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 2000)
