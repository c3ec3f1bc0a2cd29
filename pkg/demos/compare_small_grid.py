"""Window chart against CUSUM on a small grid, summarised like the desk study.

    python3 demos/compare_small_grid.py [outdir]

Ratios are CUSUM ARL1 over window-chart ARL1, so values above 1 favour the
window chart. Takes a couple of minutes.
"""

import sys

from shiftguard.simlab import ExperimentGrid, format_table1, run_studies


def main(outdir="demo_out"):
    grid = ExperimentGrid(phi_values=(0.0, 0.5, 0.9), delta_values=(0.5, 1.5),
                          window_sizes=(1, 2, 5, 10), n_reps=500, calib_n=1500, seed=2)
    out = run_studies(grid, ["comparison", "robustness"], outdir, progress=print)
    print()
    for row in out.comparison:
        print(f"setting {row.setting} phi={row.phi:<4g} delta={row.delta:<4g} "
              f"best K={row.tsay_window:<3d} ratio={row.ratio:.3f}")
    print()
    print(format_table1(out.table1))
    print(f"\nCSV files in {outdir}/")


if __name__ == "__main__":
    main(*sys.argv[1:2])
