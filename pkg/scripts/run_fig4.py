"""Run the height-RMSE sweep (ED-NOMP, NOMP, OMP over SNR and L) and write reports.

Example:
    python scripts/run_fig4.py --trials 100 --seed 7 --out results/fig4
"""

import argparse
import sys
import time

from ednomp.bench import ExperimentSpec, emit_reports, output_dir, run_experiment


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--snapshots", type=int, default=2)
    ap.add_argument("--out", default=None, help="output directory (else $EDNOMP_OUTPUT_DIR, else ./results)")
    args = ap.parse_args(argv)

    spec = ExperimentSpec(n_trials=args.trials, seed=args.seed, n_snapshots=args.snapshots)
    t0 = time.perf_counter()

    def progress(si, trial):
        if trial == spec.n_trials - 1:
            print(f"  snr {spec.snr_grid_db[si]:g} dB done ({time.perf_counter() - t0:.0f} s)", file=sys.stderr)

    report = run_experiment(spec, progress=progress)
    out = output_dir(args.out)
    emit_reports(spec, report, out)

    print(f"{'alg':8s} {'L':>3s} " + " ".join(f"{s:>8g}" for s in spec.snr_grid_db))
    for alg in spec.algorithms:
        for L in spec.baseline_counts:
            row = " ".join(f"{report.cell(alg, L, s).rmse_height_m:8.3f}" for s in spec.snr_grid_db)
            print(f"{alg:8s} {L:3d} {row}")
    print(f"reports in {out}, {time.perf_counter() - t0:.0f} s", file=sys.stderr)


if __name__ == "__main__":
    main()
