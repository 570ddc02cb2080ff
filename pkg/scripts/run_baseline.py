#!/usr/bin/env python3
"""Calibrate the bundled scenario, run both stages, and emit all reports.

Equivalent to `entmem simulate`, kept as a script for notebook-style
tinkering with the scenario in code.
"""

import argparse
from pathlib import Path

from entmem.calibrate import calibrate
from entmem.pipeline import report_emit, run_experiment
from entmem.scenario import load_bundled_scenario, load_scenario


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scenario", default=None)
    ap.add_argument("--out", default="baseline_out")
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()

    scenario = load_scenario(args.scenario) if args.scenario else load_bundled_scenario()
    if args.seed is not None:
        from dataclasses import replace

        scenario = replace(scenario, master_seed=args.seed)
    scenario, calib = calibrate(scenario)

    results = {}
    for stage in ("pre_storage", "post_storage"):
        res = run_experiment(scenario, stage)
        results[stage] = res
        print(
            f"{stage}: F={res.fidelity.value:.4f}+-{res.fidelity.sigma:.4f} "
            f"S={res.chsh_S.value:.4f}+-{res.chsh_S.sigma:.4f} "
            f"V={res.visibility.estimate.value:.4f}+-{res.visibility.estimate.sigma:.4f}"
        )
        print(
            f"  g2_peak={res.g2_peak:.2f} alpha={res.alpha.value:.4f} "
            f"R={res.cauchy_schwarz['R']:.1f} eta={res.eta:.4f}"
        )
    files = report_emit(scenario, results, args.out, calibration_report=calib)
    print(f"wrote {len(files)} files under {Path(args.out).resolve()}")


if __name__ == "__main__":
    main()
