"""Command-line interface.

Subcommands: simulate, calibrate, tomo, chsh, eit, report.
Exit codes: 0 success, 2 validation error, 3 calibration error,
4 estimation error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .calibrate import DEFAULT_TARGETS, calibrate
from .detection import records_from_csv
from .errors import EntmemError, ValidationError
from .estimators import chsh_E, chsh_S, chsh_S_literal, tomo_linear, tomo_mle
from .memory import eit_transmission, transparency_window_fwhm
from .pipeline import STAGES, report_emit, run_experiment
from .qstate import bell_psi_plus, fidelity
from .scenario import load_bundled_scenario, load_scenario, save_scenario


def _load(args) -> "Scenario":
    if args.scenario:
        scenario = load_scenario(args.scenario)
    else:
        scenario = load_bundled_scenario()
    if args.seed is not None:
        from dataclasses import replace

        scenario = replace(scenario, master_seed=int(args.seed))
    return scenario


def _cmd_simulate(args) -> int:
    scenario = _load(args)
    calib_report = None
    if not args.skip_calibration:
        scenario, calib_report = calibrate(scenario)
    stages = list(STAGES) if args.stage == "both" else [args.stage]
    results = {}
    for stage in stages:
        results[stage] = run_experiment(scenario, stage, sampling=args.sampling)
    files = report_emit(scenario, results, args.out, calibration_report=calib_report)
    for stage, result in results.items():
        print(
            f"{stage}: F={result.fidelity.value:.4f} S={result.chsh_S.value:.4f} "
            f"V={result.visibility.estimate.value:.4f} g2_peak={result.g2_peak:.2f} "
            f"alpha={result.alpha.value:.4f} R={result.cauchy_schwarz['R']:.1f}"
        )
    print(f"wrote {len(files)} files under {args.out}")
    return 0


def _cmd_calibrate(args) -> int:
    scenario = _load(args)
    targets = dict(DEFAULT_TARGETS)
    if args.targets:
        targets.update(json.loads(args.targets))
    scenario, report = calibrate(scenario, targets)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_scenario(scenario, out / "scenario_calibrated.json")
    (out / "calibration_report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n"
    )
    for name, entry in report.items():
        if name == "checks":
            continue
        flag = "  [FLAGGED]" if entry["flagged"] else ""
        print(
            f"{name}: target={entry['target']:.6g} achieved={entry['achieved']:.6g} "
            f"residual={entry['residual']:.2%}{flag}"
        )
    print(f"wrote {out / 'scenario_calibrated.json'}")
    return 0


def _cmd_tomo(args) -> int:
    records = records_from_csv(Path(args.counts).read_text())
    rho_lin = tomo_linear(records)
    rho_hat = tomo_mle(records, init=rho_lin)
    f = fidelity(rho_hat, bell_psi_plus())
    out = {
        "rho_linear": {
            "basis": "HH,HV,VH,VV",
            "rho": [[[float(z.real), float(z.imag)] for z in row] for row in rho_lin],
        },
        "rho_mle": rho_hat.to_json_dict(),
        "fidelity_to_ideal": f,
    }
    Path(args.out).mkdir(parents=True, exist_ok=True)
    path = Path(args.out) / "tomo_report.json"
    path.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    print(f"fidelity to ideal: {f:.4f}; wrote {path}")
    return 0


def _cmd_chsh(args) -> int:
    records = records_from_csv(Path(args.counts).read_text())
    by_label = {r.setting_label: r.coincidences for r in records}
    e = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            try:
                counts = [by_label[f"chsh:{i}{j}:{port}"] for port in ("pp", "pm", "mp", "mm")]
            except KeyError as exc:
                raise ValidationError(f"missing CHSH record {exc}") from exc
            e[i, j] = chsh_E(*counts)
    s = chsh_S(e)
    print(f"E matrix: {e.tolist()}")
    print(f"S = {s:.6f} (literal formula: {chsh_S_literal(e):.6f})")
    return 0


def _cmd_eit(args) -> int:
    scenario = _load(args)
    grid, trans = eit_transmission(scenario.eit)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "eit_spectrum.csv"
    path.write_text(
        "detuning_mhz,transmission\n"
        + "\n".join(f"{d:.6g},{t:.10g}" for d, t in zip(grid, trans))
        + "\n"
    )
    if scenario.eit.rabi_coupling > 0:
        print(f"transparency window FWHM: {transparency_window_fwhm(scenario.eit):.3f} MHz")
    print(f"wrote {path}")
    return 0


def _cmd_report(args) -> int:
    path = Path(args.report)
    data = json.loads(path.read_text())
    if not data:
        raise ValidationError("empty report")
    round_trip = json.loads(json.dumps(data, sort_keys=True))
    if round_trip != data:
        raise ValidationError("report does not round-trip")
    stage = data.get("stage", "?")
    fid = data.get("fidelity", {})
    chsh = data.get("chsh", {})
    vis = data.get("visibility", {})
    print(f"stage: {stage}")
    print(f"fidelity ({fid.get('reference')}): {fid.get('value'):.4f} +- {fid.get('sigma'):.4f}")
    print(f"CHSH S: {chsh.get('value'):.4f} +- {chsh.get('sigma'):.4f}")
    print(f"visibility: {vis.get('value'):.4f} +- {vis.get('sigma'):.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entmem",
        description="Simulate and estimate a two-color entanglement storage experiment.",
    )
    parser.add_argument("--scenario", help="scenario JSON path (default: bundled baseline)")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--out", default="entmem_out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the experiment and emit reports")
    p.add_argument("--stage", choices=["pre_storage", "post_storage", "both"], default="both")
    p.add_argument("--sampling", choices=["poisson", "expected"], default="poisson")
    p.add_argument("--skip-calibration", action="store_true")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("calibrate", help="fit free parameters to the anchor targets")
    p.add_argument("--targets", help="JSON object overriding the default targets")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("tomo", help="reconstruct a density matrix from a counts CSV")
    p.add_argument("--counts", required=True, help="CountRecord CSV with the 16 settings")
    p.set_defaults(func=_cmd_tomo)

    p = sub.add_parser("chsh", help="compute S from a CHSH counts CSV")
    p.add_argument("--counts", required=True)
    p.set_defaults(func=_cmd_chsh)

    p = sub.add_parser("eit", help="emit the EIT transmission spectrum")
    p.set_defaults(func=_cmd_eit)

    p = sub.add_parser("report", help="validate and summarize a report JSON")
    p.add_argument("--report", required=True)
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EntmemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
