"""Command line: ``plan``, ``simulate``, ``estimate`` and ``bench``.

Exit codes: 0 success, 2 configuration error, 3 infeasible numerology.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bench import _observe, _trial_scene, emit_reports, output_dir, plan_frame, run_experiment
from .config import ConfigError, load_config_file, load_spec, radar_from_dict, spec_from_dict
from .nr_frame import InfeasibleError
from .path_classify import NoPathsDetected, classify_paths
from .pipeline import run_detector
from .scene_sim import WaveformConfig, read_observations, write_observations

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 2, 3


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _dump(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _overrides(args) -> dict:
    out = {"seed": getattr(args, "seed", None)}
    for name in ("n_trials", "snr_grid_db", "baseline_counts", "algorithms", "n_snapshots"):
        out[name] = getattr(args, name, None)
    return out


def cmd_plan(args) -> int:
    block = {}
    if args.config:
        cfg = load_config_file(args.config)
        block = dict(cfg.get("radar", cfg))
    for key in ("range_resolution_m", "max_unambiguous_range_m", "max_unambiguous_velocity_mps",
                "carrier_frequency_hz", "ssb_period_slots", "frame_length_slots"):
        value = getattr(args, key)
        if value is not None:
            block[key] = value
    req = radar_from_dict(block)
    _dump(plan_frame(req, args.prefer).to_dict(), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = load_spec(args.config, _overrides(args))
    si = 0
    if args.snr is not None:
        spec = replace(spec, snr_grid_db=(args.snr,))
    scene = _trial_scene(spec, args.trial, spec.snr_grid_db[si], spec.resolved_range_gate())
    obs = _observe(spec, scene, args.trial, si, args.target)
    flat = [o for row in obs for o in row]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_observations(str(out), flat, spec.waveform, len(obs))
    truth = {
        "seed": spec.seed,
        "trial": args.trial,
        "snr_db": spec.snr_grid_db[si],
        "scene": scene.to_dict(),
        "waveform": spec.waveform.to_dict(),
        "records": [
            {
                "baseline": o.baseline_index,
                "snapshot": o.slow_time_index,
                "paths": [
                    {"delay_s": p.delay_s, "doppler_hz": p.doppler_hz, "kind": p.kind.value,
                     "gain": [p.complex_gain.real, p.complex_gain.imag]}
                    for p in o.ground_truth
                ],
            }
            for o in flat
        ],
    }
    _dump(truth, str(out) + ".json")
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = load_config_file(args.config) if args.config else {}
    spec = spec_from_dict(cfg)
    header, obs = read_observations(args.input)
    pri_mask = header["mask"]
    wf = WaveformConfig(
        header["n_subcarriers"], header["n_symbols"], spec.waveform.scs_hz,
        spec.waveform.carrier_frequency_hz, spec.waveform.cp_duration_s,
        mask=None if pri_mask.all() else pri_mask,
    )
    settings = spec.detector
    if args.threshold is not None:
        settings = replace(settings, stop_threshold=args.threshold)
    records = obs if args.record is None else [obs[args.record]]
    out = []
    for o in records:
        res = run_detector(o, wf, settings, args.algorithm)
        entry = {"baseline": o.baseline_index, "snapshot": o.slow_time_index, **res.to_dict()}
        try:
            h_i = spec.scene.altitude(o.baseline_index)
            entry["classified"] = classify_paths(res.paths, h_i, wf.wavelength_m, spec.classifier).to_dict()
        except NoPathsDetected:
            entry["classified"] = None
        out.append(entry)
    _dump({"algorithm": args.algorithm, "records": out}, args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    spec = load_spec(args.config, _overrides(args))
    report = run_experiment(spec)
    out = output_dir(args.out)
    emit_reports(spec, report, out)
    for row in report.flagged_cells():
        print(f"warning: cell {row} exceeds the failure budget", file=sys.stderr)
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ednomp", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="select a numerology for radar requirements")
    p.add_argument("--config", help="JSON/TOML with a [radar] block (or a bare requirements table)")
    p.add_argument("--range-resolution-m", dest="range_resolution_m", type=float)
    p.add_argument("--max-unambiguous-range-m", dest="max_unambiguous_range_m", type=float)
    p.add_argument("--max-unambiguous-velocity-mps", dest="max_unambiguous_velocity_mps", type=float)
    p.add_argument("--carrier-frequency-hz", dest="carrier_frequency_hz", type=float)
    p.add_argument("--ssb-period-slots", dest="ssb_period_slots", type=int)
    p.add_argument("--frame-length-slots", dest="frame_length_slots", type=int)
    p.add_argument("--prefer", choices=("smallest", "largest"), default="smallest")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plan)

    def experiment_flags(p):
        p.add_argument("--config")
        p.add_argument("--seed", type=int, required=True)
        p.add_argument("--trials", dest="n_trials", type=int)
        p.add_argument("--snapshots", dest="n_snapshots", type=int)
        p.add_argument("--snr-grid", dest="snr_grid_db", type=_float_list, help="comma-separated dB values")
        p.add_argument("--baselines", dest="baseline_counts", type=_int_list, help="comma-separated L values")
        p.add_argument("--algorithms", type=lambda s: [a for a in s.split(",") if a])

    p = sub.add_parser("simulate", help="write one trial's observations to a binary file")
    experiment_flags(p)
    p.add_argument("--snr", type=float, help="SNR in dB (default: first grid point)")
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--target", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="detect paths in an observation file")
    p.add_argument("--input", required=True)
    p.add_argument("--config")
    p.add_argument("--record", type=int)
    p.add_argument("--algorithm", choices=("NOMP", "OMP"), default="NOMP")
    p.add_argument("--threshold", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("bench", help="Monte-Carlo RMSE sweep")
    experiment_flags(p)
    p.add_argument("--out", help="output directory (default: $EDNOMP_OUTPUT_DIR or ./results)")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    np.seterr(all="ignore")
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
