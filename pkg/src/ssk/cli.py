"""Command line driver: simulate | features | separate | evaluate | perturb.

Every subcommand is deterministic under a fixed --seed. Log level comes
from the SSK_LOG environment variable (DEBUG/INFO/WARNING/ERROR).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .dataset_io import atomic_write_bytes, read_manifest
from .pipeline import (METHODS, FeatureSelection, PipelineConfig,
                       angle_difference_histogram, build_features,
                       evaluate_dataset, perturb_sweep, separate_dataset,
                       simulate_dataset, write_sweep_reports)

log = logging.getLogger("ssk")


def _setup_logging() -> None:
    level = os.environ.get("SSK_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _add_analysis_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--array-diameter", type=float, default=0.07,
                   help="circular array diameter in meters")
    p.add_argument("--num-mics", type=int, default=6, help="microphone count")
    p.add_argument("--fft-size", type=int, default=64, help="FFT length for features")
    p.add_argument("--win-len", type=int, default=40, help="analysis window length, samples")
    p.add_argument("--hop", type=int, default=20, help="hop size, samples")
    p.add_argument("--grid-step", type=float, default=10.0,
                   help="direction grid spacing in degrees")
    p.add_argument("--sample-rate", type=int, default=16000, help="sample rate, Hz")


def _pipeline_config(args) -> PipelineConfig:
    return PipelineConfig.default(
        sample_rate=args.sample_rate, num_mics=args.num_mics,
        array_diameter=args.array_diameter, grid_step=args.grid_step,
        fft_size=args.fft_size, win_len=args.win_len, hop=args.hop)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssk",
        description="Direction-informed multi-channel target speech separation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="render reverberant scenes and a manifest")
    p_sim.add_argument("--out", required=True, help="output dataset directory")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--num-scenes", type=int, default=50)
    p_sim.add_argument("--num-speakers", type=int, default=2, choices=(1, 2, 3))
    p_sim.add_argument("--duration", type=float, default=2.0,
                       help="dry source duration in seconds")
    p_sim.add_argument("--source-dir", default=None,
                       help="directory of mono WAVs to use as dry sources")
    p_sim.add_argument("--synth-kind", default="speech",
                       choices=("speech", "noise", "am", "chirp"),
                       help="builtin synthetic source type (used without --source-dir)")
    p_sim.add_argument("--jobs", type=int, default=1)
    _add_analysis_flags(p_sim)

    p_feat = sub.add_parser("features", help="extract feature files per utterance/target")
    p_feat.add_argument("--manifest", required=True)
    p_feat.add_argument("--out", required=True, help="feature output directory")
    p_feat.add_argument("--features", default="lps,cosipd,af,dpr",
                        help="comma list from lps,cosipd,sinipd,af,dpr")
    p_feat.add_argument("--cond", default="tgt", choices=("tgt", "tgt+intf"))
    p_feat.add_argument("--jobs", type=int, default=1)
    _add_analysis_flags(p_feat)

    p_sep = sub.add_parser("separate", help="run a separation method over a manifest")
    p_sep.add_argument("--manifest", required=True)
    p_sep.add_argument("--out", required=True, help="estimate output directory")
    p_sep.add_argument("--method", required=True, choices=METHODS)
    p_sep.add_argument("--cond", default="tgt", choices=("tgt", "tgt+intf"))
    p_sep.add_argument("--alpha", type=float, default=1.0, help="heuristic AF weight")
    p_sep.add_argument("--beta", type=float, default=1.0, help="heuristic DPR weight")
    p_sep.add_argument("--direction-error-deg", type=float, default=0.0,
                       help="perturb the target azimuth by this magnitude, random sign")
    p_sep.add_argument("--seed", type=int, default=0, help="error-sign seed")
    p_sep.add_argument("--jobs", type=int, default=1)
    _add_analysis_flags(p_sep)

    p_eval = sub.add_parser("evaluate", help="score estimates against reference images")
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--estimates", required=True, help="directory of estimate WAVs")
    p_eval.add_argument("--out", required=True, help="report path prefix")
    p_eval.add_argument("--method", default="", help="method label for the report")

    p_pert = sub.add_parser("perturb", help="direction-error sweep for the heuristic")
    p_pert.add_argument("--manifest", required=True)
    p_pert.add_argument("--out", required=True, help="sweep output directory")
    p_pert.add_argument("--direction-error-deg", default="0,1,2,3,4,5,6,7,8,9,10",
                        help="comma list of error magnitudes in degrees")
    p_pert.add_argument("--seed", type=int, default=0)
    p_pert.add_argument("--cond", default="tgt", choices=("tgt", "tgt+intf"))
    p_pert.add_argument("--jobs", type=int, default=1)
    _add_analysis_flags(p_pert)

    return parser


def cmd_simulate(args) -> int:
    cfg = _pipeline_config(args)
    manifest = simulate_dataset(
        args.out, args.num_scenes, args.num_speakers, args.seed, cfg,
        duration=args.duration, synth_kind=args.synth_kind,
        source_dir=args.source_dir, jobs=args.jobs)
    hist = angle_difference_histogram(manifest)
    print(f"wrote {len(manifest.utterances)} scenes to {args.out}")
    print("angle-difference bins: " +
          ", ".join(f"{label}: {count}" for label, count in hist.items()))
    return 0


def cmd_features(args) -> int:
    cfg = _pipeline_config(args)
    manifest = read_manifest(args.manifest, validate_files=True)
    selection = FeatureSelection.from_csv(args.features, cond=args.cond)
    paths = build_features(manifest, args.out, cfg, selection, jobs=args.jobs)
    print(f"wrote {len(paths)} feature files to {args.out}")
    return 0


def cmd_separate(args) -> int:
    cfg = _pipeline_config(args)
    manifest = read_manifest(args.manifest, validate_files=True)
    paths = separate_dataset(
        manifest, args.out, args.method, cfg, cond=args.cond,
        alpha=args.alpha, beta=args.beta,
        direction_error_deg=args.direction_error_deg, error_seed=args.seed,
        jobs=args.jobs)
    print(f"wrote {len(paths)} estimates to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    manifest = read_manifest(args.manifest, validate_files=True)
    report, _, missing = evaluate_dataset(manifest, args.estimates, method=args.method)
    if missing:
        for path in missing:
            print(f"missing estimate: {path}", file=sys.stderr)
        return 1
    out = Path(args.out)
    atomic_write_bytes(out.with_suffix(".json"), report.to_json().encode("utf-8"))
    report.write_csv(out.with_suffix(".csv"))
    for b in report.bins:
        mean = "-" if b.mean_si_sdri is None else f"{b.mean_si_sdri:.2f}"
        print(f"bin {b.label:>6}: count {b.count:4d}  mean SI-SDRi {mean} dB")
    overall = "-" if report.overall_mean is None else f"{report.overall_mean:.2f}"
    print(f"overall: count {report.overall_count}  mean SI-SDRi {overall} dB")
    return 0


def cmd_perturb(args) -> int:
    cfg = _pipeline_config(args)
    manifest = read_manifest(args.manifest, validate_files=True)
    errors = [float(tok) for tok in str(args.direction_error_deg).split(",") if tok.strip()]
    sweep = perturb_sweep(manifest, args.out, errors, args.seed, cfg,
                          cond=args.cond, jobs=args.jobs)
    json_path, csv_path = write_sweep_reports(sweep, args.out)
    for variant, rows in sweep["variants"].items():
        for row in rows:
            gt15 = "-" if row["mean_gt15"] is None else f"{row['mean_gt15']:.2f}"
            overall = "-" if row["overall"] is None else f"{row['overall']:.2f}"
            print(f"{variant:>7} error {row['error_deg']:4.1f} deg: "
                  f">15deg {gt15} dB, overall {overall} dB")
    print(f"wrote {json_path} and {csv_path}")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "features": cmd_features,
    "separate": cmd_separate,
    "evaluate": cmd_evaluate,
    "perturb": cmd_perturb,
}


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
