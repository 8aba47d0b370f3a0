"""Command-line entry point: synth, featurize, train, predict, eval, capture."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import UNKNOWN
from .pipeline import (
    PipelineConfig,
    default_jobs,
    evaluate,
    feature_importance_report,
    featurize_manifest,
    fit_pipeline,
    importance_csv,
    load_model_file,
    predict_trace,
    read_feature_csv,
    read_feature_meta,
    save_model_file,
    stratified_split,
    write_feature_csv,
    write_feature_meta,
)
from .preprocess import SensorCalibration
from .selection import SCALER_KINDS
from .synth import MAX_CLASSES, default_signatures, generate_dataset
from .trace_io import SerialDecoder, RawTrace, load_manifest, read_trace, save_trace

log = logging.getLogger("portscope")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _unit_interval(text):
    v = float(text)
    if not 0 <= v <= 1:
        raise argparse.ArgumentTypeError(f"must be in [0, 1], got {text}")
    return v


def _calibration(text):
    try:
        sens, offset = (float(p) for p in text.split(","))
        return SensorCalibration(sens, offset)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected SENS_MV_PER_A,OFFSET_COUNTS: {exc}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=42, help="RNG seed (default 42)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="portscope", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic trace dataset")
    p.add_argument("--classes", type=_positive_int, default=10)
    p.add_argument("--traces", type=_positive_int, default=25, help="traces per class")
    p.add_argument("--duration", type=_positive_float, default=10.0, help="seconds per trace")
    p.add_argument("--rate", type=_positive_float, default=40000.0, help="sample rate in Hz")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--with-unknown", action="store_true", help="also write one withheld class to unknown/")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("featurize", parents=[common], help="extract features for a dataset directory")
    p.add_argument("--in", dest="in_dir", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--unknown-out", type=Path, help="CSV for unknown/ traces (default: <out stem>_unknown.csv)")
    p.add_argument("--calibrate", type=_calibration, metavar="SENS,OFFSET",
                   help="convert counts to mA with sensor sensitivity (mV/A) and zero offset (counts)")
    p.add_argument("--jobs", type=_positive_int, default=None, help="worker processes (default: CPUs or PORTSCOPE_JOBS)")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", parents=[common], help="split, fit a pipeline, report holdout metrics")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--classifier", choices=("knn", "forest"), default="knn")
    p.add_argument("--scaler", choices=SCALER_KINDS, default="normalizer")
    p.add_argument("--k-best", type=_positive_int, default=30)
    p.add_argument("--knn-k", type=_positive_int, default=5)
    p.add_argument("--trees", type=_positive_int, default=100)
    p.add_argument("--threshold", type=_unit_interval, default=0.5)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--test-out", type=Path, help="write the holdout rows as a feature CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="classify one trace file")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--trace", type=Path, required=True)
    p.add_argument("--threshold", type=_unit_interval)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", parents=[common], help="evaluate a model on a feature CSV")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--unknown", type=Path, help="feature CSV of unknown-class traces (enables open-set)")
    p.add_argument("--threshold", type=_unit_interval)
    p.add_argument("--report", type=Path, required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("capture", parents=[common], help="decode a serial dump into a trace file")
    p.add_argument("--input", required=True, help="dump file, or - for standard input")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--rate", type=_positive_float, default=40000.0)
    p.add_argument("--bits", type=_positive_int, default=12)
    p.add_argument("--label")
    p.add_argument("--port", choices=("USB", "HDMI", "SYNTH"), default="USB")
    p.set_defaults(func=cmd_capture)
    return parser


def _print_config(args):
    skip = {"func"}
    items = " ".join(f"{k}={v}" for k, v in sorted(vars(args).items()) if k not in skip)
    print(f"config: {items}", file=sys.stderr)


def cmd_synth(args) -> int:
    sigs = default_signatures(args.classes + int(args.with_unknown), args.seed)
    unknown = sigs.pop() if args.with_unknown else None
    t0 = time.perf_counter()
    manifest = generate_dataset(sigs, args.out, args.traces, args.duration, args.rate, args.seed, unknown)
    n = sum(len(files) for _, files in manifest.classes)
    print(f"classes={len(manifest.classes)} traces={n} unknown={len(manifest.unknown_paths)} out={args.out}")
    log.info("synth took %.1fs", time.perf_counter() - t0)
    return 0


def cmd_featurize(args) -> int:
    from .features import FeatureConfig

    jobs = args.jobs or default_jobs()
    manifest = load_manifest(args.in_dir, validate=False)
    cfg = FeatureConfig()
    known, unknown = featurize_manifest(manifest, cfg, args.calibrate, jobs)
    write_feature_csv(known, args.out)
    write_feature_meta(args.out, cfg, args.calibrate)
    print(f"rows={len(known)} features={len(known.feature_names)} out={args.out}")
    if unknown is not None:
        upath = args.unknown_out or args.out.with_name(args.out.stem + "_unknown.csv")
        write_feature_csv(unknown, upath)
        write_feature_meta(upath, cfg, args.calibrate)
        print(f"unknown_rows={len(unknown)} unknown_out={upath}")
    return 0


def cmd_train(args) -> int:
    data = read_feature_csv(args.features)
    feature_cfg, cal = read_feature_meta(args.features)
    cfg = PipelineConfig(args.scaler, args.classifier, args.k_best, args.knn_k, 2.0, args.trees, args.threshold, args.seed)
    train, test = stratified_split(data, args.test_fraction, args.seed)
    model = fit_pipeline(train, cfg, feature_cfg, cal)
    save_model_file(model, args.model)
    if args.test_out:
        write_feature_csv(test, args.test_out)
        write_feature_meta(args.test_out, feature_cfg, cal)
    report = evaluate(model, test)
    print(f"n_train={len(train)} n_test={len(test)}")
    print(f"accuracy={report.accuracy:.6f} macro_f1={report.macro_f1:.6f}")
    print(f"weighted_f1={report.weighted_f1:.6f}")
    print(f"model={args.model}")
    return 0


def cmd_predict(args) -> int:
    model = load_model_file(args.model)
    trace = read_trace(args.trace)
    pred = predict_trace(model, trace, args.threshold)
    if pred.label == UNKNOWN:
        print(f"label={UNKNOWN} confidence={pred.confidence:.6f}")
    else:
        print(f"label={pred.label} confidence={pred.confidence:.6f}")
    return 0


def cmd_eval(args) -> int:
    model = load_model_file(args.model)
    test = read_feature_csv(args.features)
    if test.feature_names != model.feature_names:
        raise ValueError("feature CSV columns do not match the model's feature names")
    unknown = read_feature_csv(args.unknown) if args.unknown else None
    report = evaluate(model, test, open_set=unknown is not None, unknown_rows=unknown, threshold=args.threshold)
    args.report.mkdir(parents=True, exist_ok=True)
    (args.report / "report.txt").write_text(report.to_text(), encoding="utf-8")
    (args.report / "confusion.csv").write_text(report.confusion_csv(), encoding="utf-8")
    rows = feature_importance_report(model.selector, model.feature_names, 30)
    (args.report / "importance.csv").write_text(importance_csv(rows), encoding="utf-8")
    print(f"accuracy={report.accuracy:.6f}")
    print(f"macro_f1={report.macro_f1:.6f}")
    print(f"weighted_f1={report.weighted_f1:.6f}")
    if report.unknown_rejection_rate is not None:
        print(f"unknown_rejection_rate={report.unknown_rejection_rate:.6f}")
    print(f"report={args.report}")
    return 0


def cmd_capture(args) -> int:
    dec = SerialDecoder(args.bits)
    samples = []
    src = sys.stdin.buffer if args.input == "-" else open(args.input, "rb")
    try:
        while chunk := src.read(1 << 16):
            samples += dec.feed(chunk)
    finally:
        if src is not sys.stdin.buffer:
            src.close()
    dec.finish()
    print(f"samples={len(samples)} discarded={dec.discarded}")
    if not samples:
        print("portscope capture: no valid samples in input", file=sys.stderr)
        return 1
    trace = RawTrace(samples, args.rate, args.bits, args.port, args.label, args.out.stem)
    save_trace(trace, args.out)
    print(f"out={args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.command == "train" and not 0 < args.test_fraction < 1:
        parser.error("--test-fraction must be in (0, 1)")
    if args.command == "synth" and args.classes + args.with_unknown > MAX_CLASSES:
        parser.error(f"--classes allows at most {MAX_CLASSES} signatures including the unknown one")
    _print_config(args)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"portscope {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
