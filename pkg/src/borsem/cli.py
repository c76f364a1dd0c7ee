"""Command-line entry point.

Exit codes: 0 success, 1 validation error (including a failed oracle),
2 solver instability, 3 sweep finished with failed cells.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .config import ExperimentConfig, apply_overrides, load_config, load_preset
from .signatures import DistanceWeights, SignatureLibrary, classify, reference_library

EXIT_OK, EXIT_VALIDATION, EXIT_INSTABILITY, EXIT_PARTIAL = 0, 1, 2, 3


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    cfg = apply_overrides(cfg, args.set or [])
    if getattr(args, "workers", None):
        cfg = apply_overrides(cfg, [f"workers={args.workers}"])
    return cfg


def _sweep_status(record: pipeline.RunRecord) -> int:
    if not record.failures:
        return EXIT_OK
    unstable = all(v.startswith("instability") for v in record.failures.values())
    if unstable and not record.responses:
        return EXIT_INSTABILITY
    return EXIT_PARTIAL


def _report(record: pipeline.RunRecord) -> None:
    print(f"run {record.root}  config {record.config_hash[:12]}")
    print(f"  responses {len(record.responses)}  fits {len(record.fits)}  skipped {len(record.skipped)}"
          f"  failed {len(record.failures)}")
    for slug, msg in record.failures.items():
        print(f"  FAILED {slug}: {msg}")


def cmd_solve(args) -> int:
    cfg = _config(args)
    record = pipeline.run_experiment(cfg, args.output)
    pipeline.emit_table(record)
    pipeline.emit_plot_data(record)
    _report(record)
    return _sweep_status(record)


def cmd_extract(args) -> int:
    record = pipeline.RunRecord.load(args.run)
    cfg = apply_overrides(record.config(), args.set or [])
    record = pipeline.extract_record(record, cfg.extraction)
    _report(record)
    return _sweep_status(record)


def cmd_signature(args) -> int:
    record = pipeline.RunRecord.load(args.run)
    lib = pipeline.aggregate(record, args.radius)
    print(f"{len(lib.entries)} signatures written to {record.path(record.signatures)}")
    return EXIT_OK


def _library(source: str) -> SignatureLibrary:
    if source == "reference":
        return reference_library()
    if source.endswith(".json"):
        with open(source) as fh:
            return SignatureLibrary.from_json(fh.read())
    return pipeline.RunRecord.load(source).signature_library()


def cmd_table(args) -> int:
    if args.source == "reference":
        text, table_csv = pipeline.format_table(reference_library())
    else:
        text, table_csv = pipeline.emit_table(pipeline.RunRecord.load(args.source))
    sys.stdout.write(table_csv if args.csv else text)
    return EXIT_OK


def cmd_classify(args) -> int:
    query = _library(args.query)
    lib = _library(args.library)
    weights = DistanceWeights(re=args.re_weight, im=args.im_weight)
    for sig in query.entries:
        if args.m is not None and str(sig.m) != args.m:
            continue
        ranked = classify(sig, lib, weights)
        ranking = "  ".join(f"{label} {score:.4f}" for label, score in ranked)
        print(f"{sig.body_label} m={sig.m}: {ranking}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = apply_overrides(load_preset("sphere-oracle"), args.set or [])
    record = pipeline.run_experiment(cfg, args.output)
    if record.failures:
        _report(record)
        return _sweep_status(record)
    ok, errs = pipeline.sphere_check(record, args.tolerance)
    poles = pipeline.dominant_poles(record)
    for slug, err in errs.items():
        g = poles[slug]
        print(f"{slug}: dominant pole {g.real:+.4f}{g.imag:+.4f}i  relative error {err:.2%}")
    print("oracle", "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="borsem", description="Transient scattering and resonance signatures "
                                "of bodies of revolution.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def with_set(sp):
        sp.add_argument("--set", action="append", metavar="PATH=VALUE",
                        help="override a config field, e.g. solver.density=24 or bodies.0.a=2")

    sp = sub.add_parser("solve", help="run a sweep")
    sp.add_argument("config", help="preset name or JSON config path")
    sp.add_argument("--output", help=f"output directory (default: config output_dir under ${pipeline.OUTPUT_ENV})")
    sp.add_argument("--workers", type=int)
    with_set(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("extract", help="re-run pole extraction on stored responses")
    sp.add_argument("run")
    with_set(sp)
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("signature", help="re-aggregate stored fits into signatures")
    sp.add_argument("run")
    sp.add_argument("--radius", type=float)
    sp.set_defaults(func=cmd_signature)

    sp = sub.add_parser("table", help="print the eigenfrequency table of a run (or 'reference')")
    sp.add_argument("source")
    sp.add_argument("--csv", action="store_true")
    sp.set_defaults(func=cmd_table)

    sp = sub.add_parser("classify", help="rank library bodies for each query signature")
    sp.add_argument("query", help="run directory or signature JSON")
    sp.add_argument("--library", default="reference", help="'reference' (bundled table), a run directory or a signature JSON")
    sp.add_argument("--m", help="only this row (0..3 or sum)")
    sp.add_argument("--re-weight", type=float, default=1.0)
    sp.add_argument("--im-weight", type=float, default=4.0)
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("oracle", help="sphere validation run")
    sp.add_argument("--output")
    sp.add_argument("--tolerance", type=float, default=0.10)
    with_set(sp)
    sp.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except pipeline.InstabilityError as exc:
        print(f"error: solver instability: {exc}", file=sys.stderr)
        return EXIT_INSTABILITY
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
