"""Run bundled presets and write their tables and plot data.

    python scripts/run_presets.py                   # both presets under runs/
    python scripts/run_presets.py sphere-oracle --set solver.density=24
"""
import argparse
import os
import time

from borsem.config import PRESETS, apply_overrides, load_preset
from borsem.pipeline import emit_plot_data, emit_table, run_experiment, sphere_check


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("presets", nargs="*", default=list(PRESETS))
    ap.add_argument("--root", default="runs", help="parent directory of the run directories")
    ap.add_argument("--set", action="append", default=[], metavar="PATH=VALUE")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    for name in args.presets:
        cfg = apply_overrides(load_preset(name), args.set + [f"workers={args.workers}"])
        out = os.path.join(args.root, name)
        t0 = time.perf_counter()
        rec = run_experiment(cfg, out)
        text, _ = emit_table(rec)
        emit_plot_data(rec)
        print(f"== {name}: {len(rec.responses)} responses, {len(rec.failures)} failed, "
              f"{time.perf_counter() - t0:.0f} s -> {out}")
        print(text)
        if cfg.bodies[0].kind == "sphere":
            ok, errs = sphere_check(rec)
            for slug, err in errs.items():
                print(f"{slug}: dominant pole error {err:.2%} ({'PASS' if ok else 'FAIL'})")


if __name__ == "__main__":
    main()
