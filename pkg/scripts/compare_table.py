"""Print a run's eigenfrequency table next to the bundled reference table.

    python scripts/compare_table.py runs/paper-bodies

For every reference pole the nearest extracted pole of the same body and
row is listed with its distance in gamma a / c.
"""
import argparse

import numpy as np

from borsem.pipeline import RunRecord, format_table
from borsem.signatures import format_pole, reference_library


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("run")
    args = ap.parse_args()

    rec = RunRecord.load(args.run)
    ours = rec.signature_library()
    ref = reference_library()
    print("extracted\n" + format_table(ours)[0])
    print("reference\n" + format_table(ref)[0])
    print(f"{'body':16s}{'m':>5s}  {'reference':16s}{'nearest':16s}{'distance':>9s}  Re/Im ref  Re/Im ours")
    for e in ref.entries:
        try:
            got = ours.get(e.body_label, e.m).values
        except KeyError:
            got = np.array([])
        for v in e.values:
            if len(got) == 0:
                print(f"{e.body_label:16s}{e.m!s:>5s}  {format_pole(v):16s}{'—':16s}")
                continue
            g = got[np.argmin(np.abs(got - v))]
            print(f"{e.body_label:16s}{e.m!s:>5s}  {format_pole(v):16s}{format_pole(g):16s}{abs(g - v):9.2f}"
                  f"  {abs(v.real / v.imag):9.2f}  {abs(g.real / g.imag):9.2f}")


if __name__ == "__main__":
    main()
