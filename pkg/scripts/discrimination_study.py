"""Classification accuracy of jittered reference signatures.

Queries are reference rows with Gaussian noise on every Re and Im; each is
ranked against the reference table.  The ablation columns zero the Im
weight of the 1st/2nd or the 3rd/4th poles.

    python scripts/discrimination_study.py --sigma 0.05 0.1 0.2
"""
import argparse

import numpy as np

from borsem.signatures import DistanceWeights, classify, jittered, reference_library


def accuracy(lib, body, m, sigma, weights, trials, seed):
    rng = np.random.default_rng(seed)
    hits = sum(classify(jittered(lib.get(body, m), sigma, rng), lib, weights)[0][0] == body for _ in range(trials))
    return hits / trials


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sigma", type=float, nargs="+", default=[0.05, 0.1, 0.15])
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--seed", type=int, default=12345)
    args = ap.parse_args()

    lib = reference_library()
    full = DistanceWeights()
    variants = {"full": full, "no Im 1-2": full.without_ranks([0, 1]), "no Im 3-4": full.without_ranks([2, 3])}
    for sigma in args.sigma:
        print(f"sigma = {sigma}")
        print(f"  {'body':16s}{'m':>4s}" + "".join(f"{k:>12s}" for k in variants))
        for e in lib.entries:
            accs = [accuracy(lib, e.body_label, e.m, sigma, w, args.trials, args.seed) for w in variants.values()]
            print(f"  {e.body_label:16s}{e.m!s:>4s}" + "".join(f"{a:12.1%}" for a in accs))


if __name__ == "__main__":
    main()
