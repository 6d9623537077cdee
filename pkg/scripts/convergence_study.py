#!/usr/bin/env python3
"""Track shortest-walk distances between all boundary pairs over levels.

Writes one CSV per builtin family with columns (pair, level, value, gap) and
prints the final estimates.  Usage:

    python scripts/convergence_study.py --nmax 8 --out results/
"""

import argparse
import itertools
import os

from fractaldist.harmonic import HarmonicStructure
from fractaldist.measures import default_tuple
from fractaldist.metrics import MetricContext, geodesic_converge
from fractaldist.structure import VertexRef, generate_spec

FAMILIES = [("gasket", 2), ("gasket", 3), ("polygasket", 6), ("polygasket", 9)]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--nmax", type=int, default=7)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    for kind, param in FAMILIES:
        spec = generate_spec(kind, param)
        hs = HarmonicStructure.build(spec)
        ctx = MetricContext(hs, default_tuple(hs))
        rows = ["pair,level,value,gap"]
        for a, b in itertools.combinations(range(3), 2):
            hist = geodesic_converge(ctx, VertexRef((), a), VertexRef((), b),
                                     args.nmax)
            prev = None
            for n, v in hist.entries:
                gap = "" if prev is None else f"{v - prev:.17g}"
                rows.append(f"{a}-{b},{n},{v:.17g},{gap}")
                prev = v
            print(f"{spec.name} {a}-{b}: {hist.estimate:.12f} "
                  f"(last gap {hist.last_gap:.2e})")
        ctx.evict()
        path = os.path.join(args.out, f"convergence_{spec.name.replace(':', '_')}.csv")
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(rows) + "\n")
        print(f"  -> {path}")


if __name__ == "__main__":
    main()
