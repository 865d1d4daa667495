"""Tabulate the certified attraction threshold alpha*(n, beta) over a beta range.

    python3 scripts/threshold_map.py --n 2 --beta-min 3.2 --beta-max 20 --num 24 > thresholds.csv
"""
import argparse
import csv
import math
import sys

import numpy as np

from arcs.certifier import certify
from arcs.errors import BetaInfeasible


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2)
    ap.add_argument("--beta-min", type=float, default=None)
    ap.add_argument("--beta-max", type=float, default=20.0)
    ap.add_argument("--num", type=int, default=24)
    args = ap.parse_args(argv)

    n = args.n
    edge = n + math.sqrt(n / 2)
    lo = args.beta_min if args.beta_min is not None else edge * 1.01
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["n", "beta", "delta_star", "threshold_star"])
    for beta in np.geomspace(lo, args.beta_max, args.num):
        try:
            cert = certify(n, 1.0, float(beta))
        except BetaInfeasible:
            writer.writerow([n, f"{beta:.10g}", "", "inf"])
            continue
        writer.writerow([n, f"{beta:.10g}", f"{cert.delta_star:.10g}",
                         f"{cert.threshold_star:.10g}"])


if __name__ == "__main__":
    main()
