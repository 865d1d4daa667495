"""Spatial convergence on the analytic decay solution over a longer ladder.

    python3 scripts/convergence_study.py --cells 16,32,64,128,256 --t-end 0.05
"""
import argparse
import math

from arcs.solver import decay_study


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cells", default="16,32,64,128,256")
    ap.add_argument("--t-end", type=float, default=0.05)
    args = ap.parse_args(argv)

    rows = decay_study([int(c) for c in args.cells.split(",")], t_end=args.t_end)
    print("cells,h,dt,error,order")
    prev = None
    for row in rows:
        order = ""
        if prev is not None:
            order = f"{math.log(prev['error'] / row['error']) / math.log(prev['h'] / row['h']):.4f}"
        print(f"{row['cells']},{row['h']:.6e},{row['dt']:.6e},{row['error']:.6e},{order}")
        prev = row


if __name__ == "__main__":
    main()
