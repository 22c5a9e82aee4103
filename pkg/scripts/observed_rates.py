"""Observed convergence orders from CSV files written by ``nonauto run``.

    python3 scripts/observed_rates.py results/*.csv
"""
import argparse
import csv
import sys

import numpy as np

from nonauto.analysis import observed_orders


def rates(path, column):
    with open(path, encoding="utf-8") as fh:
        rows = [r for r in csv.DictReader(line for line in fh if not line.startswith("#"))]
    out = {}
    for kind in dict.fromkeys(r["kind"] for r in rows):
        sel = [r for r in rows if r["kind"] == kind]
        errs = [float(r[column]) for r in sel]
        meshes = [float(r["mesh"]) for r in sel]
        out[kind] = (meshes, errs, observed_orders(errs, meshes))
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("csv", nargs="+")
    ap.add_argument("--column", default="mrVVdual_error")
    args = ap.parse_args(argv)
    for path in args.csv:
        for kind, (h, e, p) in rates(path, args.column).items():
            print(f"{path} [{kind}] {args.column}")
            for i, (hi, ei) in enumerate(zip(h, e)):
                order = f"{p[i - 1]:7.3f}" if i else "      -"
                print(f"  h={hi:.5f}  err={ei:.4e}  order={order}")
            tail = p[-3:] if len(p) else np.array([])
            if tail.size and np.all(np.isfinite(tail)):
                print(f"  mean of last {tail.size} orders: {tail.mean():.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
