"""Compare eta = cos^2(pi/2n) with the hull inradius and the midpoint gauge."""
import argparse

import numpy as np
from scipy.spatial import ConvexHull

from werner_lhv.bloch import build_polyhedron, verify_shrinking


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-max", type=int, default=12)
    ap.add_argument("--samples", type=int, default=100)
    args = ap.parse_args()
    print(f"{'n':>3} {'m':>4} {'eta':>10} {'inradius':>10} {'midpoint':>10} {'violation':>10}")
    for n in range(2, args.n_max + 1):
        poly = build_polyhedron(n)
        hull = ConvexHull(poly.signed_vertices())
        inradius = float(np.min(-hull.equations[:, 3]))
        r = verify_shrinking(poly, args.samples, seed=n)
        print(f"{n:>3} {poly.m:>4} {r['eta']:>10.6f} {inradius:>10.6f} "
              f"{r['midpoint_scale']:>10.6f} {r['max_violation']:>10.1e}")


if __name__ == "__main__":
    main()
