"""Decompose random extremal POVMs over a range of noise levels and tabulate success."""
import argparse

import numpy as np

from werner_lhv import povm


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outcomes", type=int, choices=(3, 4), default=4)
    ap.add_argument("--count", type=int, default=100)
    ap.add_argument("--mu", type=float, nargs="+", default=[0.6, 0.7, 0.8, 0.81, 0.85, 0.9])
    args = ap.parse_args()
    print(f"{'mu':>6} {'complete':>9} {'max steps':>10} {'max error':>10}")
    for mu in args.mu:
        done, steps, err = 0, 0, 0.0
        for seed in range(args.count):
            p = povm.random_extremal_povm(seed, args.outcomes)
            dec = povm.decompose(p, mu)
            done += dec.complete
            steps = max(steps, dec.steps)
            err = max(err, povm.reconstruction_error(p, dec))
        print(f"{mu:>6.3f} {done:>5}/{args.count:<3} {steps:>10} {err:>10.1e}")


if __name__ == "__main__":
    main()
