"""Print the certified visibility, K_G(3) and POVM bounds for a given run size."""
import argparse
from dataclasses import dataclass
from fractions import Fraction

from werner_lhv.certify import bound_intervals
from werner_lhv.intervals import decimal_down, decimal_up, parse_fraction
from werner_lhv.povm import povm_visibility_bound


@dataclass
class BoundConfig:
    n: int = 25
    v0: Fraction = Fraction(689, 1000)
    nu: Fraction = Fraction(999, 1000)
    bits: int = 256


def show(name, x):
    print(f"{name:>10} in [{decimal_down(x.lo, 18)}, {decimal_up(x.hi, 18)}]")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=BoundConfig.n)
    ap.add_argument("--v0", type=parse_fraction, default=BoundConfig.v0)
    ap.add_argument("--nu", type=parse_fraction, default=BoundConfig.nu)
    cfg = BoundConfig(**vars(ap.parse_args()))
    print(cfg)
    eta_sq, v, kg3 = bound_intervals(cfg.n, cfg.v0, cfg.nu, cfg.bits)
    show("eta^2", eta_sq)
    show("v_bound", v)
    show("kg3_bound", kg3)
    show("povm", povm_visibility_bound(v))


if __name__ == "__main__":
    main()
