"""Gilbert run, certificate and verification for one (n, v0), resumable.

Defaults are the desk-scale setting n=9 (m=81), v0=3/5, eps=1e-5, which
takes 3 to 20 minutes on one core depending on the seed.  Re-running with
the same --workdir resumes from the last checkpoint.
"""
import argparse
import logging
import time
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path

from werner_lhv import bloch, certify, gilbert
from werner_lhv.intervals import parse_fraction


@dataclass
class ScaledRunConfig:
    n: int = 9
    v0: Fraction = Fraction(3, 5)
    nu: Fraction = Fraction(999, 1000)
    eps: float = 1e-5
    max_iters: int = 10**7
    seed: int = 0
    restarts: int = 100
    k: int = 16
    workdir: Path = Path("scaled_run")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    d = ScaledRunConfig()
    ap.add_argument("--n", type=int, default=d.n)
    ap.add_argument("--v0", type=parse_fraction, default=d.v0)
    ap.add_argument("--nu", type=parse_fraction, default=d.nu)
    ap.add_argument("--eps", type=float, default=d.eps)
    ap.add_argument("--max-iters", type=int, default=d.max_iters)
    ap.add_argument("--seed", type=int, default=d.seed)
    ap.add_argument("--restarts", type=int, default=d.restarts)
    ap.add_argument("--k", type=int, default=d.k)
    ap.add_argument("--workdir", type=Path, default=d.workdir)
    cfg = ScaledRunConfig(**vars(ap.parse_args()))
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    print({k: str(v) for k, v in asdict(cfg).items()})

    cfg.workdir.mkdir(parents=True, exist_ok=True)
    ckpt = cfg.workdir / "run.ckpt"
    if ckpt.exists():
        state = gilbert.resume(ckpt)
        print(f"resumed at iteration {state.iteration}")
    else:
        target = bloch.werner_target(bloch.build_polyhedron(cfg.n), float(cfg.v0))
        state = gilbert.init(target, cfg.seed)
        state.meta.update(n=cfg.n, v0=[cfg.v0.numerator, cfg.v0.denominator])
    t0 = time.perf_counter()
    gilbert.run(state, gilbert.Oracle("heuristic", cfg.restarts), cfg.eps, cfg.max_iters,
                path=ckpt, log_every=10_000)
    print(f"iteration {state.iteration} distance {state.distance:.4e} "
          f"size {state.size} ({time.perf_counter() - t0:.0f}s)")
    gilbert.write_decomposition(state, cfg.workdir / "decomposition.json")

    cert = certify.certify(cfg.n, cfg.v0, cfg.nu, state.decomposition, cfg.k)
    path = cfg.workdir / "certificate.json"
    certify.write_certificate(cert, path)
    print(f"residual  {cert.residual_bound}")
    print(f"v_bound   {cert.v_bound}")
    print(f"kg3_bound {cert.kg3_bound}")
    print(f"verdict   {cert.verdict}")
    print(f"verified  {certify.verify_certificate(path)}")


if __name__ == "__main__":
    main()
