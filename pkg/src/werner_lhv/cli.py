"""``werner-lhv`` command line.

Exit codes: 0 success, 1 usage or parse error, 2 iteration budget exhausted,
3 incomplete POVM decomposition, 4 certification or verification failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from fractions import Fraction

from . import bloch, certify, gilbert, povm
from .errors import (CheckpointError, DecompositionFileError, DegenerateDecomposition,
                     InvalidParameter, PrecisionInsufficient)
from .intervals import decimal_down, decimal_up, parse_fraction
from .polytope import DEFAULT_RESTARTS

EXIT_OK, EXIT_USAGE, EXIT_BUDGET, EXIT_INCOMPLETE, EXIT_CERT = 0, 1, 2, 3, 4

log = logging.getLogger("werner_lhv")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Everything a command needs; printed as a header so runs can be repeated."""

    command: str
    n: int | None = None
    v0: Fraction | None = None
    nu: Fraction = certify.DEFAULT_NU
    eps: float = 1e-5
    max_iters: int = 10**7
    seed: int = 0
    restarts: int = DEFAULT_RESTARTS
    oracle: str = "heuristic"
    k: int = certify.DEFAULT_K
    precision_bits: int = field(default_factory=certify.default_precision_bits)
    checkpoint_every: int = gilbert.DEFAULT_CHECKPOINT_EVERY
    log_every: int = 10_000
    paths: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.v0 is not None and not 0 <= self.v0 <= 1:
            raise UsageError(f"v0 must satisfy 0 <= v0 <= 1, got {self.v0}")
        if not 0 < self.nu < 1:
            raise UsageError(f"nu must satisfy 0 < nu < 1, got {self.nu}")
        if self.n is not None and self.n < 2:
            raise UsageError(f"n must be >= 2, got {self.n}")

    def header(self) -> str:
        d = asdict(self)
        for key in ("v0", "nu"):
            if d[key] is not None:
                d[key] = f"{d[key].numerator}/{d[key].denominator}"
        return "# config " + json.dumps(d, sort_keys=True)


def _rational(text: str) -> Fraction:
    try:
        return parse_fraction(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(x) -> str:
    return f"[{decimal_down(x.lo, 20)}, {decimal_up(x.hi, 20)}]"


def _config(args, **extra) -> RunConfig:
    known = {f for f in RunConfig.__dataclass_fields__}
    kw = {k: v for k, v in vars(args).items() if k in known and v is not None}
    kw.update(extra)
    cfg = RunConfig(**kw)
    print(cfg.header(), flush=True)
    return cfg


# --- commands -------------------------------------------------------------

def cmd_polyhedron(args) -> int:
    cfg = _config(args, command="polyhedron", paths={"out": args.out})
    poly = bloch.build_polyhedron(cfg.n)
    bloch.write_polyhedron(poly, args.out)
    print(f"n={poly.n} m={poly.m} eta={poly.eta_expression} in {_fmt(poly.eta)}")
    return EXIT_OK


def cmd_target(args) -> int:
    cfg = _config(args, command="target", paths={"out": args.out})
    q = bloch.werner_target(bloch.build_polyhedron(cfg.n), float(cfg.v0))
    bloch.write_correlation_csv(q, args.out)
    print(f"wrote {q.shape[0]}x{q.shape[0]} target to {args.out}")
    return EXIT_OK


def _finish_run(state, cfg, out) -> int:
    if out:
        gilbert.write_decomposition(state, out)
    print(f"iteration {state.iteration} distance {state.distance:.6e} size {state.size}")
    return EXIT_OK if state.distance <= cfg.eps else EXIT_BUDGET


def cmd_run(args) -> int:
    paths = {"target": args.target, "checkpoint": args.checkpoint, "out": args.out}
    cfg = _config(args, command="run", paths=paths)
    if args.target:
        q = bloch.read_correlation_csv(args.target)
    elif cfg.n is not None and cfg.v0 is not None:
        q = bloch.werner_target(bloch.build_polyhedron(cfg.n), float(cfg.v0))
    else:
        raise UsageError("give --target, or both --n and --v0")
    state = gilbert.init(q, cfg.seed)
    if cfg.n is not None and cfg.v0 is not None:
        state.meta.update(n=cfg.n, v0=[cfg.v0.numerator, cfg.v0.denominator])
    log.info("oracle seeds are drawn from default_rng(%d)", cfg.seed)
    oracle = gilbert.Oracle(cfg.oracle, cfg.restarts)
    gilbert.run(state, oracle, cfg.eps, cfg.max_iters, cfg.checkpoint_every,
                args.checkpoint, cfg.log_every)
    return _finish_run(state, cfg, args.out)


def cmd_resume(args) -> int:
    state = gilbert.resume(args.checkpoint)
    oc = state.meta.get("oracle", {})
    v0 = state.meta.get("v0")
    cfg = _config(args, command="resume", n=state.meta.get("n"),
                  v0=None if v0 is None else Fraction(*v0), seed=state.meta.get("seed", 0),
                  oracle=oc.get("kind", "heuristic"),
                  restarts=oc.get("restarts", DEFAULT_RESTARTS),
                  paths={"checkpoint": args.checkpoint, "out": args.out})
    log.info("resuming at iteration %d, distance %.6e", state.iteration, state.distance)
    oracle = gilbert.Oracle(cfg.oracle, cfg.restarts)
    gilbert.run(state, oracle, cfg.eps, cfg.max_iters, cfg.checkpoint_every,
                args.checkpoint, cfg.log_every)
    return _finish_run(state, cfg, args.out)


def cmd_certify(args) -> int:
    try:
        dec, header = gilbert.read_decomposition(args.decomposition)
    except DecompositionFileError as exc:
        print(f"decomposition rejected: {exc}", file=sys.stderr)
        return EXIT_CERT
    meta = header.get("meta", {})
    n = args.n if args.n is not None else meta.get("n")
    v0 = args.v0 if args.v0 is not None else (Fraction(*meta["v0"]) if "v0" in meta else None)
    if n is None or v0 is None:
        raise UsageError("n and v0 are not recorded in the decomposition; pass --n and --v0")
    cfg = _config(args, command="certify", n=n, v0=v0,
                  paths={"decomposition": args.decomposition, "out": args.out})
    try:
        cert = certify.certify(cfg.n, cfg.v0, cfg.nu, dec, cfg.k, cfg.precision_bits)
    except (PrecisionInsufficient, DegenerateDecomposition) as exc:
        print(f"certification failed: {exc}", file=sys.stderr)
        return EXIT_CERT
    if args.out:
        certify.write_certificate(cert, args.out)
    print(f"residual {_fmt(cert.residual_bound)}")
    print(f"v_bound {_fmt(cert.v_bound)}")
    print(f"kg3_bound {_fmt(cert.kg3_bound)}")
    print(f"verdict {cert.verdict}")
    return EXIT_OK if cert.verdict else EXIT_CERT


def cmd_verify(args) -> int:
    _config(args, command="verify", paths={"certificate": args.certificate})
    try:
        ok = certify.verify_certificate(args.certificate)
    except certify.CertificateFormatError as exc:
        print(f"certificate rejected: {exc}", file=sys.stderr)
        return EXIT_CERT
    print(f"verified {ok}")
    return EXIT_OK if ok else EXIT_CERT


def cmd_bound(args) -> int:
    cfg = _config(args, command="bound")
    _, v_bound, kg3 = certify.bound_intervals(cfg.n, cfg.v0, cfg.nu, cfg.precision_bits)
    print(f"v_bound {_fmt(v_bound)}")
    print(f"kg3_bound {_fmt(kg3)}")
    print(f"povm_bound {_fmt(povm.povm_visibility_bound(v_bound))}")
    return EXIT_OK


def cmd_povm(args) -> int:
    p, file_mu = povm.read_povm(args.povm)
    mu = args.mu if args.mu is not None else file_mu
    if mu is None:
        raise UsageError("no mu given on the command line or in the POVM file")
    _config(args, command="povm", paths={"povm": args.povm, "out": args.out})
    print(f"# mu {mu!r}")
    dec = povm.decompose(p, mu)
    if args.out:
        povm.write_decomposition(dec, args.out)
    print(f"items {len(dec.items)} steps {dec.steps}")
    print(f"residual_weight {dec.residual_weight:.3e}")
    print(f"reconstruction_error {povm.reconstruction_error(p, dec):.3e}")
    return EXIT_OK if dec.complete else EXIT_INCOMPLETE


# --- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="werner-lhv", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("polyhedron", help="write the measurement polyhedron for n")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", default="polyhedron.json")
    p.set_defaults(func=cmd_polyhedron)

    p = sub.add_parser("target", help="write the Werner correlation target as CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--v0", type=_rational, required=True)
    p.add_argument("--out", default="target.csv")
    p.set_defaults(func=cmd_target)

    def loop_flags(p):
        p.add_argument("--eps", type=float, default=1e-5)
        p.add_argument("--max-iters", type=int, default=10**7)
        p.add_argument("--checkpoint-every", type=int, default=gilbert.DEFAULT_CHECKPOINT_EVERY)
        p.add_argument("--log-every", type=int, default=10_000)
        p.add_argument("--out", default="decomposition.json")

    p = sub.add_parser("run", help="run the Gilbert iteration")
    p.add_argument("--n", type=int)
    p.add_argument("--v0", type=_rational)
    p.add_argument("--target", help="CSV target instead of --n/--v0")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS)
    p.add_argument("--oracle", choices=("heuristic", "exact"), default="heuristic")
    p.add_argument("--checkpoint", default=None)
    loop_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("resume", help="continue a run from its checkpoint")
    p.add_argument("--checkpoint", required=True)
    loop_flags(p)
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("certify", help="turn a decomposition into an exact certificate")
    p.add_argument("--decomposition", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--v0", type=_rational)
    p.add_argument("--nu", type=_rational, default=certify.DEFAULT_NU)
    p.add_argument("--k", type=int, default=certify.DEFAULT_K)
    p.add_argument("--precision-bits", type=int, default=None)
    p.add_argument("--out", default="certificate.json")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("verify", help="recheck a certificate file from scratch")
    p.add_argument("--certificate", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bound", help="print the visibility and K_G(3) bounds")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--v0", type=_rational, required=True)
    p.add_argument("--nu", type=_rational, default=certify.DEFAULT_NU)
    p.add_argument("--precision-bits", type=int, default=None)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("povm", help="decompose a noisy POVM into projective measurements")
    p.add_argument("--povm", required=True)
    p.add_argument("--mu", type=float)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_povm)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (UsageError, InvalidParameter, CheckpointError, ValueError, OSError) as exc:
        print(f"werner-lhv: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
