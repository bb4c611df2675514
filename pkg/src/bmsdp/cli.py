"""Command-line interface: ``bmsdp {solve,certify,diagnose,oracle,generate}``.

Exit codes: 0 certified (or gap-bounded within ``--gap-tol``), 2 ran but
inconclusive, 1 on errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .certification import Verdict, certify, check_nondegeneracy, face_dimension
from .errors import DependentConstraintsError, FormatError, InfeasibleError
from .fileformat import factor_to_json, load_factor, load_problem, problem_to_json
from .geometry import Factor
from .instances import (
    GRAPHS,
    graph_cost,
    hard_case_trs,
    local_min_trs,
    local_min_trs_point,
    random_geneig,
    random_symmetric,
    random_trs,
)
from .oracle import oracle_geneig, oracle_sdp_via_escalation, oracle_trs
from .rtr import SolverOptions, staircase
from .sdp_model import OrthoCut, Spheres, build_family, check_smoothness, feasible_point, pataki_bound

log = logging.getLogger("bmsdp")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_ERROR, EXIT_INCONCLUSIVE = 0, 1, 2
FAMILIES = ("maxcut", "orthocut", "geneig", "trs", "spheres")
TRS_CASES = ("random", "hard", "local-min")


@dataclass
class RunManifest:
    """Everything needed to rerun a command: with the input file it reproduces the report."""

    command: str
    input: str | None
    options: dict
    seed: int
    output: str | None
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


# ---------------------------------------------------------------------------
# Problem construction


def _data_rng(seed):
    return np.random.default_rng([seed, 101])


def problem_from_args(args):
    """(problem, default initial factor or None) from --input or --family flags."""
    if args.input:
        return load_problem(args.input), None
    if not args.family:
        raise FormatError("--input", "give a problem file or --family")
    needs_n = args.family != "spheres" and not (args.family == "trs" and args.trs_case == "local-min")
    if args.n is None and needs_n:
        raise FormatError("--n", f"--family {args.family} needs --n")
    rng = _data_rng(args.seed)
    fam = args.family
    if fam in ("maxcut", "orthocut"):
        d = 1 if fam == "maxcut" else args.d
        C = graph_cost(args.n, args.graph, rng)
        return build_family(OrthoCut(C=C, d=d)), None
    if fam == "geneig":
        return build_family(random_geneig(args.n, rng)), None
    if fam == "trs":
        if args.trs_case == "local-min":
            return build_family(local_min_trs()), local_min_trs_point()
        t = hard_case_trs(args.n, rng) if args.trs_case == "hard" else random_trs(args.n, rng)
        return build_family(t), None
    if fam == "spheres":
        if not args.sizes:
            raise FormatError("--sizes", "--family spheres needs --sizes")
        sizes = tuple(int(s) for s in args.sizes.split(","))
        n = sum(sizes) + (0 if args.homogeneous else 1)
        return build_family(Spheres(C=random_symmetric(n, rng), sizes=sizes,
                                    homogeneous=args.homogeneous)), None
    raise FormatError("--family", f"unknown family {fam!r}")


def family_params(args):
    if args.input:
        return {}
    keys = ("family", "n", "graph", "d", "trs_case", "sizes", "homogeneous")
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def options_from_args(args):
    sched = "auto"
    if getattr(args, "p", "auto") != "auto":
        sched = [int(args.p)]
    return SolverOptions(eps_g=args.eps_g, eps_H=args.eps_h, max_outer=args.max_iter,
                         seed=args.seed, p_schedule=sched, gap_tol=args.gap_tol)


def _emit(doc, output):
    text = json.dumps(doc, indent=1, sort_keys=True)
    if output:
        Path(output).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _exit_for(verdict):
    return EXIT_INCONCLUSIVE if verdict is Verdict.INCONCLUSIVE else EXIT_OK


def _manifest(args, opts=None):
    return RunManifest(command=args.command, input=args.input,
                       options=(opts or options_from_args(args)).to_dict(),
                       seed=args.seed, output=args.output, params=family_params(args))


def _face(problem, Y):
    try:
        return face_dimension(problem, Y).to_dict()
    except (ValueError, RuntimeError) as exc:
        return {"error": str(exc)}


# ---------------------------------------------------------------------------
# Commands


def cmd_solve(args) -> int:
    problem, Y0 = problem_from_args(args)
    opts = options_from_args(args)
    if args.init:
        Y0 = load_factor(args.init, problem.n)
    if Y0 is not None and opts.p_schedule != "auto":
        p = opts.p_schedule[0]
        if Y0.shape[1] > p:
            raise FormatError("--init", f"initial factor has p={Y0.shape[1]} > --p {p}")
        Y0 = np.hstack([Y0, np.zeros((Y0.shape[0], p - Y0.shape[1]))])
    f, rep = staircase(problem, opts, Y0=Y0)
    cert = rep.certificate
    doc = {
        "schema_version": SCHEMA_VERSION,
        "manifest": _manifest(args, opts).to_dict(),
        "verdict": cert.verdict.value,
        "solve_report": rep.to_dict(),
        "certificate": cert.to_dict(),
        "face": _face(problem, f.Y),
        "factor": factor_to_json(f.Y),
    }
    _emit(doc, args.output)
    return _exit_for(cert.verdict)


def cmd_certify(args) -> int:
    if not args.factor:
        raise FormatError("--factor", "certify needs --factor")
    problem, _ = problem_from_args(args)
    Y = load_factor(args.factor, problem.n)
    f = Factor(problem, Y)
    cert = certify(problem, f, tol_g=args.eps_g, tol_H=args.eps_h, gap_tol=args.gap_tol)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "manifest": _manifest(args).to_dict(),
        "verdict": cert.verdict.value,
        "certificate": cert.to_dict(),
        "face": _face(problem, Y),
        "residual": f.residual,
    }
    _emit(doc, args.output)
    return _exit_for(cert.verdict)


def cmd_diagnose(args) -> int:
    problem, Y0 = problem_from_args(args)
    p = problem.n if args.p == "auto" else int(args.p)
    points = None
    if args.point:
        Yp = load_factor(args.point, problem.n)
        points, p = [Yp], Yp.shape[1]
    rep = check_smoothness(problem, p, samples=args.samples, seed=args.seed, points=points)
    warnings = []
    if rep.m_prime < problem.m:
        warnings.append(f"m' = {rep.m_prime} < m = {problem.m}: constraints are redundant at sampled points")
    if not rep.constant_rank:
        warnings.append("constraint span rank varies across samples")
    Ys = points[0] if points else None
    try:
        if Ys is None:
            Ys = feasible_point(problem, p, np.random.default_rng([args.seed, 3]))
        nondeg = check_nondegeneracy(problem, Ys)
    except DependentConstraintsError as exc:
        nondeg = None
        warnings.append(str(exc))
    pstar = pataki_bound(rep.m_prime)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "manifest": _manifest(args).to_dict(),
        "n": problem.n,
        "m": problem.m,
        "m_prime": rep.m_prime,
        "constant_rank": rep.constant_rank,
        "sampled_ranks": rep.ranks,
        "pataki_bound": pstar,
        "recommended_p": min(pstar + 1, problem.n + 1),
        "nondegenerate": nondeg,
        "R": problem.R,
        "constant_trace": bool(problem.constant_trace),
        "identity_in_range": bool(problem.identity_in_range),
        "warnings": warnings,
    }
    for w in warnings:
        log.warning(w)
    _emit(doc, args.output)
    return EXIT_OK


def cmd_oracle(args) -> int:
    problem, _ = problem_from_args(args)
    tag = problem.family.tag if problem.family is not None else None
    Cd = problem.C.toarray()
    if tag == "geneig":
        res = oracle_geneig(Cd, problem.A[0].toarray())
    elif tag == "trs":
        res = oracle_trs(Cd[:-1, :-1], Cd[:-1, -1], Cd[-1, -1])
    else:
        res = oracle_sdp_via_escalation(problem, seed=args.seed)
    doc = {"schema_version": SCHEMA_VERSION, "manifest": _manifest(args).to_dict(), **res.to_dict()}
    _emit(doc, args.output)
    return EXIT_OK


def cmd_generate(args) -> int:
    problem, Y0 = problem_from_args(args)
    doc = problem_to_json(problem)
    _emit(doc, args.output)
    if Y0 is not None and args.point_output:
        Path(args.point_output).write_text(json.dumps(factor_to_json(Y0)) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def _positive_float(s):
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {s}")
    return v


def _rank(s):
    if s == "auto":
        return s
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or a positive integer, got {s!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"rank must be positive, got {v}")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_argument_group("problem")
    src.add_argument("--input", help="problem JSON file")
    src.add_argument("--family", choices=FAMILIES, help="build a seeded instance instead of reading a file")
    src.add_argument("--n", type=int, help="dimension for --family")
    src.add_argument("--graph", choices=GRAPHS, default="cycle", help="cost for maxcut/orthocut")
    src.add_argument("--d", type=int, default=2, help="block size for orthocut")
    src.add_argument("--trs-case", choices=TRS_CASES, default="random")
    src.add_argument("--sizes", help="comma-separated sphere sizes for spheres")
    src.add_argument("--homogeneous", action="store_true", help="spheres without the trailing 1")
    run = common.add_argument_group("run")
    run.add_argument("--p", type=_rank, default="auto", help="fixed rank, or 'auto' for the staircase")
    run.add_argument("--eps-g", type=_positive_float, default=None)
    run.add_argument("--eps-h", type=_positive_float, default=None)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--gap-tol", type=_positive_float, default=None)
    run.add_argument("--max-iter", type=int, default=10000)
    run.add_argument("--output", help="write the JSON report here instead of stdout")
    run.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="bmsdp", description="Low-rank SDP solving with certificates")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", parents=[common], help="solve and certify")
    s.add_argument("--init", help="initial factor JSON")
    s.set_defaults(func=cmd_solve)
    c = sub.add_parser("certify", parents=[common], help="certify a given factor")
    c.add_argument("--factor", help="factor JSON")
    c.set_defaults(func=cmd_certify)
    d = sub.add_parser("diagnose", parents=[common], help="constraint rank and rank recommendations")
    d.add_argument("--point", help="feasible factor JSON (required for generic problems)")
    d.add_argument("--samples", type=int, default=5)
    d.set_defaults(func=cmd_diagnose)
    o = sub.add_parser("oracle", parents=[common], help="reference optimal value")
    o.set_defaults(func=cmd_oracle)
    g = sub.add_parser("generate", parents=[common], help="write a built-in instance as a problem file")
    g.add_argument("--point-output", help="also write the family's suggested initial factor")
    g.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"error: malformed input at {exc}", file=sys.stderr)
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
