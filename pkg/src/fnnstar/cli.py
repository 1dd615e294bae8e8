"""Command-line interface: ``fnnstar <subcommand> ...``.

Machine-readable JSON (or CSV) goes to ``--output``, to
``$FNNSTAR_OUTPUT_DIR/<subcommand>.<ext>`` when that variable is set, or to
stdout; the human-readable summary goes to stderr. Exit codes: 0 success or
violation found, 3 ran fine but no violation / not FNN, 1 error.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import math
import os
import sys
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from . import analysis, dist, inflation, lpsolve, qsim, stats, witness

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_VIOLATION = 3
OUTPUT_ENV = "FNNSTAR_OUTPUT_DIR"

CONVENTIONS = (
    "Conventions: angles are in radians; a branch outcome a in {0,1} is the eigenvalue (-1)^a "
    "of the measured observable; the central outcome b=0 is a successful GHZ projection "
    "(b=1 its complement). Exit codes: 0 success/violation, 3 no violation, 1 error."
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- output

def num(x):
    """12 significant digits for floats, ``p/q`` for exact rationals."""
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if not math.isfinite(x) else float(f"{x:.12g}") + 0.0  # + 0.0 drops the sign of zero
    if isinstance(x, dict):
        return {k: num(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [num(v) for v in x]
    return x


def _dumps(payload) -> str:
    return json.dumps(num(payload), sort_keys=True, indent=2) + "\n"


def _resolve_output(args, ext: str) -> Path | None:
    if getattr(args, "output", None):
        path = Path(args.output)
        if not path.is_absolute() and os.environ.get(OUTPUT_ENV):
            path = Path(os.environ[OUTPUT_ENV]) / path
        return path
    if os.environ.get(OUTPUT_ENV):
        return Path(os.environ[OUTPUT_ENV]) / f"{args.command}.{ext}"
    return None


def _emit(args, text: str, ext: str = "json") -> None:
    path = _resolve_output(args, ext)
    if path is None:
        sys.stdout.write(text)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    _say(f"wrote {path}")


def _say(msg: str = "") -> None:
    print(msg, file=sys.stderr)


def _artifact_dir(args) -> Path:
    base = Path(getattr(args, "artifact_dir", None) or os.environ.get(OUTPUT_ENV) or ".")
    base.mkdir(parents=True, exist_ok=True)
    return base


# ---------------------------------------------------------- shared flags

def _add_output(p):
    p.add_argument("-o", "--output", help="output file (relative paths go under $%s if set)" % OUTPUT_ENV)


def _add_strategy(p, required=False):
    g = p.add_argument_group("star strategy (radians)")
    g.add_argument("--theta0", type=float, default=None if required else -1.865,
                   required=required, help="polar angle of measurement 0 [rad] (default -1.865)")
    g.add_argument("--theta1", type=float, default=None if required else -0.415,
                   required=required, help="polar angle of measurement 1 [rad] (default -0.415)")
    g.add_argument("--phi0", type=float, default=0.0, help="azimuth of measurement 0 [rad]")
    g.add_argument("--phi1", type=float, default=0.0, help="azimuth of measurement 1 [rad]")
    g.add_argument("--visibility", type=float, nargs="+", default=[1.0], metavar="V",
                   help="source visibility in [0, 1]; one value or one per source")


def _strategy(args) -> qsim.StarStrategy:
    v = args.visibility
    if len(v) not in (1, 3):
        raise UsageError("--visibility takes one value or three")
    return qsim.StarStrategy(args.theta0, args.theta1, args.phi0, args.phi1, v[0] if len(v) == 1 else tuple(v))


def _add_target(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--ideal", action="store_true", help="simulate the star from the strategy flags")
    src.add_argument("--distribution", help="distribution JSON (as written by simulate-star)")
    _add_strategy(p)


def _target(args) -> dist.ConditionalDistribution:
    if args.distribution:
        return dist.loads(Path(args.distribution).read_text())
    return qsim.simulate_star(_strategy(args))


def _subparser(sub, name, help_text, description):
    return sub.add_parser(name, help=help_text, description=f"{description} {CONVENTIONS}",
                          formatter_class=argparse.ArgumentDefaultsHelpFormatter)


# ------------------------------------------------------------ commands

def cmd_simulate_star(args) -> int:
    d = qsim.simulate_star(_strategy(args), method=args.method)
    _emit(args, dist.dumps(d) + "\n")
    pb = dist.marginal(d, ["B"]).table[0]
    _say(f"p(b=0) = {pb[0]:.12g}")
    for i in (1, 2, 3):
        _say(f"I{i} = {witness.evaluate(witness.builtin_fnn_star(i), d).value:.12g}")
    return EXIT_OK


def cmd_simulate_bilocal(args) -> int:
    d = qsim.simulate_bilocal()
    _emit(args, dist.dumps(d) + "\n")
    for k in ("C-NS", "NS-C"):
        _say(f"R_{k} = {witness.evaluate(witness.builtin_fnn_bilocal(k), d).value:.12g}")
    return EXIT_OK


def _write_certificate(args, k: int, cert: lpsolve.FarkasCertificate) -> str:
    path = _artifact_dir(args) / f"certificate_{k}.json"
    path.write_text(cert.to_json() + "\n")
    return str(path)


def cmd_certify(args) -> int:
    d = _target(args)
    report = inflation.certify_fnn(d, method=args.method, denominator_bound=args.denominator_bound)
    placements = []
    for pr in report.placements:
        entry = {"classical_source": pr.classical_source, "feasible": pr.feasible,
                 "method": pr.result.method}
        if pr.certificate is not None:
            entry["certificate_nonzeros"] = sum(1 for v in pr.certificate.y_eq + pr.certificate.y_ineq if v)
            if args.save_certificates:
                entry["certificate"] = _write_certificate(args, pr.classical_source, pr.certificate)
        if args.export_lp:
            path = _artifact_dir(args) / f"inflation_{pr.classical_source}.lp"
            with open(path, "w") as fh:
                lpsolve.write_lp(pr.problem.system, fh)
            entry["lp"] = str(path)
        placements.append(entry)
        _say(f"placement {pr.classical_source}: {'feasible' if pr.feasible else 'infeasible (certificate verified)'}")
    _emit(args, _dumps({"fnn": report.fnn, "denominator_bound": args.denominator_bound,
                        "placements": placements}))
    _say(f"FNN: {str(report.fnn).lower()}")
    return EXIT_OK if report.fnn else EXIT_NO_VIOLATION


def cmd_extract_witness(args) -> int:
    d = _target(args)
    out = []
    violated_all = True
    for k in args.placement or (1, 2, 3):
        prob = inflation.inflation_problem(d, k, args.denominator_bound)
        res = inflation.solve_placement(prob, method=args.method)
        if res.feasible:
            _say(f"placement {k}: feasible, no witness")
            out.append({"classical_source": k, "feasible": True})
            violated_all = False
            continue
        w = witness.from_certificate(res.certificate, prob)
        value = w.evaluate(d)
        path = _artifact_dir(args) / f"witness_{k}.json"
        path.write_text(w.to_json() + "\n")
        poly_path = _artifact_dir(args) / f"witness_{k}_correlators.json"
        poly_path.write_text(w.to_polynomial().canonical().to_json() + "\n")
        out.append({"classical_source": k, "feasible": False, "value_on_target": value,
                    "witness": str(path), "correlator_form": str(poly_path)})
        _say(f"placement {k}: witness value on target {value:.12g} (> 0 means violated)")
        violated_all &= value > 0
    _emit(args, _dumps({"witnesses": out}))
    return EXIT_OK if violated_all else EXIT_NO_VIOLATION


def _load_witness(spec: str):
    path = Path(spec)
    if not path.exists():
        return witness.builtin(spec)
    data = json.loads(path.read_text())
    if "coefficients" in data:
        return witness.ProbabilityWitness.from_dict(data)
    return witness.CorrelatorPolynomial.from_dict(data)


def cmd_evaluate(args) -> int:
    w = _load_witness(args.witness)
    d = dist.loads(Path(args.distribution).read_text())
    if isinstance(w, witness.ProbabilityWitness):
        value, bound, rows = w.evaluate(d), float(w.bound), []
    else:
        ev = witness.evaluate(w, d)
        value, bound = ev.value, ev.bound
        rows = [{"coeff": t.coeff if isinstance(t.coeff, Fraction) else float(t.coeff),
                 "monomial": "".join(str(s) for s in t.monomial),
                 "factors": list(t.factors), "contribution": t.contribution} for t in ev.terms]
        _say(f"{'coeff':>10}  {'monomial':<40} {'contribution':>14}")
        for r in rows:
            _say(f"{str(num(r['coeff'])):>10}  {r['monomial']:<40} {r['contribution'] + 0.0:>14.12g}")
    violated = value > bound
    _emit(args, _dumps({"witness": args.witness, "value": value, "bound": bound,
                        "violated": violated, "terms": rows}))
    _say(f"value = {value:.12g} (bound {bound:.12g}): {'violated' if violated else 'not violated'}")
    return EXIT_OK if violated else EXIT_NO_VIOLATION


def _checksums(paths) -> dict:
    return {Path(p).name: stats.sha256(p) for p in paths}


def _result_rows(results: dict) -> list:
    return [{"witness": k, "value": r.value, "sigma": r.sigma, "p_value": r.p_value, "method": r.method}
            for k, r in results.items()]


def cmd_ingest_star(args) -> int:
    paths = args.files or stats.fixture_paths("star")
    counts = stats.parse_counts(paths, "star-b0", allow_missing=args.allow_missing)
    rec = stats.ProjectionRecord.parse(args.projection)
    pb = stats.estimate_p_b0(rec)
    results = stats.measure(counts, rec, args.resamples, args.seed)
    payload = {"p_b0": {"value": pb.value, "sigma": pb.sigma}, "results": _result_rows(results),
               "inputs": {"checksums": _checksums(paths), "projection": args.projection}}
    _emit(args, _dumps(payload))
    _say(f"p(b=0) = {pb.value:.4f} +- {pb.sigma:.4f}")
    for k, r in results.items():
        _say(f"{k} = {r.value:.4f} +- {r.sigma:.4f}  ({r.value / r.sigma:.1f} sigma, p = {r.p_value:.3g})")
    return EXIT_OK if all(r.value > 0 for r in results.values()) else EXIT_NO_VIOLATION


def cmd_ingest_bilocal(args) -> int:
    paths = args.files or stats.fixture_paths("bilocal")
    counts = stats.parse_counts(paths, "bilocal", allow_missing=args.allow_missing)
    results = stats.measure(counts, None, args.resamples, args.seed)
    payload = {"results": _result_rows(results), "b2_doubled": True,
               "inputs": {"checksums": _checksums(paths)}}
    _emit(args, _dumps(payload))
    _say("b = 2 counts doubled before normalization")
    for k, r in results.items():
        _say(f"{k} = {r.value:.4f} +- {r.sigma:.4f}  ({(r.value - 3) / r.sigma:.1f} sigma above 3)")
    return EXIT_OK if all(r.value > 3 for r in results.values()) else EXIT_NO_VIOLATION


def cmd_sweep(args) -> int:
    if args.mode == "visibility":
        vs = np.linspace(args.v_min, args.v_max, args.points)
        res = analysis.visibility_sweep(args.theta0, args.theta1, vs, args.phi0, args.phi1,
                                        backend=args.backend, witness=args.witness)
    else:
        axis = np.linspace(-math.pi, math.pi, args.points)
        res = analysis.angle_sweep(axis, axis, args.visibility[0], args.phi0, args.phi1, args.witness)
    buf = io.StringIO()
    res.to_csv(buf)
    _emit(args, buf.getvalue(), ext="csv")
    _say(f"{len(res.rows)} rows; best {res.optimum}")
    return EXIT_OK


def cmd_optimize(args) -> int:
    res = analysis.optimize_angles(args.resolution, args.tol, args.allow_phi, args.witness,
                                   args.phi_resolution)
    b = res.best
    backend = "simulation" if args.allow_phi or args.witness != 1 else "closed_form"
    try:
        vcrit = analysis.critical_visibility(b.theta0, b.theta1, b.phi0, b.phi1, backend, witness=args.witness)
    except analysis.NoViolationError:
        vcrit = None
    payload = {"best": vars(b), "optima": [vars(o) for o in res.optima], "grid_best": res.grid_best,
               "v_crit": vcrit, "resolution": args.resolution, "allow_phi": args.allow_phi}
    _emit(args, _dumps(payload))
    _say(f"best value {b.value:.12g} at theta=({b.theta0:.6f}, {b.theta1:.6f}) phi=({b.phi0:.6f}, {b.phi1:.6f}); "
         f"{len(res.optima)} equivalent optima; v_crit = {vcrit}")
    return EXIT_OK if b.value > 0 else EXIT_NO_VIOLATION


def cmd_mutual_info(args) -> int:
    d = _target(args)
    names = [p.name for p in d.scenario.parties if p.outputs == 2 and p.name != "B"]
    rows = []
    for i, pi in enumerate(names):
        for pj in names[i + 1:]:
            for xi in range(d.scenario[pi].inputs):
                for xj in range(d.scenario[pj].inputs):
                    mi = dist.mutual_information(d, pi, pj, xi, xj, base=args.base)
                    rows.append({"party_i": pi, "party_j": pj, "input_i": xi, "input_j": xj, "mi": mi})
                    _say(f"I({pi}_{xi}; {pj}_{xj}) = {mi:.3e}")
    _emit(args, _dumps({"base": args.base, "pairs": rows}))
    return EXIT_OK


# --------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fnnstar", description="Full network nonlocality tools for the star and "
                     "bilocal networks. " + CONVENTIONS)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = _subparser(sub, "simulate-star", "Born-rule distribution of the star network",
                   "Simulate p(a1,a2,a3,b|x1,x2,x3) with three noisy phi+ sources and a GHZ measurement.")
    _add_strategy(p)
    p.add_argument("--method", choices=("born", "steering"), default="born")
    _add_output(p)
    p.set_defaults(func=cmd_simulate_star)

    p = _subparser(sub, "simulate-bilocal", "Born-rule distribution of the bilocal network",
                   "Simulate p(a,b,c|x,z) with two singlets and a partial Bell-state measurement "
                   "(b=0: phi+, b=1: phi-, b=2: unresolved).")
    _add_output(p)
    p.set_defaults(func=cmd_simulate_bilocal)

    for name, func, desc in (
            ("certify", cmd_certify, "Solve the hybrid inflation LP for every classical-source placement; "
             "FNN when all three are infeasible."),
            ("extract-witness", cmd_extract_witness, "Turn each placement's Farkas certificate into a "
             "witness (violated when its value is > 0); writes witness_<k>.json files.")):
        p = _subparser(sub, name, desc.split(";")[0], desc)
        _add_target(p)
        p.add_argument("--denominator-bound", type=int, default=inflation.DEFAULT_DENOMINATOR,
                       help="largest denominator when rationalizing correlators")
        p.add_argument("--method", choices=("auto", "exact", "float"), default="auto",
                       help="LP route; float answers are always re-verified exactly")
        p.add_argument("--artifact-dir", help="directory for certificates/witnesses (default $%s or .)" % OUTPUT_ENV)
        if name == "certify":
            p.add_argument("--save-certificates", action="store_true", help="write certificate_<k>.json")
            p.add_argument("--export-lp", action="store_true", help="write inflation_<k>.lp (exact p/q coefficients)")
        else:
            p.add_argument("--placement", type=int, nargs="+", choices=(1, 2, 3), help="placements to extract")
        _add_output(p)
        p.set_defaults(func=func)

    p = _subparser(sub, "evaluate", "Evaluate a witness on a distribution",
                   "Evaluate a built-in witness (I1, I2, I3, R_C-NS, R_NS-C) or a witness JSON file "
                   "on a distribution JSON; prints the per-term breakdown.")
    p.add_argument("--witness", required=True, help="built-in name or witness JSON path")
    p.add_argument("--distribution", required=True, help="distribution JSON path")
    _add_output(p)
    p.set_defaults(func=cmd_evaluate)

    for name, func, desc in (
            ("ingest-star", cmd_ingest_star, "Estimate I1, I2, I3 from GHZ-conditioned count tables "
             "(header x1,x2,x3,a1,a2,a3,count) and the projection record."),
            ("ingest-bilocal", cmd_ingest_bilocal, "Estimate R_C-NS and R_NS-C from bilocal count tables "
             "(header x,z,a,b,c,count); b=2 counts are doubled.")):
        p = _subparser(sub, name, desc.split(" from")[0], desc)
        p.add_argument("files", nargs="*", help="count CSV files (default: the shipped fixtures)")
        if name == "ingest-star":
            p.add_argument("--projection", default="2019/15562",
                           help="GHZ events / successful runs, e.g. 2019/15562")
        p.add_argument("--resamples", type=int, default=stats.DEFAULT_RESAMPLES, help="bootstrap resamples")
        p.add_argument("--seed", type=int, default=0, help="bootstrap seed")
        p.add_argument("--allow-missing", action="store_true", help="treat missing rows as zero counts")
        _add_output(p)
        p.set_defaults(func=func)

    p = _subparser(sub, "sweep", "Witness value over visibilities or angles (CSV)",
                   "Emit CSV rows theta0,theta1,phi0,phi1,v,value for plotting.")
    p.add_argument("--mode", choices=("visibility", "angles"), default="visibility")
    _add_strategy(p)
    p.add_argument("--v-min", type=float, default=0.0)
    p.add_argument("--v-max", type=float, default=1.0)
    p.add_argument("--points", type=int, default=101, help="grid points (per axis in angle mode)")
    p.add_argument("--backend", choices=("closed_form", "simulation"), default="closed_form")
    p.add_argument("--witness", type=int, choices=(1, 2, 3), default=1)
    _add_output(p)
    p.set_defaults(func=cmd_sweep)

    p = _subparser(sub, "optimize", "Optimize the measurement angles",
                   "Grid search over [-pi, pi] plus coordinate-descent refinement at v=1.")
    p.add_argument("--resolution", type=float, default=0.02, help="theta grid step [rad]")
    p.add_argument("--phi-resolution", type=float, default=math.pi / 8, help="grid step with --allow-phi [rad]")
    p.add_argument("--tol", type=float, default=1e-8, help="refinement step tolerance [rad]")
    p.add_argument("--allow-phi", action="store_true", help="also optimize the azimuths")
    p.add_argument("--witness", type=int, choices=(1, 2, 3), default=1)
    _add_output(p)
    p.set_defaults(func=cmd_optimize)

    p = _subparser(sub, "mutual-info", "Pairwise mutual information between branch parties",
                   "Mutual information H(Ai)+H(Aj)-H(Ai,Aj) of every branch pair and input pair.")
    _add_target(p)
    p.add_argument("--base", type=float, default=2.0, help="logarithm base (2 gives bits)")
    _add_output(p)
    p.set_defaults(func=cmd_mutual_info)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        _say(str(exc))
        return EXIT_ERROR
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        _say(f"usage error: {exc}")
    except (ValueError, OSError, lpsolve.SolverError, KeyError) as exc:
        _say(f"error: {exc}")
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
