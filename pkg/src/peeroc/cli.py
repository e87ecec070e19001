"""Command-line front end: ``peeroc {verify,stability,solve,converge,replay}``.

Exit codes: 0 ok, 1 verification failure, 2 solver failure, 3 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

from . import stability
from .analysis import verify_triplet
from .coefficients import BUILTIN_NAMES, load_triplet
from .harness import RunManifest, json_safe, run_convergence
from .kkt import DAMPING_MODES, INITIAL_GUESS_MODES, JACOBIAN_MODES, KktSolveError, preset_options, solve_kkt
from .problems import PROBLEMS, get_problem
from .svgplot import error_plot

EXIT_OK, EXIT_VERIFY, EXIT_SOLVER, EXIT_USAGE = 0, 1, 2, 3

log = logging.getLogger("peeroc")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _methods(sel: str) -> list[str]:
    names = list(BUILTIN_NAMES) if sel == "all" else [s for s in sel.split(",") if s]
    unknown = [n for n in names if n not in BUILTIN_NAMES]
    if unknown or not names:
        raise UsageError(f"unknown method(s) {unknown or sel!r}; choose from {', '.join(BUILTIN_NAMES)} or 'all'")
    return names


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _write_table(path: Path, rows: list[dict], fmt: str) -> Path:
    path = path.with_suffix("." + fmt)
    if fmt == "json":
        path.write_text(json.dumps(json_safe(rows), indent=2) + "\n")
    else:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: _cell(v) for k, v in r.items()})
    return path


def _cell(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return "" if v is None else v


# ---------------------------------------------------------------------------
# commands


def cmd_verify(args, out: Path, manifest: RunManifest) -> int:
    names = _methods(args.method)
    manifest.methods = names
    manifest.tolerances = {"condition_tol": args.tol}
    reports = [verify_triplet(load_triplet(n), tol=args.tol, samples=args.samples) for n in names]
    paths = [
        _write_table(out / "verify_standard", [r.standard_properties() for r in reports], args.format),
        _write_table(out / "verify_boundary", [r.boundary_properties() for r in reports], args.format),
    ]
    checklist = out / "verify_checklist.txt"
    checklist.write_text("".join(r.checklist() for r in reports))
    paths.append(checklist)
    manifest.outputs = [str(p) for p in paths]
    for r in reports:
        print(r.checklist(), end="")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VERIFY


def cmd_stability(args, out: Path, manifest: RunManifest) -> int:
    names = _methods(args.method)
    if args.locus and len(names) != 1:
        raise UsageError("--locus needs a single method")
    manifest.methods = names
    rows = []
    for name in names:
        t = load_triplet(name)
        f = t.floats
        zs = stability.zero_stability(f.A, f.B)
        ang = stability.stability_angle(f.A, f.B, f.K, args.samples)
        ind = stability.boundary_method_indicators(t)
        rows.append({"triplet": name, "alpha_deg": ang.alpha, "a_stable": ang.a_stable,
                     "lambda2": zs.lambda2, "norm_inf": zs.norm_inf, "mu0": ind.mu0, "muN": ind.muN})
        print(f"{name}: alpha = {ang.alpha:.2f}{' (A-stable, numerical evidence)' if ang.a_stable else ''}, "
              f"|lambda2| = {zs.lambda2:.3f}, ||A^-1 B||_inf = {zs.norm_inf:.3f}, "
              f"mu0 = {ind.mu0:.3f}, muN = {ind.muN:.3f}")
        if args.locus:
            stability.write_locus_csv(args.locus, stability.boundary_locus(f.A, f.B, f.K, args.samples))
            manifest.outputs.append(str(args.locus))
    manifest.outputs.append(str(_write_table(out / "stability", rows, args.format)))
    return EXIT_OK


def _newton(args, problem: str):
    over = {k: v for k, v in (("tolerance", args.tol), ("jacobian", args.jacobian),
                              ("damping", args.damping), ("initial_guess", args.guess),
                              ("max_iter", args.max_iter)) if v is not None}
    return preset_options(problem, **over)


def cmd_solve(args, out: Path, manifest: RunManifest) -> int:
    (name,) = _methods(args.method)
    if args.steps < 2:
        raise UsageError("--steps (N+1) must be >= 2")
    prob = get_problem(args.problem)
    opts = _newton(args, args.problem)
    manifest.methods, manifest.problem, manifest.steps = [name], args.problem, [args.steps]
    manifest.tolerances = {"newton_tol": opts.tolerance}
    t = load_triplet(name)
    try:
        sol = solve_kkt(t, prob, args.steps - 1, opts)
    except KktSolveError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    path = Path(args.dump) if args.dump else out / f"solve_{args.problem}_{name}_{args.steps}.csv"
    sol.write_csv(path)
    manifest.outputs = [str(path)]
    print(f"{name}/{args.problem} N+1 = {args.steps}: {sol.iterations} Newton iterations, "
          f"residual {sol.residual:.3e}; y_h(T) = {sol.yT.tolist()}, p_h(0) = {sol.p0.tolist()}")
    return EXIT_OK


def cmd_converge(args, out: Path, manifest: RunManifest) -> int:
    names = _methods(args.methods)
    steps = _int_list(args.steps)
    if not steps or any(n < 4 for n in steps):
        raise UsageError("step counts N+1 must be >= 4")
    steps = sorted(steps)
    if any(b != 2 * a for a, b in zip(steps, steps[1:])):
        raise UsageError("step counts must double, e.g. 20,40,80")
    opts = _newton(args, args.problem)
    manifest.methods, manifest.problem, manifest.steps = names, args.problem, steps
    manifest.tolerances = {"newton_tol": opts.tolerance, "reference_steps": args.ref_steps}
    tables = run_convergence(args.problem, names, steps, opts, ref_steps=args.ref_steps)
    rows = [r for tab in tables for r in tab.records()]
    paths = [_write_table(out / f"converge_{args.problem}", rows, args.format)]
    for kind in ("state", "adjoint"):
        svg = out / f"converge_{args.problem}_{kind}.svg"
        series = {tab.method: [(r.steps, getattr(r, f"{kind}_error")) for r in tab.rows] for tab in tables}
        svg.write_text(error_plot(series, f"{args.problem}: maximal {kind} errors"))
        paths.append(svg)
    manifest.outputs = [str(p) for p in paths]
    for tab in tables:
        for r in tab.records():
            print(f"{tab.method:10s} N+1 = {r['steps']:5d}  state {r['state_error']:.3e}  "
                  f"adjoint {r['adjoint_error']:.3e}  orders {r['state_order']:5.2f} {r['adjoint_order']:5.2f}")
    failed = sum(math.isnan(r["state_error"]) for r in rows)
    if failed:
        print(f"{failed} cell(s) failed to converge and are recorded as NaN", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="peeroc", description="Peer triplets for ODE-constrained optimal control.")
    p.add_argument("--tol", type=float, default=None,
                   help="condition tolerance (verify) or Newton tolerance (solve, converge)")
    p.add_argument("--out-dir", default=".", help="directory for report files (default: .)")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("verify", help="check all order and structure conditions")
    v.add_argument("--method", default="all")
    v.add_argument("--samples", type=int, default=stability.DEFAULT_SAMPLES)

    s = sub.add_parser("stability", help="stability angle, damping and boundary indicators")
    s.add_argument("--method", required=True)
    s.add_argument("--samples", type=int, default=stability.DEFAULT_SAMPLES)
    s.add_argument("--locus", help="write the boundary locus CSV to this path")

    def newton_flags(q):
        q.add_argument("--jacobian", choices=JACOBIAN_MODES)
        q.add_argument("--damping", choices=DAMPING_MODES)
        q.add_argument("--guess", choices=INITIAL_GUESS_MODES)
        q.add_argument("--max-iter", type=int)

    so = sub.add_parser("solve", help="solve one discrete KKT system")
    so.add_argument("--problem", required=True, choices=sorted(PROBLEMS))
    so.add_argument("--method", required=True)
    so.add_argument("--steps", type=int, required=True, help="N+1")
    so.add_argument("--dump", help="solution CSV path (default: inside --out-dir)")
    newton_flags(so)

    c = sub.add_parser("converge", help="convergence study over doubling N+1")
    c.add_argument("--problem", required=True, choices=sorted(PROBLEMS))
    c.add_argument("--methods", default="all")
    c.add_argument("--steps", default="20,40,80,160,320", help="comma-separated N+1 values")
    c.add_argument("--ref-steps", type=int, default=1280, help="RK4 steps of the shooting oracle")
    newton_flags(c)

    r = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    r.add_argument("manifest")
    return p


COMMANDS = {"verify": cmd_verify, "stability": cmd_stability, "solve": cmd_solve,
            "converge": cmd_converge}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "replay":
        try:
            recorded = RunManifest.read(args.manifest).argv
        except (OSError, ValueError, TypeError) as exc:
            print(f"peeroc: cannot read manifest: {exc}", file=sys.stderr)
            return EXIT_USAGE
        return main(recorded)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(command=args.command, argv=argv)
    try:
        code = COMMANDS[args.command](args, out, manifest)
    except (UsageError, ValueError) as exc:
        print(f"peeroc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    manifest.write(out / f"manifest_{args.command}.json")
    return code


if __name__ == "__main__":
    sys.exit(main())
