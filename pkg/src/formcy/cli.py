"""``formcy`` command line: construct, solve, verify, ricci, report.

Exit codes: 0 success, 2 numerical failure, 3 usage error, 4 I/O error.
Options may also come from a ``key = value`` file given with ``--config``;
flags on the command line take precedence.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import fdf, forms
from .construction import ConstructionParams, construct
from .forms import MetricField, PositivityError
from .solver import (
    AnsatzState,
    Background,
    ConeExitError,
    ConvergenceError,
    SolverConfig,
    SourceTerm,
    kernel_margin,
    m_map,
    newton_solve,
)
from .torus import CompatibilityError, FieldError, TorusGeometry, ddbar, random_trig_field
from .verify import REGISTRY, SuiteConfig, run_suite

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE, EXIT_IO = 0, 2, 3, 4


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with status 2
        raise UsageError(message)


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a list of integers, got {text!r}") from None


def read_config(path: str) -> dict[str, str]:
    """Plain ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for number, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{number}: expected key = value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def write_report(path: Path, lines: list[str]) -> None:
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_report(path: Path) -> dict[str, str]:
    out = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        key, sep, value = line.partition(" = ")
        if sep:
            out[key.strip()] = value.strip()
    return out


# -- commands ----------------------------------------------------------------------

def cmd_construct(args) -> int:
    if args.delta is None:
        raise UsageError("construct needs --delta")
    if not 0.0 < args.delta < 1.0:
        raise UsageError(f"--delta must lie in (0, 1), got {args.delta}")
    try:
        params = ConstructionParams(n=args.n, delta=args.delta, grid=args.grid, tol=args.tol)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = construct(params)
    except (CompatibilityError, PositivityError) as exc:
        lines = ["command = construct", f"n = {args.n}", f"delta = {args.delta!r}", f"grid = {args.grid}",
                 "status = FAIL", f"diagnostic = {exc}"]
        write_report(out / "report.txt", lines)
        print("\n".join(lines), file=sys.stderr)
        return EXIT_NUMERIC
    g = result.geometry
    fdf.write_scalar(out / "u.fdf", result.u)
    fdf.write_scalar(out / "v.fdf", result.v)
    fdf.write(out / "omega.fdf", g, "metric", result.omega.entries)
    fdf.write(out / "psi.fdf", g, "psi", result.psi.entries)
    with open(out / "profile.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1", "one_plus_lu", "one_plus_lv", "norm_omega"])
        lu = 1.0 + ddbar(result.u, 1, 1).samples.real
        lv = 1.0 + ddbar(result.v, 1, 1).samples.real
        norm = np.sqrt(result.norm.samples.real)
        for x, a, b, c in zip(g.coordinate(1), lu, lv, norm):
            writer.writerow([repr(float(x)), repr(float(a)), repr(float(b)), repr(float(c))])
    failed = result.residuals["det_identity"] > params.tol or result.residuals["C0_spread"] > params.tol
    lines = ["command = construct"] + result.report_lines() + [f"status = {'FAIL' if failed else 'pass'}"]
    write_report(out / "report.txt", lines)
    print("\n".join(lines))
    return EXIT_NUMERIC if failed else EXIT_OK


def _solve_geometry(args) -> TorusGeometry:
    grid = args.grid if len(args.grid) == len(args.axes) else args.grid * len(args.axes)
    try:
        return TorusGeometry(args.n, args.axes, grid)
    except (FieldError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def cmd_solve(args) -> int:
    cfg = SolverConfig(newton_tol=args.tol, max_iters=args.max_iters)
    truth = None
    if args.f:
        dump = fdf.read(args.f)
        if dump.kind not in ("scalar", "real"):
            raise UsageError(f"{args.f} holds a {dump.kind} field, expected a scalar")
        g = dump.geometry
        bg = Background.standard(g)
        source = SourceTerm.renormalized(dump.data.real, bg)
    else:
        g = _solve_geometry(args)
        bg = Background.standard(g)
        if args.manufactured is not None:
            a, b = g.active_axes[0], g.active_axes[-1]
            ustar = g.sample(lambda x: args.manufactured * np.sin(x[a]) * np.sin(x[b]))
            truth = AnsatzState.at(ustar, bg)
            source = SourceTerm.renormalized(m_map(truth), bg)
        else:
            rng = np.random.default_rng(args.seed)
            f = random_trig_field(g, rng, args.modes, args.amplitude)
            source = SourceTerm.renormalized(f, bg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["command = solve", f"n = {g.n}", "axes = " + " ".join(map(str, g.active_axes)),
             "grid = " + " ".join(map(str, g.grid_shape)), f"source_sup = {source.f.max_abs()!r}",
             f"compatibility_residual = {source.compatibility_residual()!r}"]
    try:
        result = newton_solve(source, bg, cfg)
    except (ConeExitError, ConvergenceError) as exc:
        kind = "cone exit" if isinstance(exc, ConeExitError) else "continuation stalled"
        lines += ["status = FAIL", f"diagnostic = {kind}: {exc}"]
        _write_history(out / "history.csv", exc.history)
        write_report(out / "report.txt", lines)
        print("\n".join(lines), file=sys.stderr)
        return EXIT_NUMERIC
    fdf.write_scalar(out / "u.fdf", result.u)
    fdf.write(out / "omega.fdf", g, "metric", result.state.omega.entries)
    _write_history(out / "history.csv", result.history)
    margin = kernel_margin(result.state, cfg)
    order = result.observed_order()
    lines += [f"iterations = {result.iterations}", f"continuation = {result.continuation}",
              f"residual = {result.residual!r}", f"observed_order = {order!r}",
              f"kernel_margin = {margin!r}", f"u_sup = {result.u.max_abs()!r}"]
    if truth is not None:
        lines.append(f"manufactured_error = {float(np.max(np.abs(result.u.samples - truth.u.samples)))!r}")
    lines.append("status = pass")
    write_report(out / "report.txt", lines)
    print("\n".join(lines))
    return EXIT_OK


def _write_history(path: Path, history: list[float]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "residual_sup"])
        for i, value in enumerate(history):
            writer.writerow([i, repr(float(value))])


def cmd_verify(args) -> int:
    tolerances = {}
    for item in args.set_tol or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set-tol expects name=value, got {item!r}")
        tolerances[name.strip()] = float(value)
    grid = args.grid if len(args.grid) == len(args.axes) else args.grid * len(args.axes)
    try:
        cfg = SuiteConfig(n=args.n, axes=args.axes, grid=grid, seed=args.seed, tolerances=tolerances,
                          checks=tuple(args.checks.split(",")) if args.checks else None)
        cfg.geometry
    except (FieldError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    report = run_suite(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "suite_report.txt").write_text(report.text(), encoding="utf-8")
    print(report.text(), end="")
    return EXIT_OK if report.passed else EXIT_NUMERIC


def cmd_ricci(args) -> int:
    if args.metric is None:
        raise UsageError("ricci needs --metric")
    dump = fdf.read(args.metric)
    if dump.kind not in ("metric", "hermitian"):
        raise UsageError(f"{args.metric} holds a {dump.kind} field, expected a metric")
    try:
        omega = MetricField(dump.geometry, dump.data)
    except PositivityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    ric = forms.ricci_hermitian(omega)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fdf.write(out / "ricci.fdf", dump.geometry, "hermitian", ric.entries)
    lines = ["command = ricci", f"source = {args.metric}", f"ricci_sup = {ric.max_abs()!r}"]
    write_report(out / "ricci_report.txt", lines)
    print("\n".join(lines))
    return EXIT_OK


def cmd_report(args) -> int:
    reports = []
    for root in args.inputs:
        root = Path(root)
        if not root.exists():
            raise FileNotFoundError(f"{root} does not exist")
        reports += sorted(p for p in root.rglob("report.txt") if p.resolve() != Path(args.out).resolve())
    if not reports:
        raise FileNotFoundError("no report.txt files under " + ", ".join(args.inputs))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    constructs, solves = [], []
    for path in reports:
        data = read_report(path)
        (constructs if data.get("command") == "construct" else solves).append((path, data))
    constructs.sort(key=lambda item: (int(item[1]["n"]), float(item[1]["delta"])))
    lines = [f"reports = {len(reports)}"]
    with open(out / "construct_sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        cols = ["n", "delta", "grid", "k", "C0", "C0_expected", "det_identity", "C0_spread", "ricci_sup"]
        writer.writerow(cols)
        for path, data in constructs:
            writer.writerow([data.get(c, "") for c in cols])
            lines.append(f"construct[n={data['n']},delta={data['delta']}] = C0 {data['C0']} "
                         f"det_identity {data['det_identity']} status {data.get('status')}")
    with open(out / "newton_histories.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run", "iteration", "residual_sup"])
        for path, data in solves:
            hist = path.parent / "history.csv"
            if hist.exists():
                with open(hist, newline="") as src:
                    for row in list(csv.reader(src))[1:]:
                        writer.writerow([path.parent.name] + row)
            lines.append(f"solve[{path.parent.name}] = residual {data.get('residual')} "
                         f"status {data.get('status')}")
    write_report(out / "summary.txt", lines)
    print("\n".join(lines))
    return EXIT_OK


# -- entry point ---------------------------------------------------------------------

def build_parser() -> Parser:
    parser = Parser(prog="formcy", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key = value file supplying defaults")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("construct", help="explicit constant-norm balanced metric")
    p.add_argument("--delta", type=float, help="determinant ratio, strictly between 0 and 1 (required)")
    p.add_argument("--n", type=int, default=3, help="complex dimension, at least 3 (default 3)")
    p.add_argument("--grid", type=int, default=256, help="even number of samples along x_1 (default 256)")
    p.add_argument("--tol", type=float, default=1e-10, help="pass threshold for the residuals (default 1e-10)")
    p.add_argument("--out", default="out/construct")
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("solve", help="Newton solve of M(u) = f")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--f", help="FDF1 scalar field for f")
    src.add_argument("--manufactured", type=float, metavar="AMP",
                     help="use f = M(AMP sin x_a sin x_b) on the first and last active axes")
    p.add_argument("--amplitude", type=float, default=0.05, help="random source amplitude")
    p.add_argument("--modes", type=int, default=2, help="highest Fourier mode of the random source")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--axes", type=_int_list, default=(1, 3), help="active real axes, e.g. '1,3'")
    p.add_argument("--grid", type=_int_list, default=(64,), help="samples per active axis; one value is repeated")
    p.add_argument("--tol", type=float, default=1e-8, help="Newton residual target in sup norm")
    p.add_argument("--max-iters", type=int, default=30, help="Newton iterations per continuation stage")
    p.add_argument("--out", default="out/solve")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="run the identity and property suite")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--axes", type=_int_list, default=(1, 3))
    p.add_argument("--grid", type=_int_list, default=(32,))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checks", help="comma-separated check names (default: all of " +
                   ", ".join(REGISTRY) + ")")
    p.add_argument("--set-tol", action="append", metavar="NAME=VALUE", help="override one check tolerance (repeatable)")
    p.add_argument("--out", default="out/verify")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("ricci", help="Chern-Ricci curvature of a metric dump")
    p.add_argument("--metric", help="FDF1 metric dump, e.g. omega.fdf from construct")
    p.add_argument("--out", default="out/ricci")
    p.set_defaults(func=cmd_ricci)

    p = sub.add_parser("report", help="merge earlier outputs into a summary")
    p.add_argument("inputs", nargs="+", help="run directories or parents of run directories")
    p.add_argument("--out", default="out/report")
    p.set_defaults(func=cmd_report)
    return parser


def _apply_config(parser: Parser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    values = read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]  # noqa: SLF001
    known = {a.dest: a for a in sub._actions}  # noqa: SLF001
    defaults = {}
    for key, text in values.items():
        if key not in known:
            raise UsageError(f"{args.config}: unknown option {key!r} for {args.command}")
        action = known[key]
        try:
            defaults[key] = action.type(text) if action.type else text
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"{args.config}: bad value for {key}: {exc}") from None
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, fdf.FDFError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (PositivityError, CompatibilityError, ConvergenceError, FieldError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
