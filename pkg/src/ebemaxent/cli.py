"""Command-line pipeline: samples -> moment problem -> solve -> density grids.

Exit codes: 0 when every constraint is retained, 2 when some were discarded,
1 on any fatal error (bad input, divergence of a baseline solver).
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from ._kernels import BACKEND
from .baselines import NewtonConfig, newton_full_solve
from .basis import BasisSet, MultiIndex, enumerate_multi_indices
from .core import Density, MomentProblem
from .ebe import EbeConfig, SolveReport, ebe_solve, write_trace_jsonl
from .exceptions import Diverged, EbeError
from .ingest import build_problem, load_samples_csv
from .quadrature import DEFAULT_NODE_CAP, QuadratureRule, make_rule

log = logging.getLogger("ebemaxent")

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2


class CliError(Exception):
    pass


# --- argument parsing --------------------------------------------------------


def _parse_index(text: str) -> tuple[int, ...]:
    try:
        exps = tuple(int(t) for t in text.replace(" ", "").split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"multi-index must look like 2,0,4 (got {text!r})") from None
    if any(e < 0 for e in exps) or sum(exps) < 1:
        raise argparse.ArgumentTypeError(f"invalid multi-index {text!r}")
    return exps


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("quadrature")
    g.add_argument("--quad", choices=["sparse", "uniform"], help="quadrature kind")
    g.add_argument("--level", type=int, help="sparse-grid level")
    g.add_argument("--grid-per-axis", type=int, help="nodes per axis of the uniform grid")
    s = common.add_argument_group("solver")
    s.add_argument("--config", type=Path, help="JSON file with solver settings; flags override it")
    s.add_argument("--tol1", type=float, help="initial scalar-Newton tolerance")
    s.add_argument("--tol2", type=float, help="tolerance for the enlarged systems")
    s.add_argument("--lambda-min", type=float, help="smallest tracking step before a constraint is discarded")
    s.add_argument("--max-inner-iters", type=int)
    s.add_argument("--no-deflation", action="store_true", help="disable the singular-point jump")
    s.add_argument("--seed", type=int, help="seed for the deflation random vector")
    s.add_argument("--order-mode", choices=["canonical", "convexity", "user"])
    common.add_argument("-v", "--verbose", action="count", default=0)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="ebemaxent", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    m = sub.add_parser("moments", parents=[common], help="empirical moments of CSV samples")
    m.add_argument("samples", type=Path)
    m.add_argument("-o", "--output", type=Path, required=True)
    m.add_argument("--dim", type=int, help="expected number of columns")
    m.add_argument("--order", type=int, required=True, help="maximal total order p")
    m.add_argument("--extra-index", type=_parse_index, nargs="+", default=[], metavar="J",
                   help="additional multi-indices such as 6,0")

    s = sub.add_parser("solve", parents=[common], help="solve a moment problem")
    s.add_argument("problem", type=Path)
    s.add_argument("-o", "--output", type=Path, required=True)
    s.add_argument("--method", choices=["ebe", "newton", "newton-damped"], default="ebe")
    s.add_argument("--trace", type=Path, help="JSON-lines trace (default: next to the report)")

    e = sub.add_parser("eval", parents=[common], help="evaluate a solved density on a grid")
    e.add_argument("report", type=Path)
    e.add_argument("-o", "--output", type=Path, required=True)
    e.add_argument("--points", type=int, default=101, help="grid points per axis")
    e.add_argument("--coords", choices=["original", "unit"], default="original")
    e.add_argument("--lo", type=float, nargs="+", help="lower grid corner (per axis or one value)")
    e.add_argument("--hi", type=float, nargs="+", help="upper grid corner (per axis or one value)")
    e.add_argument("--marginals", action="store_true", help="also write one 1-D marginal CSV per axis")

    c = sub.add_parser("compare", parents=[common], help="EBE against full Newton on one problem")
    c.add_argument("problem", type=Path)
    c.add_argument("-o", "--output", type=Path, required=True)
    c.add_argument("--newton-method", choices=["newton", "newton-damped"], default="newton")
    return parser


# --- helpers -----------------------------------------------------------------


def _ebe_config(args) -> EbeConfig:
    values = {}
    if args.config is not None:
        values.update(json.loads(args.config.read_text()))
    flags = {
        "tol_newton": args.tol1,
        "tol_predictor": args.tol2,
        "lambda_min": args.lambda_min,
        "max_inner_iters": args.max_inner_iters,
        "seed": args.seed,
        "order_mode": args.order_mode,
    }
    values.update({k: v for k, v in flags.items() if v is not None})
    if args.no_deflation:
        values["deflation_enabled"] = False
    known = {f.name for f in dataclasses.fields(EbeConfig)}
    unknown = set(values) - known
    if unknown:
        raise CliError(f"unknown solver settings: {', '.join(sorted(unknown))}")
    return EbeConfig(**values)


def _rule_from_flags(args, d: int, fallback: QuadratureRule | None = None) -> QuadratureRule:
    kind = args.quad or ("uniform" if args.grid_per_axis and not args.level else None)
    if kind is None:
        kind = fallback.kind if fallback is not None and args.level is None else "sparse"
    if kind == "sparse":
        level = args.level or (fallback.level if fallback is not None and fallback.kind == "sparse" else None)
        if level is None:
            raise CliError("sparse quadrature needs --level")
        return make_rule("sparse", d, level=level)
    m = args.grid_per_axis or (fallback.level if fallback is not None and fallback.kind == "uniform" else None)
    if m is None:
        raise CliError("uniform quadrature needs --grid-per-axis")
    return make_rule("uniform", d, m=m)


def _read_json(path: Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path} is not valid JSON: {exc}") from None


def _write_json(path: Path, data) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _load_problem(path: Path) -> MomentProblem:
    data = _read_json(path)
    try:
        return MomentProblem.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"{path} is not a moment problem: {exc}") from None


def _manifest(args, inputs, outputs, config=None) -> dict:
    echo = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}
    echo = json.loads(json.dumps(echo, default=lambda o: list(o) if isinstance(o, tuple) else str(o)))
    return {
        "subcommand": args.command,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "arguments": echo,
        "config": config,
        "seed": (config or {}).get("seed"),
        "versions": {
            "ebemaxent": __version__,
            "kernel_backend": BACKEND,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "timestamp_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def _write_manifest(output: Path, manifest: dict) -> Path:
    path = Path(output).with_name(Path(output).name + ".manifest.json")
    _write_json(path, manifest)
    return path


def _report_payload(report: SolveReport, problem: MomentProblem) -> dict:
    out = report.to_dict()
    out["problem"] = problem.to_dict()
    return out


# --- subcommands -------------------------------------------------------------


def cmd_moments(args) -> int:
    samples = load_samples_csv(args.samples, args.dim)
    d = samples.dimension
    basis = enumerate_multi_indices(d, args.order)
    if args.extra_index:
        extra = [MultiIndex(e) for e in args.extra_index]
        for e in extra:
            if e.dimension != d:
                raise CliError(f"extra index {e} has {e.dimension} entries for {d}-dimensional data")
        indices = basis.indices + tuple(e for e in dict.fromkeys(extra) if e not in basis.indices)
        basis = BasisSet(d, max(i.total_order for i in indices), indices)
    rule = _rule_from_flags(args, d)
    problem = build_problem(samples, basis, rule)
    _write_json(args.output, problem.to_dict())
    _write_manifest(args.output, _manifest(args, [args.samples], [args.output]))
    print(f"wrote {len(basis)} targets from {samples.count} samples to {args.output}")
    return EXIT_OK


def _solve(problem: MomentProblem, method: str, args) -> tuple[SolveReport, dict]:
    if method == "ebe":
        cfg = _ebe_config(args)
        return ebe_solve(problem, cfg), dataclasses.asdict(cfg)
    cfg = NewtonConfig(tol=args.tol2) if args.tol2 is not None else NewtonConfig()
    return newton_full_solve(problem, cfg, damped=(method == "newton-damped")), dataclasses.asdict(cfg)


def _maybe_override_rule(problem: MomentProblem, args) -> MomentProblem:
    if args.quad is None and args.level is None and args.grid_per_axis is None:
        return problem
    rule = _rule_from_flags(args, problem.dimension, problem.rule)
    return MomentProblem(problem.basis, problem.targets, rule, problem.rescale)


def cmd_solve(args) -> int:
    problem = _maybe_override_rule(_load_problem(args.problem), args)
    outputs = [args.output]
    try:
        report, config = _solve(problem, args.method, args)
    except Diverged as exc:
        _write_manifest(args.output, _manifest(args, [args.problem], [], None))
        raise CliError(f"{args.method} diverged after {exc.iterations} iterations: {exc.reason}") from None
    _write_json(args.output, _report_payload(report, problem))
    if args.method == "ebe":
        trace_path = args.trace or args.output.with_suffix(".trace.jsonl")
        write_trace_jsonl(report.trace, trace_path)
        outputs.append(trace_path)
    _write_manifest(args.output, _manifest(args, [args.problem], outputs, config))
    print(f"{report.method}: retained {len(report.retained)}/{problem.n}, "
          f"moment error {report.final_moment_error:.3e}")
    for d in report.discarded:
        print(f"  discarded {tuple(d['multi_index'])}: {d['reason']}")
    return EXIT_OK if report.all_retained else EXIT_PARTIAL


def _corner(values, d, default):
    if values is None:
        return np.array(default, dtype=float)
    if len(values) == 1:
        return np.full(d, values[0])
    if len(values) != d:
        raise CliError(f"grid corner needs 1 or {d} values, got {len(values)}")
    return np.array(values, dtype=float)


def _marginal(density: Density, rule: QuadratureRule, axis: int, xs: np.ndarray) -> np.ndarray:
    d = density.basis.dimension
    if d == 1:
        return density(xs[:, None])
    # integrate out the other axes with the same family of rule in d-1 dimensions
    sub = make_rule(rule.kind, d - 1, level=rule.level, m=rule.level)
    out = np.empty(xs.size)
    chunk = max(1, 2**20 // sub.num_nodes)
    for start in range(0, xs.size, chunk):
        block = xs[start : start + chunk]
        pts = np.insert(np.tile(sub.nodes, (block.size, 1)), axis, np.repeat(block, sub.num_nodes), axis=1)
        out[start : start + block.size] = density(pts).reshape(block.size, -1) @ sub.weights
    return out


def cmd_eval(args) -> int:
    data = _read_json(args.report)
    try:
        problem = MomentProblem.from_dict(data["problem"])
        lam = problem.basis.from_user_order(data["lambda"])
        Z = float(data["Z"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"{args.report} is not a solve report: {exc}") from None
    d = problem.dimension
    density = Density(problem.basis, lam, Z, problem.rescale)
    r = problem.rescale if args.coords == "original" else None
    lo_dom = r.lo if r is not None else -np.ones(d)
    hi_dom = r.hi if r is not None else np.ones(d)
    lo, hi = _corner(args.lo, d, lo_dom), _corner(args.hi, d, hi_dom)
    tol = 1e-12 * np.maximum(1.0, np.abs(hi_dom - lo_dom))
    if np.any(lo < lo_dom - tol) or np.any(hi > hi_dom + tol) or np.any(lo > hi):
        raise CliError(f"grid [{lo.tolist()}, {hi.tolist()}] lies outside the domain "
                       f"[{lo_dom.tolist()}, {hi_dom.tolist()}]")
    lo, hi = np.maximum(lo, lo_dom), np.minimum(hi, hi_dom)
    if args.points < 2:
        raise CliError("--points must be at least 2")
    if args.points**d > DEFAULT_NODE_CAP:
        raise CliError(f"{args.points}^{d} grid points exceed the cap {DEFAULT_NODE_CAP}")

    axes = [np.linspace(lo[k], hi[k], args.points) for k in range(d)]
    grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    values = density.original(grid) if r is not None else density(grid)
    header = ",".join([f"x{k + 1}" for k in range(d)] + ["density"])
    args.output.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(args.output, np.column_stack([grid, values]), delimiter=",", header=header, comments="", fmt="%.17g")
    outputs = [args.output]

    if args.marginals:
        for k in range(d):
            unit = axes[k] if r is None else r.to_unit(np.insert(np.zeros((args.points, d - 1)), k, axes[k], axis=1))[:, k]
            vals = _marginal(density, problem.rule, k, np.clip(unit, -1.0, 1.0))
            if r is not None:
                vals = vals / r.half_width[k]
            path = args.output.with_name(f"{args.output.stem}_marginal_{k + 1}.csv")
            np.savetxt(path, np.column_stack([axes[k], vals]), delimiter=",",
                       header=f"x{k + 1},density", comments="", fmt="%.17g")
            outputs.append(path)
    _write_manifest(args.output, _manifest(args, [args.report], outputs))
    print(f"wrote {grid.shape[0]} density values to {args.output}")
    return EXIT_OK


def cmd_compare(args) -> int:
    problem = _maybe_override_rule(_load_problem(args.problem), args)
    rows = []
    ebe_report, ebe_cfg = _solve(problem, "ebe", args)
    rows.append({
        "method": "ebe",
        "status": "converged" if ebe_report.all_retained else "partial",
        "retained": len(ebe_report.retained),
        "moment_error": ebe_report.final_moment_error,
        "lambda": [float(v) for v in ebe_report.lam],
        "iterations": ebe_report.iterations,
    })
    try:
        newton_report, _ = _solve(problem, args.newton_method, args)
        rows.append({
            "method": args.newton_method,
            "status": "converged",
            "retained": problem.n,
            "moment_error": newton_report.final_moment_error,
            "lambda": [float(v) for v in newton_report.lam],
            "iterations": newton_report.iterations,
        })
    except Diverged as exc:
        rows.append({"method": args.newton_method, "status": "diverged", "reason": exc.reason,
                     "iterations": {"newton": exc.iterations}})
    out = {"problem_size": problem.n, "results": rows}
    if all(row["status"] == "converged" for row in rows):
        out["moment_error_gap"] = abs(rows[0]["moment_error"] - rows[1]["moment_error"])
        out["lambda_gap"] = float(np.linalg.norm(np.subtract(rows[0]["lambda"], rows[1]["lambda"])))
    _write_json(args.output, out)
    _write_manifest(args.output, _manifest(args, [args.problem], [args.output], ebe_cfg))

    print(f"{'method':<15}{'status':<12}{'retained':>9}  moment error")
    for row in rows:
        err = f"{row['moment_error']:.3e}" if "moment_error" in row else "-"
        print(f"{row['method']:<15}{row['status']:<12}{row.get('retained', '-')!s:>9}  {err}")
    return EXIT_OK if ebe_report.all_retained else EXIT_PARTIAL


COMMANDS = {"moments": cmd_moments, "solve": cmd_solve, "eval": cmd_eval, "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (CliError, EbeError, ValueError, OSError) as exc:
        print(f"ebemaxent: error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
