"""Command-line entry point.

Exit codes: 0 success, 1 input error, 2 infeasible, 3 no root, 4 validation
failure.
"""

from __future__ import annotations

import argparse
import contextlib
import os
import sys
from typing import Optional

import numpy as np

from . import io
from .constructions import build_bortkiewicz
from .dynamics import (
    OkishioPerturbation,
    ScenarioConfig,
    convergence_criterion,
    run_convergence,
    run_okishio,
    trajectory_rows,
)
from .errors import (
    ConvergenceError,
    DegenerateConstraintsError,
    EigenDomainError,
    FixedCapitalChoiceError,
    InfeasibleAllocationError,
    NoSolutionError,
    NoUniqueAllocationError,
    SingularMatrixError,
    ValformeError,
)
from .model import EconomyTable, derive_coefficients
from .solver import PRICE, VALUE, ConstraintSet, ReproductionConstraint, eigen_rate, solve

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_NO_ROOT = 3
EXIT_INVALID = 4


class UsageError(ValueError):
    pass


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (InfeasibleAllocationError, FixedCapitalChoiceError, NoUniqueAllocationError)):
        return EXIT_INFEASIBLE
    if isinstance(exc, (NoSolutionError, ConvergenceError, EigenDomainError, SingularMatrixError,
                        DegenerateConstraintsError)):
        return EXIT_NO_ROOT
    return EXIT_INPUT


# ---------------------------------------------------------------------------
# argument helpers


def _pair(text: str, what: str) -> tuple[str, float]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise UsageError(f"{what} expects BRANCH=NUMBER, got {text!r}")
    try:
        return key, float(value)
    except ValueError:
        raise UsageError(f"{what}: {value!r} is not a number") from None


def _branch(table: EconomyTable, key) -> int:
    try:
        return table.index_of(key)
    except KeyError:
        pass
    if isinstance(key, str) and key.lstrip("-").isdigit():
        try:
            return table.index_of(int(key))
        except KeyError:
            pass
    raise UsageError(f"unknown branch {key!r}; known: {', '.join(table.branch_names)}")


def _constraint(table: EconomyTable, text: str) -> ReproductionConstraint:
    parts = text.split(":")
    if len(parts) not in (3, 4) or parts[0] != "repro":
        raise UsageError(f"constraint must look like repro:<commodity>:<value|price>, got {text!r}")
    if parts[2] not in (VALUE, PRICE):
        raise UsageError(f"constraint space must be 'value' or 'price', got {parts[2]!r}")
    surplus = False
    if len(parts) == 4:
        if parts[3] != "surplus":
            raise UsageError(f"unknown constraint flag {parts[3]!r}")
        surplus = True
    return ReproductionConstraint(_branch(table, parts[1]), parts[2], surplus)


def _load(args) -> EconomyTable:
    table = io.load_table(args.input)
    changes = {}
    if getattr(args, "n", None) is not None:
        changes["n_cycles"] = args.n
    if getattr(args, "K_total", None) is not None:
        changes["K_total"] = args.K_total
    return table.replace(**changes) if changes else table


def _constraints(table: EconomyTable, args) -> ConstraintSet:
    fixed = {}
    for text in args.fix or ():
        key, value = _pair(text, "--fix")
        fixed[_branch(table, key)] = value
    offsets = None
    ref = 0
    if args.delta_r:
        offsets = [0.0] * table.N
        for text in args.delta_r:
            key, value = _pair(text, "--delta-r")
            offsets[_branch(table, key)] = value
        if args.reference is not None:
            ref = _branch(table, args.reference)
        else:
            zeros = [i for i, o in enumerate(offsets) if o == 0.0]
            if not zeros:
                raise UsageError("with --delta-r at least one branch needs a zero offset (or pass --reference)")
            ref = zeros[0]
        if offsets[ref] != 0.0:
            raise UsageError("the reference branch must have a zero offset")
    elif args.reference is not None:
        ref = _branch(table, args.reference)
    repro = tuple(_constraint(table, c) for c in args.constraint or ())
    return ConstraintSet(fixed, offsets, repro, ref)


def _emit_json(obj, out: Optional[str]) -> None:
    if out:
        io.write_json(obj, out)


def _output(path: Optional[str]):
    if path:
        return open(path, "w", encoding="utf-8", newline="\n")
    return contextlib.nullcontext(sys.stdout)


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args) -> int:
    table = _load(args)
    cons = _constraints(table, args)
    sol = solve(table, cons)
    echo = table.replace(K_total=table.total_capital)
    report = io.solution_report(echo, sol)
    _emit_json(report, args.out)
    sys.stdout.write(io.render_solution(report))
    return EXIT_OK


def cmd_sweep(args) -> int:
    table = _load(args)
    b = _branch(table, args.vary)
    if args.step <= 0 or args.to < args.from_:
        raise UsageError("sweep needs --step > 0 and --to >= --from")
    base = _constraints(table, args)
    if b in base.fixed_k:
        raise UsageError(f"branch {args.vary!r} is both swept and fixed")
    count = int(np.floor((args.to - args.from_) / args.step * (1 + 1e-12))) + 1
    values = [args.from_ + k * args.step for k in range(count)]
    N = table.N
    header = ["K_fixed"] + [f"K_{i + 1}" for i in range(N)] + ["r_star"] + [f"x_{i + 1}" for i in range(N)]
    rows = []
    for value in values:
        try:
            sol = solve(table, base.with_fixed({**base.fixed_k, b: value}))
        except ValformeError as exc:
            print(f"skip {value!r}: {type(exc).__name__}: {exc}", file=sys.stderr)
            continue
        rows.append([value, *sol.K, sol.r_star, *sol.x])
    if not rows:
        print("no feasible point in the swept window", file=sys.stderr)
        return EXIT_INFEASIBLE
    with _output(args.out) as fh:
        io.write_csv(fh, header, rows)
    return EXIT_OK


def _scenario_table(cfg: dict, base_dir: str) -> EconomyTable:
    if "table" in cfg:
        return io.table_from_dict(cfg["table"])
    if "input" in cfg:
        path = cfg["input"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return io.load_table(path)
    raise UsageError("config needs 'table' (inline) or 'input' (path to a table file)")


def _cfg_number(cfg: dict, key: str, default=None) -> float:
    if key not in cfg:
        if default is None:
            raise UsageError(f"config is missing {key!r}")
        return default
    value = cfg[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise UsageError(f"config {key!r} must be a number")
    return float(value)


def scenario_from_dict(cfg: dict, base_dir: str = ".") -> ScenarioConfig:
    if not isinstance(cfg, dict):
        raise UsageError("scenario config must be a JSON object")
    table = _scenario_table(cfg, base_dir)
    if "K_total" in cfg and cfg["K_total"] is not None:
        table = table.replace(K_total=_cfg_number(cfg, "K_total"))
    iterations = cfg.get("iterations")
    if isinstance(iterations, bool) or not isinstance(iterations, int):
        raise UsageError("config 'iterations' must be an integer")
    pattern = cfg.get("offset_pattern", [1.0, 0.0, -1.0])
    return ScenarioConfig(
        table=table,
        delta_r0=_cfg_number(cfg, "delta_r0"),
        delta_r_decrement=_cfg_number(cfg, "delta_r_decrement"),
        decremented_branch=_branch(table, cfg.get("decremented_branch", 1)),
        K_initial=_cfg_number(cfg, "K_initial"),
        K_decrement=_cfg_number(cfg, "K_decrement"),
        iterations=iterations,
        offset_pattern=tuple(float(p) for p in pattern),
        reference_branch=_branch(table, cfg.get("reference_branch", 1)),
    )


def _verdict(name: str, ok: bool) -> str:
    return f"{'PASS' if ok else 'FAIL'} {name}"


def cmd_simulate_converge(args) -> int:
    cfg = io.read_json(args.config)
    config = scenario_from_dict(cfg, os.path.dirname(os.path.abspath(args.config)))
    traj = run_convergence(config)
    header, rows = trajectory_rows(traj)
    with _output(args.out) as fh:
        io.write_csv(fh, header, rows)
    log = sys.stdout if args.out else sys.stderr
    r_avg = traj.column("r_avg")
    print(_verdict("average rate strictly decreasing", bool(np.all(np.diff(r_avg) < 0))), file=log)
    if len(traj) >= 2:
        print(_verdict("convergence criterion dS/dK < S/K", all(convergence_criterion(traj))), file=log)
    eq = traj.equalization_index(0, -1, atol=1e-12)
    print(f"rates equalize at iteration {eq}" if eq is not None else "rates do not equalize", file=log)
    if traj.reason:
        print(f"stopped early: {traj.reason}", file=log)
    return EXIT_OK


def cmd_simulate_okishio(args) -> int:
    cfg = io.read_json(args.config)
    if not isinstance(cfg, dict):
        raise UsageError("okishio config must be a JSON object")
    table = _scenario_table(cfg, os.path.dirname(os.path.abspath(args.config)))
    p = cfg.get("perturbation")
    if not isinstance(p, dict):
        raise UsageError("config needs 'perturbation': {branch, f, v}")
    pert = OkishioPerturbation(_branch(table, p.get("branch")), _cfg_number(p, "f"), _cfg_number(p, "v"))
    freeze = cfg.get("freeze", {})
    if not isinstance(freeze, dict):
        raise UsageError("'freeze' must map branch to capital")
    K_freeze = {_branch(table, k): _cfg_number(freeze, k) for k in freeze}
    K_total = cfg.get("K_total")
    rep = run_okishio(table, pert, K_freeze, None if K_total is None else _cfg_number(cfg, "K_total"))
    out = {
        "branch": table.branch_names[rep.branch],
        "r": rep.r, "S": rep.S, "S_transient": rep.S_transient,
        "r_transient": rep.r_transient, "r_final": rep.r_final,
        "innovation_incentive": rep.innovation_incentive, "ordering_holds": rep.ordering_holds,
        "base": io.solution_report(table, rep.base),
    }
    _emit_json(out, args.out)
    lines = [
        f"branch {out['branch']}",
        f"r   = {io.fmt(rep.r)}",
        f"S'  = {io.fmt(rep.S_transient)}  (S = {io.fmt(rep.S)})",
        f"r'  = {io.fmt(rep.r_transient)}",
        f"r'' = {io.fmt(rep.r_final)}",
        _verdict("r' > r > r''", rep.ordering_holds),
    ]
    if not rep.innovation_incentive:
        lines.append("no innovation incentive: r' <= r")
    print("\n".join(lines))
    return EXIT_OK


def cmd_bortkiewicz(args) -> int:
    table = _load(args)
    res = build_bortkiewicz(table, K_total=table.total_capital, d_L=args.d_L)
    report = io.solution_report(res.table, res.solution)
    out = {"table": io.table_to_dict(res.table), "iterations": res.iterations, "solution": report}
    _emit_json(out, args.out)
    sys.stdout.write(f"K3 loop settled after {res.iterations} iterations\n")
    sys.stdout.write(io.render_solution(report))
    return EXIT_OK


def cmd_eigen(args) -> int:
    table = _load(args)
    if np.any(table.F != 0):
        print("eigen requires every F_i = 0", file=sys.stderr)
        return EXIT_INFEASIBLE
    coeffs = derive_coefficients(table)
    lam, r, xu = eigen_rate(coeffs)
    A = coeffs.socio_technical_matrix()
    out = {"A": A, "lambda": lam, "r": r, "x_unit": xu}
    _emit_json(out, args.out)
    names = list(table.branch_names)
    print(io.render_grid("A = u / w", [""] + names, [[n, *row] for n, row in zip(names, A)]))
    print(f"lambda = {io.fmt(lam)}")
    print(f"r      = {io.fmt(r)}")
    print("x_u    = " + " ".join(io.fmt(v) for v in xu))
    return EXIT_OK


def cmd_validate(args) -> int:
    report = io.read_json(args.input)
    if not isinstance(report, dict):
        raise io.InputError(f"{args.input}: a report must be a JSON object")
    if "solution" in report and "branches" not in report:
        report = report["solution"]
    bad = io.validate_report(report)
    if bad:
        print("FAIL " + " ".join(bad))
        return EXIT_INVALID
    print("PASS")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_solve_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fix", action="append", metavar="BRANCH=AMOUNT", help="hold a branch's capital fixed")
    p.add_argument("--delta-r", action="append", metavar="BRANCH=OFFSET", help="profit-rate offset of a branch")
    p.add_argument("--reference", metavar="BRANCH", help="branch whose rate is reported as r*")
    p.add_argument("--constraint", action="append", metavar="repro:COMMODITY:value|price",
                   help="reproduction constraint; append ':surplus' to include surplus consumption")


def _add_table_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="economy table JSON")
    p.add_argument("--n", type=int, help="override the amortization period")
    p.add_argument("--K-total", dest="K_total", type=float, help="override total capital")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="valforme", description="Value to production-price transformation solver")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one economy table")
    _add_table_options(p)
    _add_solve_options(p)
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="solve over a range of fixed capital for one branch")
    _add_table_options(p)
    _add_solve_options(p)
    p.add_argument("--vary", required=True, metavar="BRANCH")
    p.add_argument("--from", dest="from_", type=float, required=True)
    p.add_argument("--to", type=float, required=True)
    p.add_argument("--step", type=float, required=True)
    p.add_argument("--out", help="CSV path (default: standard output)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="run a scenario")
    ssub = p.add_subparsers(dest="scenario", required=True)
    q = ssub.add_parser("converge", help="capital-reallocation convergence run")
    q.add_argument("--config", required=True)
    q.add_argument("--out", help="trajectory CSV path (default: standard output)")
    q.set_defaults(func=cmd_simulate_converge)
    q = ssub.add_parser("okishio", help="innovation transient and re-equalization")
    q.add_argument("--config", required=True)
    q.add_argument("--out", help="write the JSON report here")
    q.set_defaults(func=cmd_simulate_okishio)

    p = sub.add_parser("bortkiewicz", help="add a luxury branch fed by the surplus of a 3-branch table")
    _add_table_options(p)
    p.add_argument("--d-L", dest="d_L", type=float, default=0.0, help="luxury amortization per unit of capital")
    p.add_argument("--out", help="write the JSON result here")
    p.set_defaults(func=cmd_bortkiewicz)

    p = sub.add_parser("eigen", help="socio-technical matrix and its Perron root (F = 0 tables)")
    _add_table_options(p)
    p.add_argument("--out", help="write the JSON result here")
    p.set_defaults(func=cmd_eigen)

    p = sub.add_parser("validate", help="re-check a stored solution report")
    p.add_argument("--input", required=True, help="report JSON written by solve --out")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (io.InputError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValformeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
