"""JSON table schema, solution reports, text rendering and CSV output.

Table files look like::

    {"branches": [{"name": "C", "role": "C", "F": 125,
                   "inputs": {"C": 200, "V": 90}, "e_rate": 0.6667}, ...],
     "n_cycles": 5, "wage_commodity": "V",
     "machine_commodity": null, "K_total": 715}

Commodities are named after the branch producing them (name or role).
Floats are written with ``repr``, the shortest string that reads back to
the same double, so files round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import math
import os
from typing import Any, Optional

import numpy as np

from .errors import ConfigurationError, StructuralError
from .model import EconomyTable, check_demand, derive_coefficients
from .solver import TransformationSolution

PRECISION_ENV = "VALFORME_PRECISION"
DEFAULT_PRECISION = 12
REPORT_VERSION = 1


class InputError(ValueError):
    """Unreadable or malformed input file; the message carries the location."""


# ---------------------------------------------------------------------------
# JSON


def read_json(path) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=False, ensure_ascii=True, allow_nan=False) + "\n"


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(obj))


# ---------------------------------------------------------------------------
# economy tables


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InputError(f"{where}: expected a number, got {value!r}")
    return float(value)


def table_from_dict(data: dict) -> EconomyTable:
    """Build a table from the JSON schema; raises InputError on bad shape."""
    if not isinstance(data, dict):
        raise InputError("table must be a JSON object")
    branches = data.get("branches")
    if not isinstance(branches, list) or not branches:
        raise InputError("'branches' must be a non-empty array")
    names, roles = [], []
    for i, b in enumerate(branches):
        if not isinstance(b, dict) or "name" not in b:
            raise InputError(f"branches[{i}]: expected an object with a 'name'")
        names.append(str(b["name"]))
        roles.append(str(b.get("role", b["name"])))
    if len(set(names)) != len(names):
        raise InputError("branch names must be distinct")

    def commodity(key, where) -> int:
        key = str(key)
        if key in names:
            return names.index(key)
        if roles.count(key) == 1:
            return roles.index(key)
        raise InputError(f"{where}: unknown commodity {key!r}")

    N = len(branches)
    F = np.zeros(N)
    U = np.zeros((N, N))
    e = np.zeros(N)
    for i, b in enumerate(branches):
        where = f"branches[{i}]"
        F[i] = _number(b.get("F", 0.0), where + ".F")
        e[i] = _number(b.get("e_rate", 0.0), where + ".e_rate")
        inputs = b.get("inputs", {})
        if not isinstance(inputs, dict):
            raise InputError(f"{where}.inputs: expected an object")
        for key, amount in inputs.items():
            U[i, commodity(key, f"{where}.inputs")] += _number(amount, f"{where}.inputs.{key}")
    if "n_cycles" not in data:
        raise InputError("'n_cycles' is required")
    n = data["n_cycles"]
    if isinstance(n, bool) or not isinstance(n, (int, float)) or int(n) != n:
        raise InputError(f"'n_cycles' must be a positive integer, got {n!r}")
    if "wage_commodity" not in data:
        raise InputError("'wage_commodity' is required")
    wage = commodity(data["wage_commodity"], "wage_commodity")
    machine = data.get("machine_commodity")
    machine = None if machine is None else commodity(machine, "machine_commodity")
    K_total = data.get("K_total")
    K_total = None if K_total is None else _number(K_total, "K_total")
    return EconomyTable(
        branch_names=tuple(names), F=F, U=U, e_rates=e, n_cycles=int(n), wage_index=wage,
        machine_index=machine, K_total=K_total, roles=tuple(roles),
    )


def table_to_dict(table: EconomyTable) -> dict:
    names = table.branch_names
    branches = []
    for i, name in enumerate(names):
        inputs = {names[j]: float(table.U[i, j]) for j in range(table.N) if table.U[i, j] != 0}
        branches.append({"name": name, "role": table.roles[i], "F": float(table.F[i]),
                         "inputs": inputs, "e_rate": float(table.e_rates[i])})
    out = {"branches": branches, "n_cycles": table.n_cycles, "wage_commodity": names[table.wage_index]}
    if table.machine_index is not None:
        out["machine_commodity"] = names[table.machine_index]
    if table.K_total is not None:
        out["K_total"] = float(table.K_total)
    return out


def load_table(path) -> EconomyTable:
    data = read_json(path)
    try:
        return table_from_dict(data)
    except StructuralError as exc:
        raise InputError(f"{path}: {exc}") from exc
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# reports


def _value_block(coeffs, K) -> dict:
    K = np.asarray(K, dtype=float)
    return {"D": coeffs.d * K, "U": coeffs.u * K[:, None], "PL": coeffs.pl * K, "W": coeffs.w * K, "K": K}


def solution_report(table: EconomyTable, sol: TransformationSolution) -> dict:
    """Everything needed to re-check a solution without re-solving it."""
    pt = sol.price_table
    demand = check_demand(table, sol)
    report = {
        "version": REPORT_VERSION,
        "input": table_to_dict(table),
        "method": sol.method,
        "r_star": sol.r_star,
        "reference_branch": table.branch_names[sol.constraints.reference_branch if sol.constraints else 0],
        "K_total": sol.K_total,
        "branches": [
            {"name": table.branch_names[i], "K": sol.K[i], "Kp": sol.Kp[i], "x": sol.x[i],
             "r": sol.r_per_branch[i]}
            for i in range(table.N)
        ],
        "values": _value_block(sol.coeffs, sol.K),
        "prices": {"D": pt.D, "U": pt.U, "S": pt.S, "W": pt.W, "Kp": pt.Kp},
        "residuals": {"I": sol.residual_I, "II": sol.residual_II, "z": sol.z_at_solution,
                      "sum_PL": sol.sum_PL, "sum_S": sol.sum_S, "sum_W": sol.sum_W,
                      "sum_W_price": float(pt.W.sum())},
        "demand": [
            {"commodity": d.commodity, "production_value": d.production_value,
             "consumption_value": d.consumption_value, "surplus_value": d.surplus_value,
             "production_price": d.production_price, "consumption_price": d.consumption_price,
             "surplus_price": d.surplus_price, "stock_dependent": d.stock_dependent}
            for d in demand
        ],
        "notes": list(sol.notes),
    }
    if sol.zero_fixed is not None:
        z = sol.zero_fixed
        report["eigen"] = {"rate": z.eigen_rate, "x_unit": z.x_unit, "q_star": z.q_star}
    repricing = sol.machine_repricing()
    if repricing is not None:
        report["next_fixed_capital_cost"] = repricing
    return report


def validate_report(report: dict, rtol: float = 1e-9) -> list[str]:
    """Names of the invariants a stored report violates.

    Checks the stored figures against each other and against the echoed
    input table: both conservation equalities, S_i = r_i Kp_i, the price
    table implied by x and K, the value table implied by K, and signs.
    """
    try:
        table = table_from_dict(report["input"])
        rows = report["branches"]
        K = np.array([float(b["K"]) for b in rows])
        x = np.array([float(b["x"]) for b in rows])
        r = np.array([float(b["r"]) for b in rows])
        Kp = np.array([float(b["Kp"]) for b in rows])
        val = {k: np.asarray(v, dtype=float) for k, v in report["values"].items()}
        pr = {k: np.asarray(v, dtype=float) for k, v in report["prices"].items()}
    except (KeyError, TypeError, ValueError, InputError, StructuralError) as exc:
        raise InputError(f"report is missing or has malformed fields: {exc}") from exc
    if len(rows) != table.N:
        raise InputError("report branch rows do not match the input table")

    def close(a, b, scale) -> bool:
        return bool(np.all(np.abs(np.asarray(a) - np.asarray(b)) <= rtol * max(scale, 1.0)))

    bad = []
    sum_PL = float(val["PL"].sum())
    sum_W = float(val["W"].sum())
    if abs(float(pr["S"].sum()) - sum_PL) > (rtol * sum_PL if sum_PL > 0 else 1e-12):
        bad.append("residual_I")
    if abs(float(x @ val["W"]) - sum_W) > rtol * sum_W:
        bad.append("residual_II")
    if not close(pr["S"], r * pr["Kp"], float(np.abs(pr["S"]).max())):
        bad.append("S=rKp")
    coeffs = derive_coefficients(table)
    ref = _value_block(coeffs, K)
    if not all(close(val[k], ref[k], float(K.sum())) for k in ref):
        bad.append("value_table")
    U_price = val["U"] * x[None, :]
    W_price = x * val["W"]
    S = W_price - val["D"] - U_price.sum(axis=1)
    Kp_calc = coeffs.f * K + U_price.sum(axis=1)
    scale = float(np.abs(W_price).sum())
    if not (close(pr["U"], U_price, scale) and close(pr["W"], W_price, scale) and close(pr["S"], S, scale)
            and close(pr["Kp"], Kp_calc, scale) and close(Kp, Kp_calc, scale)):
        bad.append("price_table")
    if table.K_total is not None and abs(K.sum() - table.K_total) > rtol * table.K_total:
        bad.append("K_total")
    if np.any(K < -rtol * K.sum()):
        bad.append("K")
    if np.any(x <= 0):
        bad.append("x")
    return bad


# ---------------------------------------------------------------------------
# text rendering


def precision() -> int:
    raw = os.environ.get(PRECISION_ENV)
    if raw is None or raw == "":
        return DEFAULT_PRECISION
    try:
        p = int(raw)
    except ValueError:
        raise ConfigurationError(f"{PRECISION_ENV} must be an integer, got {raw!r}") from None
    if not 6 <= p <= 17:
        raise ConfigurationError(f"{PRECISION_ENV} must lie in 6..17, got {p}")
    return p


def fmt(value, digits: Optional[int] = None) -> str:
    digits = precision() if digits is None else digits
    v = float(value)
    if v == 0.0:
        return "0"
    return format(v, f".{digits}g")


def render_grid(title: str, header: list[str], rows: list[list], digits: Optional[int] = None) -> str:
    cells = [[str(c) if isinstance(c, str) else fmt(c, digits) for c in row] for row in rows]
    widths = [max(len(h), *(len(r[k]) for r in cells)) for k, h in enumerate(header)]
    lines = [title]
    lines.append("  ".join(h.rjust(w) for h, w in zip(header, widths)))
    for r in cells:
        lines.append("  ".join(c.rjust(w) for c, w in zip(r, widths)))
    return "\n".join(lines)


def _paired_tables(names, D, U, last_label, last, W, K, K_label, title, digits):
    N = len(names)
    header = ["branch", "F/n"] + list(names) + [last_label, "W", K_label]
    rows = [[names[i], D[i], *U[i], last[i], W[i], K[i]] for i in range(N)]
    rows.append(["total", D.sum(), *U.sum(axis=0), last.sum(), W.sum(), K.sum()])
    return render_grid(title, header, rows, digits)


def render_solution(report: dict, digits: Optional[int] = None) -> str:
    names = [b["name"] for b in report["branches"]]
    v = {k: np.asarray(a, dtype=float) for k, a in report["values"].items()}
    p = {k: np.asarray(a, dtype=float) for k, a in report["prices"].items()}
    parts = [
        f"method: {report['method']}",
        f"r* = {fmt(report['r_star'], digits)}  (reference branch {report['reference_branch']})",
        "",
        _paired_tables(names, v["D"], v["U"], "PL", v["PL"], v["W"], v["K"], "K", "VALUES", digits),
        "",
        _paired_tables(names, p["D"], p["U"], "S", p["S"], p["W"], p["Kp"], "Kp", "PRICES", digits),
        "",
        render_grid("BRANCHES", ["branch", "K", "Kp", "x", "r"],
                    [[b["name"], b["K"], b["Kp"], b["x"], b["r"]] for b in report["branches"]], digits),
        "",
    ]
    res = report["residuals"]
    parts.append(f"|sum S - sum PL| = {fmt(res['I'], 3)}   |sum xW - sum W| = {fmt(res['II'], 3)}")
    dem = report["demand"]
    rows = [[d["commodity"], d["surplus_value"], d["surplus_price"] if d["surplus_price"] is not None else "-",
             "yes" if d["stock_dependent"] else "no"] for d in dem]
    parts += ["", render_grid("DEMAND (production - consumption)",
                              ["commodity", "value", "price", "stock-dependent"], rows, digits)]
    if "next_fixed_capital_cost" in report:
        parts += ["", render_grid("NEXT-PERIOD FIXED CAPITAL AT PRICE", ["branch", "x_m F"],
                                  [[n, c] for n, c in zip(names, report["next_fixed_capital_cost"])], digits)]
    for note in report.get("notes", []):
        parts.append(f"note: {note}")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# CSV


def write_csv(fh, header: list[str], rows: list[list]) -> None:
    """Numbers in ``repr`` form; NaN as an empty field."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if isinstance(c, float) and math.isnan(c) else
                    (repr(float(c)) if isinstance(c, (float, np.floating)) else c) for c in row])
