"""Luxury-branch constructions built on top of the solver."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import (
    ConstraintError,
    ConvergenceError,
    DegenerateConstraintsError,
    SingularMatrixError,
    UnsupportedConstructionError,
)
from .linalg import solve_linear
from .model import EconomyTable, TechCoefficients, derive_coefficients, table_from_coefficients
from .solver import (
    VALUE,
    _constraint_row,
    _finalize,
    ConstraintSet,
    ReproductionConstraint,
    TransformationSolution,
    solve,
)

K3_RTOL = 1e-12
MAX_K3_ITER = 50


@dataclass(frozen=True, eq=False)
class BortkiewiczResult:
    table: EconomyTable
    solution: TransformationSolution
    iterations: int
    K3_history: tuple


def _base_coeffs(base) -> tuple[TechCoefficients, Optional[np.ndarray], np.ndarray]:
    if isinstance(base, TransformationSolution):
        coeffs = base.coeffs
        K = base.K
        e = np.divide(coeffs.pl, coeffs.v, out=np.zeros(coeffs.N), where=coeffs.v != 0)
        return coeffs, K, e
    if isinstance(base, EconomyTable):
        return derive_coefficients(base), base.K, base.e_rates
    raise TypeError("base must be an EconomyTable or a TransformationSolution")


def build_bortkiewicz(base: Union[EconomyTable, TransformationSolution], K_total: Optional[float] = None,
                      d_L: float = 0.0, luxury_name: str = "L") -> BortkiewiczResult:
    """Add a luxury branch fed exactly by the surplus of a 3-branch economy.

    The luxury branch consumes W_j minus what the basic branches consume of
    each commodity j, so every commodity is exactly reproduced.  Capital of
    the wage-goods branch follows

        K_3 = [PL (1 + r) + r (n D_L + D)] / w_3,

    with PL and D summed over the basic branches.  Since PL and D depend on
    the allocation when fixed capital is present, K_3 is fed back into the
    solver until it stops changing.  ``d_L`` is the luxury branch's
    amortization per unit of its capital.
    """
    coeffs, K0, e = _base_coeffs(base)
    if coeffs.N != 3:
        raise UnsupportedConstructionError(f"the construction needs a 3-branch base, got {coeffs.N}")
    if coeffs.machine_index is not None:
        raise UnsupportedConstructionError("the construction assumes imported fixed capital")
    if np.any(np.abs(e - 1.0) > 1e-12):
        raise UnsupportedConstructionError("the construction requires every exploitation rate to be 1")
    if not 0.0 <= d_L * coeffs.n_cycles < 1.0:
        raise UnsupportedConstructionError("luxury fixed-capital share n*d_L must lie in [0, 1)")
    if K_total is None:
        K_total = float(K0.sum()) if K0 is not None else None
    if K_total is None:
        raise ConstraintError("K_total is required")
    wi = coeffs.wage_index
    n = coeffs.n_cycles

    # seed from the base proportions at the value rate of profit
    share = K0 / K0.sum()
    r0 = float(share @ coeffs.pl)
    pl0, dd0 = float(share @ coeffs.pl), float(share @ coeffs.d)
    K123 = K_total / (1.0 + (pl0 + dd0) / (1.0 - n * d_L))
    K_L = K_total - K123
    K3 = (K123 * pl0 * (1.0 + r0) + r0 * (n * d_L * K_L + K123 * dd0)) / coeffs.w[wi]
    history = [K3]
    sol = None
    for it in range(1, MAX_K3_ITER + 1):
        sol = solve(coeffs, ConstraintSet({wi: K3}), K_total=K123)
        PL = sol.sum_PL
        D = float(sol.K @ coeffs.d)
        r = sol.r_star
        K_L = (D + PL) / (1.0 - n * d_L)
        K123_new = K_total - K_L
        K3_new = (PL * (1.0 + r) + r * (n * d_L * K_L + D)) / coeffs.w[wi]
        history.append(K3_new)
        done = abs(K3_new - K3) <= K3_RTOL * abs(K3) and abs(K123_new - K123) <= K3_RTOL * K_total
        K3, K123 = K3_new, K123_new
        if done:
            break
    else:
        raise ConvergenceError(f"K3 loop did not settle in {MAX_K3_ITER} iterations", last_estimate=K3)
    sol = solve(coeffs, ConstraintSet({wi: K3}), K_total=K123)

    basic = table_from_coefficients(coeffs, sol.K, e_rates=np.ones(3))
    W = basic.W
    lux_inputs = W - basic.U.sum(axis=0)
    K_L = float(K_total - sol.K.sum())
    F_L = n * d_L * K_L
    names = tuple(coeffs.branch_names or ("E", "C", "V")) + (luxury_name,)
    U = np.zeros((4, 4))
    U[:3, :3] = basic.U
    U[3, :3] = lux_inputs
    table = EconomyTable(
        branch_names=names,
        F=np.append(basic.F, F_L),
        U=U,
        e_rates=np.ones(4),
        n_cycles=n,
        wage_index=wi,
        K_total=K_total,
    )
    full = solve(table, ConstraintSet({wi: K3, 3: float(table.K[3])}), K_total=K_total)
    return BortkiewiczResult(table=table, solution=full, iterations=it, K3_history=tuple(history))


def marx_constraints(coeffs: TechCoefficients, space: str = VALUE) -> ConstraintSet:
    """Reproduction constraints on every basic non-wage commodity."""
    lux = coeffs.luxury_indices()
    picks = [j for j in range(coeffs.N) if j != coeffs.wage_index and j not in lux]
    return ConstraintSet(reproduction_constraints=tuple(ReproductionConstraint(j, space) for j in picks))


def solve_marx_simple_reproduction(table: EconomyTable, K_total: Optional[float] = None,
                                   space: str = VALUE) -> TransformationSolution:
    """Luxury branch plus reproduction of every non-wage basic commodity.

    With four branches (one luxury) the two constraints close the
    allocation system; the wage-goods balance then follows.  When every
    branch has the same surplus share, x = 1 and Equality II says nothing;
    since the wage-goods balance is implied by the other rows, the
    allocation is closed by having wages buy exactly the wage goods (so
    the luxury branch absorbs the whole surplus value).
    """
    coeffs = derive_coefficients(table)
    lux = coeffs.luxury_indices()
    if table.N != 4 or len(lux) != 1:
        raise UnsupportedConstructionError("expected four branches with exactly one luxury branch")
    cons = marx_constraints(coeffs, space)
    total = table.total_capital if K_total is None else K_total
    if np.ptp(coeffs.pl) <= 1e-12 * np.abs(coeffs.pl).max():
        return _equal_compositions(coeffs, cons, total)
    return solve(coeffs, cons, K_total=total)


def _equal_compositions(coeffs: TechCoefficients, cons: ConstraintSet, K_total: float) -> TransformationSolution:
    N = coeffs.N
    x = np.ones(N)
    A = np.zeros((N, N))
    b = np.zeros(N)
    A[0] = 1.0
    b[0] = K_total
    for row, c in enumerate(cons.reproduction_constraints, start=1):
        A[row] = _constraint_row(coeffs, x, c)
    A[N - 1] = -coeffs.v
    A[N - 1, coeffs.wage_index] += coeffs.w[coeffs.wage_index]
    try:
        K = solve_linear(A, b)
    except SingularMatrixError as exc:
        raise DegenerateConstraintsError("reproduction system is singular") from exc
    r = float(coeffs.pl[0])
    return _finalize(coeffs, x, K, np.full(N, r), "equal-composition", cons,
                     notes=("equal surplus shares: x = 1; wages buy the wage goods in place of Equality II",))


def wage_balance_residual(sol: TransformationSolution) -> float:
    """Wage-goods plus luxury production minus all wages and surplus value.

    Under the Marx-type constraints this vanishes: the two consumer branches
    together absorb exactly sum(V) + sum(PL), in value.
    """
    c = sol.coeffs
    K = sol.K
    produced = sum(K[j] * c.w[j] for j in [c.wage_index] + c.luxury_indices())
    absorbed = float(K @ (c.v + c.pl))
    return float(produced - absorbed)
