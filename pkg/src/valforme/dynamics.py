"""Capital-reallocation simulations and the Okishio experiment."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, ValformeError
from .model import EconomyTable, OrganicComposition, TechCoefficients, derive_coefficients, organic_composition
from .solver import ConstraintSet, TransformationSolution, solve

CSV_FIXED = ("r_avg", "sum_S", "sum_PL", "co_value", "co_price", "costs_price", "dS1_dK1", "S1_over_K1")


@dataclass(frozen=True)
class ScenarioConfig:
    """Iterated solve with shrinking rate differentials.

    At iteration i (0-based) the offsets are ``offset_pattern * dr_i`` with
    dr_i = delta_r0 - i * delta_r_decrement, and branch ``decremented_branch``
    holds capital K_initial - i * K_decrement.
    """

    table: EconomyTable
    delta_r0: float
    delta_r_decrement: float
    decremented_branch: int
    K_initial: float
    K_decrement: float
    iterations: int
    offset_pattern: Sequence[float] = (1.0, 0.0, -1.0)
    reference_branch: int = 1
    K_total: Optional[float] = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigurationError("iteration count must be at least 1")
        if self.delta_r_decrement < 0 or self.K_decrement < 0:
            raise ConfigurationError("decrements must be nonnegative")
        N = self.table.N
        if len(self.offset_pattern) != N:
            raise ConfigurationError(f"offset pattern needs {N} entries")
        if self.offset_pattern[self.reference_branch] != 0:
            raise ConfigurationError("the reference branch must have a zero offset")
        if not 0 <= self.decremented_branch < N:
            raise ConfigurationError(f"decremented branch {self.decremented_branch} out of range")

    @property
    def total(self) -> float:
        return self.table.total_capital if self.K_total is None else float(self.K_total)

    def delta_r(self, i: int) -> float:
        dr = self.delta_r0 - i * self.delta_r_decrement
        # snap rounding residue so the crossing iteration is exactly uniform
        if abs(dr) <= 1e-12 * max(abs(self.delta_r0), self.delta_r_decrement, 1e-300):
            dr = 0.0
        return dr

    def constraints(self, i: int) -> ConstraintSet:
        dr = self.delta_r(i)
        offsets = [p * dr for p in self.offset_pattern]
        K_b = self.K_initial - i * self.K_decrement
        return ConstraintSet({self.decremented_branch: K_b}, offsets, (), self.reference_branch)


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    iteration: int
    K: np.ndarray
    r: np.ndarray
    r_avg: float
    sum_S: float
    sum_PL: float
    co_value: float
    co_price: float
    costs_price: float
    S: np.ndarray
    solution: TransformationSolution


@dataclass(eq=False)
class Trajectory:
    records: list = field(default_factory=list)
    reason: Optional[str] = None

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(rec, name) for rec in self.records])

    def dS_dK(self, branch: int = 0) -> np.ndarray:
        """Forward difference of S_i against K_i; NaN on the last record."""
        out = np.full(len(self.records), np.nan)
        for k in range(len(self.records) - 1):
            a, b = self.records[k], self.records[k + 1]
            dK = b.K[branch] - a.K[branch]
            if dK != 0:
                out[k] = (b.S[branch] - a.S[branch]) / dK
        return out

    def S_over_K(self, branch: int = 0) -> np.ndarray:
        return np.array([rec.S[branch] / rec.K[branch] for rec in self.records])

    def equalization_index(self, a: int = 0, b: int = -1, atol: float = 1e-12) -> Optional[int]:
        """First record where r_a - r_b reaches zero (within atol) or changes sign."""
        first = None
        for rec in self.records:
            diff = rec.r[a] - rec.r[b]
            if first is None:
                first = diff
            if abs(diff) <= atol or (diff > 0) != (first > 0):
                return rec.iteration
        return None


def _record(i: int, table: EconomyTable, sol: TransformationSolution) -> TrajectoryRecord:
    oc: OrganicComposition = organic_composition(table, sol)
    pt = sol.price_table
    costs = float(pt.D.sum() + pt.U.sum())
    return TrajectoryRecord(
        iteration=i,
        K=sol.K.copy(),
        r=sol.r_per_branch.copy(),
        r_avg=sol.sum_S / sol.K_total,
        sum_S=sol.sum_S,
        sum_PL=sol.sum_PL,
        co_value=oc.value_co,
        co_price=oc.price_co,
        costs_price=costs,
        S=pt.S.copy(),
        solution=sol,
    )


def run_convergence(config: ScenarioConfig) -> Trajectory:
    """Step the offsets and the decremented capital, solving at each step.

    The run stops early, keeping what it has, when a step has no feasible
    solution.
    """
    table = config.table
    coeffs = derive_coefficients(table)
    traj = Trajectory()
    for i in range(config.iterations):
        try:
            sol = solve(coeffs, config.constraints(i), K_total=config.total)
        except ValformeError as exc:
            if i == 0:
                raise ConfigurationError(f"first iteration is not solvable: {exc}") from exc
            traj.reason = f"iteration {i}: {type(exc).__name__}: {exc}"
            break
        traj.records.append(_record(i, table, sol))
    return traj


def convergence_criterion(trajectory: Trajectory) -> list[bool]:
    """dS_i/dK_i < S_i/K_i for the most profitable branch at each step.

    One entry per pair of consecutive records, judged at the earlier one.
    """
    if len(trajectory) < 2:
        raise ValueError("the criterion needs at least two records")
    out = []
    for k in range(len(trajectory) - 1):
        a, b = trajectory[k], trajectory[k + 1]
        i = int(np.argmax(a.r))
        dK = b.K[i] - a.K[i]
        if dK == 0:
            out.append(True)
            continue
        out.append(bool((b.S[i] - a.S[i]) / dK < a.S[i] / a.K[i]))
    return out


def trajectory_rows(trajectory: Trajectory) -> tuple[list[str], list[list[float]]]:
    """Header and numeric rows of the trajectory CSV."""
    if not trajectory.records:
        return [], []
    N = len(trajectory[0].K)
    header = ["iteration"] + [f"K_{i + 1}" for i in range(N)] + [f"r_{i + 1}" for i in range(N)] + list(CSV_FIXED)
    dS = trajectory.dS_dK(0)
    SK = trajectory.S_over_K(0)
    rows = []
    for k, rec in enumerate(trajectory.records):
        rows.append(
            [rec.iteration, *rec.K, *rec.r, rec.r_avg, rec.sum_S, rec.sum_PL, rec.co_value, rec.co_price,
             rec.costs_price, dS[k], SK[k]]
        )
    return header, rows


# ---------------------------------------------------------------------------
# Okishio


@dataclass(frozen=True)
class OkishioPerturbation:
    """New fixed-capital share f and wage share v of one branch (same K)."""

    branch: int
    f: float
    v: float


@dataclass(frozen=True, eq=False)
class OkishioReport:
    r: float
    S: float
    S_transient: float
    r_transient: float
    r_final: float
    base: TransformationSolution
    final: TransformationSolution
    branch: int

    @property
    def innovation_incentive(self) -> bool:
        return self.r_transient > self.r

    @property
    def ordering_holds(self) -> bool:
        return self.r_transient > self.r > self.r_final


def perturbed_coefficients(coeffs: TechCoefficients, p: OkishioPerturbation) -> TechCoefficients:
    """Swap one branch's f and v, keeping its surplus share pl and capital."""
    b = p.branch
    u = coeffs.u.copy()
    u[b, coeffs.wage_index] = p.v
    f = coeffs.f.copy()
    f[b] = p.f
    if abs(f[b] + u[b].sum() - 1.0) > 1e-12:
        raise ConfigurationError(
            f"perturbation must keep branch capital constant: f + sum(u) = {f[b] + u[b].sum():.15g}"
        )
    d = f / coeffs.n_cycles
    w = d + u.sum(axis=1) + coeffs.pl
    for arr in (u, f, d, w):
        arr.setflags(write=False)
    return TechCoefficients(f=f, d=d, u=u, pl=coeffs.pl, w=w, n_cycles=coeffs.n_cycles,
                            wage_index=coeffs.wage_index, machine_index=coeffs.machine_index,
                            branch_names=coeffs.branch_names)


def run_okishio(base: EconomyTable, perturbation: OkishioPerturbation, K_freeze: Mapping[int, float],
                K_total: Optional[float] = None) -> OkishioReport:
    """Base solve, transient profit of the innovating branch, re-solve.

    The transient phase keeps old prices and capitals:
        S' = S + x_v (V - V') - (D' - D),
        r' = S' / (F' + sum_j x_j U'_bj).
    """
    coeffs = derive_coefficients(base)
    total = base.total_capital if K_total is None else K_total
    cons = ConstraintSet(dict(K_freeze))
    first = solve(coeffs, cons, K_total=total)
    b = perturbation.branch
    wi = coeffs.wage_index
    Kb = first.K[b]
    x = first.x
    D, D2 = coeffs.d[b] * Kb, perturbation.f / coeffs.n_cycles * Kb
    V, V2 = coeffs.v[b] * Kb, perturbation.v * Kb
    S = float(first.price_table.S[b])
    S2 = S + x[wi] * (V - V2) - (D2 - D)
    U2 = coeffs.u[b] * Kb
    U2[wi] = V2
    r2 = S2 / (perturbation.f * Kb + float(U2 @ x))
    new = perturbed_coefficients(coeffs, perturbation)
    final = solve(new, cons, K_total=total)
    return OkishioReport(
        r=float(first.r_per_branch[b]), S=S, S_transient=float(S2), r_transient=float(r2),
        r_final=float(final.r_per_branch[b]), base=first, final=final, branch=b,
    )
