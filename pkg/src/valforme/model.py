"""Economy tables, capital-normalized coefficients and demand checks.

An :class:`EconomyTable` holds absolute figures (monetary units per
production cycle) for N branches, each producing one commodity.  The
per-branch consumption matrix ``U`` generalizes the E/C/V columns of the
classic tables; its ``wage_index`` column is variable capital.  When a
``machine_index`` is set, fixed capital is produced inside the economy and
the machine column of ``U`` must be zero (machines are bought once per
amortization period, through ``F``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import StructuralError


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EconomyTable:
    branch_names: tuple
    F: np.ndarray
    U: np.ndarray
    e_rates: np.ndarray
    n_cycles: int
    wage_index: int
    machine_index: Optional[int] = None
    K_total: Optional[float] = None
    roles: tuple = ()
    produces: tuple = ()

    def __post_init__(self):
        names = tuple(str(b) for b in self.branch_names)
        N = len(names)
        object.__setattr__(self, "branch_names", names)
        object.__setattr__(self, "F", _frozen(self.F))
        object.__setattr__(self, "U", _frozen(self.U))
        object.__setattr__(self, "e_rates", _frozen(self.e_rates))
        object.__setattr__(self, "roles", tuple(self.roles) if self.roles else names)
        object.__setattr__(self, "produces", tuple(self.produces) if self.produces else tuple(range(N)))
        if self.F.shape != (N,) or self.U.shape != (N, N) or self.e_rates.shape != (N,):
            raise StructuralError(
                f"inconsistent shapes: {N} branches, F{self.F.shape}, U{self.U.shape}, e{self.e_rates.shape}"
            )
        if sorted(self.produces) != list(range(N)):
            raise StructuralError("each branch must produce exactly one distinct commodity")
        if tuple(self.produces) != tuple(range(N)):
            raise StructuralError("branch i must produce commodity i")
        if int(self.n_cycles) != self.n_cycles or self.n_cycles < 1:
            raise StructuralError(f"amortization period must be a positive integer, got {self.n_cycles}")
        object.__setattr__(self, "n_cycles", int(self.n_cycles))
        if not 0 <= self.wage_index < N:
            raise StructuralError(f"wage index {self.wage_index} out of range")
        if self.machine_index is not None:
            if not 0 <= self.machine_index < N or self.machine_index == self.wage_index:
                raise StructuralError(f"invalid machine index {self.machine_index}")
            if np.any(self.U[:, self.machine_index] != 0):
                raise StructuralError(
                    "machine commodity enters only through fixed capital; its U column must be zero",
                    branch=names[self.machine_index],
                )
        if not (np.all(np.isfinite(self.F)) and np.all(np.isfinite(self.U)) and np.all(np.isfinite(self.e_rates))):
            raise StructuralError("table has non-finite entries")
        if np.any(self.F < 0) or np.any(self.U < 0):
            raise StructuralError("capital components must be nonnegative")
        for i, name in enumerate(names):
            if not self.K[i] > 0:
                raise StructuralError(f"branch {name!r} has non-positive capital K={self.K[i]}", branch=name)
            if self.PL[i] < 0:
                raise StructuralError(f"branch {name!r} has negative surplus value", branch=name)

    @property
    def N(self) -> int:
        return len(self.branch_names)

    @property
    def K(self) -> np.ndarray:
        return self.F + self.U.sum(axis=1)

    @property
    def V(self) -> np.ndarray:
        return self.U[:, self.wage_index]

    @property
    def PL(self) -> np.ndarray:
        return self.e_rates * self.V

    @property
    def D(self) -> np.ndarray:
        return self.F / self.n_cycles

    @property
    def W(self) -> np.ndarray:
        return self.D + self.U.sum(axis=1) + self.PL

    @property
    def total_capital(self) -> float:
        """K_total when given, otherwise the sum of branch capitals."""
        return float(self.K_total) if self.K_total is not None else float(self.K.sum())

    def index_of(self, key) -> int:
        """Branch index from a name, a role letter or an integer (0-based)."""
        if isinstance(key, (int, np.integer)):
            if 0 <= key < self.N:
                return int(key)
            raise KeyError(key)
        if key in self.branch_names:
            return self.branch_names.index(key)
        if key in self.roles and self.roles.count(key) == 1:
            return self.roles.index(key)
        raise KeyError(f"unknown branch or commodity {key!r}")

    def luxury_indices(self) -> list[int]:
        return luxury_indices(self.U, self.machine_index)

    def scaled(self, K) -> "EconomyTable":
        """Same coefficients, rescaled so branch i commits capital ``K[i]``."""
        factor = np.asarray(K, dtype=float) / self.K
        return EconomyTable(
            branch_names=self.branch_names,
            F=self.F * factor,
            U=self.U * factor[:, None],
            e_rates=self.e_rates,
            n_cycles=self.n_cycles,
            wage_index=self.wage_index,
            machine_index=self.machine_index,
            K_total=self.K_total,
            roles=self.roles,
        )

    def replace(self, **changes) -> "EconomyTable":
        kwargs = dict(
            branch_names=self.branch_names,
            F=self.F,
            U=self.U,
            e_rates=self.e_rates,
            n_cycles=self.n_cycles,
            wage_index=self.wage_index,
            machine_index=self.machine_index,
            K_total=self.K_total,
            roles=self.roles,
        )
        kwargs.update(changes)
        return EconomyTable(**kwargs)


def luxury_indices(u: np.ndarray, machine_index: Optional[int]) -> list[int]:
    """Branches whose commodity nobody consumes (zero column, not the machine)."""
    return [j for j in range(u.shape[0]) if j != machine_index and not np.any(u[:, j] != 0)]


@dataclass(frozen=True, eq=False)
class TechCoefficients:
    """Per-unit-of-capital coefficients of each branch."""

    f: np.ndarray
    d: np.ndarray
    u: np.ndarray
    pl: np.ndarray
    w: np.ndarray
    n_cycles: int
    wage_index: int
    machine_index: Optional[int] = None
    branch_names: tuple = ()

    @property
    def N(self) -> int:
        return self.u.shape[0]

    @property
    def v(self) -> np.ndarray:
        return self.u[:, self.wage_index]

    @property
    def zero_fixed(self) -> bool:
        return not np.any(self.f != 0)

    @property
    def no_surplus(self) -> bool:
        return not np.any(self.pl != 0)

    def luxury_indices(self) -> list[int]:
        return luxury_indices(self.u, self.machine_index)

    def socio_technical_matrix(self) -> np.ndarray:
        """A[i][j] = u[i][j] / w[i]; its Perron root is 1/(1+r) when F = 0."""
        return self.u / self.w[:, None]

    def with_surplus_rates(self, pl) -> "TechCoefficients":
        pl = _frozen(pl)
        return TechCoefficients(
            f=self.f, d=self.d, u=self.u, pl=pl, w=_frozen(self.d + self.u.sum(axis=1) + pl),
            n_cycles=self.n_cycles, wage_index=self.wage_index,
            machine_index=self.machine_index, branch_names=self.branch_names,
        )


def derive_coefficients(table: EconomyTable) -> TechCoefficients:
    """Normalize every branch row of ``table`` by its committed capital K_i."""
    K = table.K
    for i, name in enumerate(table.branch_names):
        if not K[i] > 0:
            raise StructuralError(f"branch {name!r} has non-positive capital", branch=name)
    u = table.U / K[:, None]
    f = table.F / K
    d = f / table.n_cycles
    pl = table.e_rates * u[:, table.wage_index]
    w = d + u.sum(axis=1) + pl
    return TechCoefficients(
        f=_frozen(f), d=_frozen(d), u=_frozen(u), pl=_frozen(pl), w=_frozen(w),
        n_cycles=table.n_cycles, wage_index=table.wage_index,
        machine_index=table.machine_index, branch_names=table.branch_names,
    )


def table_from_coefficients(coeffs: TechCoefficients, K, e_rates=None) -> EconomyTable:
    """Absolute table committing capital ``K`` under ``coeffs``."""
    K = np.asarray(K, dtype=float)
    v = coeffs.v
    if e_rates is None:
        e_rates = np.divide(coeffs.pl, v, out=np.zeros_like(v), where=v != 0)
    names = coeffs.branch_names or tuple(f"B{i + 1}" for i in range(coeffs.N))
    return EconomyTable(
        branch_names=names,
        F=coeffs.f * K,
        U=coeffs.u * K[:, None],
        e_rates=e_rates,
        n_cycles=coeffs.n_cycles,
        wage_index=coeffs.wage_index,
        machine_index=coeffs.machine_index,
        K_total=float(K.sum()),
    )


@dataclass(frozen=True)
class CommoditySurplus:
    commodity: str
    production_value: float
    consumption_value: float
    surplus_value: float
    production_price: Optional[float] = None
    consumption_price: Optional[float] = None
    surplus_price: Optional[float] = None

    @property
    def stock_dependent(self) -> bool:
        """Consumption exceeds production; only sustainable from earlier stocks."""
        s = self.surplus_price if self.surplus_price is not None else self.surplus_value
        return s < 0


@dataclass(frozen=True)
class DemandReport:
    entries: tuple = field(default_factory=tuple)

    @property
    def stock_dependent(self) -> list[str]:
        return [e.commodity for e in self.entries if e.stock_dependent]

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]


def _demand_terms(coeffs: TechCoefficients, K: np.ndarray, x: np.ndarray):
    prod = np.empty(coeffs.N)
    cons = np.empty(coeffs.N)
    m = coeffs.machine_index
    for j in range(coeffs.N):
        if j == m:
            prod[j] = K[j] * coeffs.w[j] * x[j]
            cons[j] = K @ coeffs.d
        else:
            imported = coeffs.d[j] if m is None else 0.0
            prod[j] = K[j] * (x[j] * coeffs.w[j] - imported)
            cons[j] = x[j] * (K @ coeffs.u[:, j])
    return prod, cons


def check_demand(table: EconomyTable, solution=None) -> DemandReport:
    """Production minus total consumption of each commodity.

    Uses the solution's allocation (and prices) when given, otherwise the
    table's own capitals valued at x = 1.  With imported fixed capital the
    amortization share is deducted from production before comparing.
    """
    coeffs = derive_coefficients(table)
    if solution is not None:
        K = np.asarray(solution.K, dtype=float)
    else:
        K = table.K
    ones = np.ones(table.N)
    pv, cv = _demand_terms(coeffs, K, ones)
    entries = []
    if solution is not None:
        pp, cp = _demand_terms(coeffs, K, np.asarray(solution.x, dtype=float))
    for j in range(table.N):
        kw = {}
        if solution is not None:
            kw = dict(production_price=float(pp[j]), consumption_price=float(cp[j]),
                      surplus_price=float(pp[j] - cp[j]))
        entries.append(CommoditySurplus(table.branch_names[j], float(pv[j]), float(cv[j]),
                                        float(pv[j] - cv[j]), **kw))
    return DemandReport(tuple(entries))


@dataclass(frozen=True)
class OrganicComposition:
    value_co: float
    price_co: float


def organic_composition(table: EconomyTable, solution=None) -> OrganicComposition:
    """Aggregate (F + non-wage inputs) / V, in value and in price.

    With a solution, the aggregates are taken at the solution's allocation
    and the price version values each input j at x_j.
    """
    if solution is not None:
        table = table.scaled(solution.K)
        x = np.asarray(solution.x, dtype=float)
    else:
        x = np.ones(table.N)
    wi = table.wage_index
    V = table.V.sum()
    if V == 0:
        raise ZeroDivisionError("aggregate variable capital is zero")
    col = table.U.sum(axis=0)
    nonwage = np.delete(np.arange(table.N), wi)
    value_co = (table.F.sum() + col[nonwage].sum()) / V
    price_co = (table.F.sum() + col[nonwage] @ x[nonwage]) / (x[wi] * V)
    return OrganicComposition(float(value_co), float(price_co))
