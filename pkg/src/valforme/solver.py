"""Value to production-price transformation solver.

Three paths, chosen by :func:`solve`:

* fixed capital present: scan the reference rate, solve prices x(r) and the
  allocation K(x), and locate the first downward zero of the z-function;
* all fixed capital zero: the price system is homogeneous, so x is a
  Perron vector scaled by a modulus q that is fixed by the equalities;
* no surplus value anywhere: x = 1 and K solves the demand equalities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .errors import (
    ConstraintError,
    DegenerateConstraintsError,
    EigenDomainError,
    FixedCapitalChoiceError,
    InfeasibleAllocationError,
    NoSolutionError,
    NoUniqueAllocationError,
    SingularMatrixError,
)
from .linalg import determinant, dominant_eigenpair, solve_linear
from .model import EconomyTable, TechCoefficients, derive_coefficients

R_STEP = 1e-3
R_MAX = 10.0
Z_RTOL = 1e-12
R_XTOL = 1e-13
DERIV_STEP = 1e-7
INFEASIBLE_RTOL = 1e-9
RESIDUAL_RTOL = 1e-9
MAX_REFINE = 200

VALUE = "value"
PRICE = "price"


@dataclass(frozen=True)
class ReproductionConstraint:
    """Production of ``commodity`` equals its total consumption.

    In value space every term is at x = 1.  In price space production and
    circulating consumption are valued at x_j; machine amortization stays
    unpriced.  ``with_surplus`` adds the consumption of surplus value
    (unpriced), as when wage goods also absorb profits.
    """

    commodity: int
    space: str = VALUE
    with_surplus: bool = False

    def __post_init__(self):
        if self.space not in (VALUE, PRICE):
            raise ConstraintError(f"reproduction constraint space must be 'value' or 'price', got {self.space!r}")


@dataclass(frozen=True)
class ConstraintSet:
    fixed_k: Mapping[int, float] = field(default_factory=dict)
    profit_offsets: Optional[Sequence[float]] = None
    reproduction_constraints: tuple = ()
    reference_branch: int = 0

    def offsets(self, N: int) -> np.ndarray:
        if self.profit_offsets is None:
            return np.zeros(N)
        dr = np.asarray(self.profit_offsets, dtype=float)
        if dr.shape != (N,):
            raise ConstraintError(f"expected {N} profit offsets, got {dr.shape}")
        if dr[self.reference_branch] != 0.0:
            raise ConstraintError("the reference branch must have a zero offset")
        return dr

    def uniform(self) -> bool:
        return self.profit_offsets is None or not np.any(np.asarray(self.profit_offsets) != 0)

    def count(self) -> int:
        return len(self.fixed_k) + len(self.reproduction_constraints)

    def with_fixed(self, fixed_k: Mapping[int, float]) -> "ConstraintSet":
        return ConstraintSet(dict(fixed_k), self.profit_offsets, self.reproduction_constraints, self.reference_branch)


@dataclass(frozen=True, eq=False)
class PriceTable:
    """Absolute table at production prices; amortization D stays in value."""

    D: np.ndarray
    U: np.ndarray
    S: np.ndarray
    W: np.ndarray
    Kp: np.ndarray


@dataclass(frozen=True, eq=False)
class ZeroFixedSolve:
    eigen_rate: float
    x_unit: np.ndarray
    q_star: float
    x: np.ndarray


@dataclass(frozen=True, eq=False)
class TransformationSolution:
    coeffs: TechCoefficients
    x: np.ndarray
    r_star: float
    r_per_branch: np.ndarray
    K: np.ndarray
    Kp: np.ndarray
    price_table: PriceTable
    residual_I: float
    residual_II: float
    z_at_solution: float
    method: str
    zero_fixed: Optional[ZeroFixedSolve] = None
    constraints: Optional[ConstraintSet] = None
    notes: tuple = ()

    @property
    def K_total(self) -> float:
        return float(self.K.sum())

    @property
    def value_table(self) -> EconomyTable:
        from .model import table_from_coefficients

        return table_from_coefficients(self.coeffs, self.K)

    @property
    def sum_PL(self) -> float:
        return float(self.K @ self.coeffs.pl)

    @property
    def sum_S(self) -> float:
        return float(self.price_table.S.sum())

    @property
    def sum_W(self) -> float:
        return float(self.K @ self.coeffs.w)

    def machine_repricing(self) -> Optional[np.ndarray]:
        """Cost x_m * F_i of each branch's next fixed-capital purchase."""
        m = self.coeffs.machine_index
        if m is None:
            return None
        return self.x[m] * self.coeffs.f * self.K

    def check(self, rtol: float = RESIDUAL_RTOL) -> list[str]:
        """Names of violated solution invariants (empty when valid)."""
        bad = []
        pl = self.sum_PL
        if self.residual_I > (rtol * pl if pl > 0 else 1e-12):
            bad.append("residual_I")
        if self.residual_II > rtol * self.sum_W:
            bad.append("residual_II")
        if np.any(self.K < -INFEASIBLE_RTOL * self.K_total):
            bad.append("K")
        if np.any(self.x <= 0):
            bad.append("x")
        rel = np.abs(self.price_table.S - self.r_per_branch * self.Kp)
        if np.any(rel > rtol * np.maximum(np.abs(self.price_table.S), 1.0)):
            bad.append("S=rKp")
        return bad


# ---------------------------------------------------------------------------
# building blocks


def assemble_price_system(coeffs: TechCoefficients, r_ref: float, offsets=None):
    """Matrix and right-hand side of the branch price equations.

    Row i:  t_i * sum_j u_ij x_j - w_i x_i = -d_i (1 + n r_i),
    with r_i = r_ref + offsets[i] and t_i = 1 + r_i.
    """
    N = coeffs.N
    r = r_ref + (np.zeros(N) if offsets is None else np.asarray(offsets, dtype=float))
    t = 1.0 + r
    M = t[:, None] * coeffs.u
    M[np.diag_indices(N)] -= coeffs.w
    rhs = -coeffs.d * (1.0 + coeffs.n_cycles * r)
    return M, rhs


def solve_prices(coeffs: TechCoefficients, r_ref: float, offsets=None) -> np.ndarray:
    M, rhs = assemble_price_system(coeffs, r_ref, offsets)
    return solve_linear(M, rhs)


def z_function(coeffs: TechCoefficients, x, K) -> float:
    """(total profit - total surplus value) / total capital."""
    x = np.asarray(x, dtype=float)
    K = np.asarray(K, dtype=float)
    a = x * coeffs.w - coeffs.d - coeffs.u @ x - coeffs.pl
    return float(K @ a / K.sum())


def _constraint_row(coeffs: TechCoefficients, x: np.ndarray, c: ReproductionConstraint):
    """Coefficients g and rhs 0 of  production_j - consumption_j = 0  in K."""
    j = c.commodity
    if not 0 <= j < coeffs.N:
        raise ConstraintError(f"reproduction constraint names unknown commodity {j}")
    xj = x[j] if c.space == PRICE else 1.0
    g = -xj * coeffs.u[:, j]
    g[j] += xj * coeffs.w[j]
    if j == coeffs.machine_index:
        g -= coeffs.d
    if c.with_surplus:
        g -= coeffs.pl
    return g


def _k_system(coeffs: TechCoefficients, x: np.ndarray, K_total: float, constraints: ConstraintSet):
    N = coeffs.N
    if constraints.count() < N - 2:
        raise ConstraintError(
            f"{N} branches need {N - 2} fixed capitals or reproduction constraints, got {constraints.count()}"
        )
    if constraints.count() > N - 2:
        raise ConstraintError(
            f"{N} branches admit only {N - 2} fixed capitals or reproduction constraints, got {constraints.count()}"
        )
    A = np.zeros((N, N))
    b = np.zeros(N)
    A[0] = 1.0
    b[0] = K_total
    A[1] = coeffs.w * (1.0 - x)
    row = 2
    for i, amount in constraints.fixed_k.items():
        if not 0 <= i < N:
            raise ConstraintError(f"fixed capital names unknown branch {i}")
        A[row, i] = 1.0
        b[row] = amount
        row += 1
    for c in constraints.reproduction_constraints:
        A[row] = _constraint_row(coeffs, x, c)
        row += 1
    return A, b


def _duplicate_pair(A: np.ndarray, fixed: set) -> Optional[tuple]:
    free = [i for i in range(A.shape[1]) if i not in fixed]
    for a_pos, a in enumerate(free):
        for b in free[a_pos + 1 :]:
            ca, cb = A[:, a], A[:, b]
            scale = max(np.abs(ca).max(), np.abs(cb).max(), 1e-300)
            if np.all(np.abs(ca - cb) <= 1e-12 * scale):
                return a, b
    return None


def _solve_k_notes(coeffs, x, K_total, constraints, check: bool = True) -> tuple[np.ndarray, tuple]:
    x = np.asarray(x, dtype=float)
    A, b = _k_system(coeffs, x, K_total, constraints)
    notes = ()
    try:
        K = solve_linear(A, b)
    except SingularMatrixError as exc:
        pair = _duplicate_pair(A[:2], set(constraints.fixed_k))
        if pair is None or not constraints.fixed_k:
            raise DegenerateConstraintsError(
                f"capital-allocation system is singular (pivot {exc.pivot_index})"
            ) from exc
        old = next(iter(constraints.fixed_k))
        fixed = dict(constraints.fixed_k)
        amount = fixed.pop(old)
        fixed[pair[0]] = amount
        A, b = _k_system(coeffs, x, K_total, constraints.with_fixed(fixed))
        try:
            K = solve_linear(A, b)
        except SingularMatrixError as exc2:
            raise DegenerateConstraintsError("capital-allocation system is singular") from exc2
        notes = (f"branches {pair[0]} and {pair[1]} have identical allocation columns; "
                 f"fixed capital moved from branch {old} to branch {pair[0]}",)
    worst = int(np.argmin(K))
    if check and K[worst] < -INFEASIBLE_RTOL * K_total:
        raise InfeasibleAllocationError(
            f"branch {worst} would receive negative capital {K[worst]:.6g}", branch=worst, K=K
        )
    return K, notes


def solve_k(coeffs: TechCoefficients, x, K_total: float, constraints: ConstraintSet) -> np.ndarray:
    """Capital allocation meeting conservation, equality II and the constraints."""
    return _solve_k_notes(coeffs, x, K_total, constraints)[0]


def _refine(f: Callable[[float], float], a: float, fa: float, b: float, fb: float,
            ftol: float, xtol: float) -> float:
    """Illinois regula falsi on a sign-changing bracket, bisection as fallback."""
    side = 0
    best = a if abs(fa) < abs(fb) else b
    for _ in range(MAX_REFINE):
        c = b - fb * (b - a) / (fb - fa) if fb != fa else 0.5 * (a + b)
        if not (min(a, b) < c < max(a, b)):
            c = 0.5 * (a + b)
        fc = f(c)
        best = c
        if fc == 0.0:
            return c
        if (fc > 0) == (fb > 0):
            b, fb = c, fc
            if side == -1:
                fa *= 0.5
            side = -1
        else:
            a, fa = c, fc
            if side == 1:
                fb *= 0.5
            side = 1
        if abs(fc) <= ftol and abs(b - a) <= xtol * max(1.0, abs(c)):
            return c
        if abs(b - a) <= 4 * np.finfo(float).eps * max(1.0, abs(c)):
            return c
    return best


def _finalize(coeffs, x, K, r_vec, method, constraints=None, zero=None, notes=()) -> TransformationSolution:
    x = np.asarray(x, dtype=float)
    K = np.asarray(K, dtype=float)
    U_abs = coeffs.u * K[:, None]
    U_price = U_abs * x[None, :]
    D = coeffs.d * K
    W_price = x * coeffs.w * K
    S = W_price - D - U_price.sum(axis=1)
    Kp = coeffs.f * K + U_price.sum(axis=1)
    PL = coeffs.pl * K
    W = coeffs.w * K
    table = PriceTable(D=D, U=U_price, S=S, W=W_price, Kp=Kp)
    return TransformationSolution(
        coeffs=coeffs,
        x=x,
        r_star=float(r_vec[constraints.reference_branch if constraints else 0]),
        r_per_branch=np.asarray(r_vec, dtype=float),
        K=K,
        Kp=Kp,
        price_table=table,
        residual_I=float(abs(S.sum() - PL.sum())),
        residual_II=float(abs(W_price.sum() - W.sum())),
        z_at_solution=z_function(coeffs, x, K),
        method=method,
        zero_fixed=zero,
        constraints=constraints,
        notes=tuple(notes),
    )


# ---------------------------------------------------------------------------
# general case


def _z_of_r(coeffs, K_total, constraints, offsets, r):
    x = solve_prices(coeffs, r, offsets)
    K, notes = _solve_k_notes(coeffs, x, K_total, constraints)
    return z_function(coeffs, x, K), x, K, notes


def z_at_rate(coeffs: TechCoefficients, K_total: float, r: float,
              constraints: ConstraintSet = ConstraintSet()) -> float:
    """z at reference rate r with the (unchecked) allocation it implies.

    This is the function whose downward zero ``find_r_star`` locates; the
    allocation may contain negative capitals away from the root."""
    x = solve_prices(coeffs, r, constraints.offsets(coeffs.N))
    K, _ = _solve_k_notes(coeffs, x, K_total, constraints, check=False)
    return z_function(coeffs, x, K)


def find_r_star(coeffs: TechCoefficients, K_total: float, constraints: ConstraintSet = ConstraintSet(),
                r_step: float = R_STEP, r_max: float = R_MAX, r_min: float = 0.0) -> TransformationSolution:
    """First downward zero of z(r) with a nonnegative allocation.

    z is evaluated with the unchecked allocation, so sign changes are seen
    even where K briefly leaves the feasible region; feasible windows can be
    much narrower than ``r_step``, notably next to poles of the allocation
    system.  Each bracket is refined and the root kept only if its
    allocation is feasible, |z| is small (not a pole) and z is decreasing.
    """
    if coeffs.zero_fixed:
        raise ConstraintError("all fixed capitals are zero; use solve_zero_fixed")
    N = coeffs.N
    offsets = constraints.offsets(N)
    if constraints.count() != N - 2:
        _k_system(coeffs, np.ones(N), K_total, constraints)

    def state(r):
        try:
            x = solve_prices(coeffs, r, offsets)
            K, notes = _solve_k_notes(coeffs, x, K_total, constraints, check=False)
        except (SingularMatrixError, DegenerateConstraintsError):
            return None
        return z_function(coeffs, x, K), x, K, notes

    def raw(r):
        st = state(r)
        if st is None:
            raise SingularMatrixError("price or allocation system singular inside the root bracket", -1)
        return st[0]

    ftol = Z_RTOL * _pl_norm(coeffs, K_total)
    floor = -INFEASIBLE_RTOL * K_total

    def accept(a, za, b, zb):
        try:
            root = b if zb == 0.0 else _refine(raw, a, za, b, zb, ftol, R_XTOL)
        except SingularMatrixError:
            return None, False
        st = state(root)
        if st is None or abs(st[0]) > 1e3 * ftol:
            return None, False
        z, x, K, notes = st
        if np.any(K < floor) or np.any(x <= 0):
            return None, True
        zp, zm = state(root + DERIV_STEP), state(root - DERIV_STEP)
        if zp is None or zm is None or zp[0] >= zm[0]:
            return None, False
        return _finalize(coeffs, x, K, root + offsets, "r-scan", constraints, notes=notes), True

    infeasible_root = False
    prev = None
    steps = int(math.floor((r_max - r_min) / r_step + 0.5))
    for k in range(steps + 1):
        r = r_min + k * r_step
        st = state(r)
        z = None if st is None else st[0]
        if prev is not None and prev[1] is not None and z is not None and prev[1] > 0 >= z:
            sol, was_root = accept(prev[0], prev[1], r, z)
            if sol is not None:
                return sol
            infeasible_root = infeasible_root or was_root
        prev = (r, z)
    if infeasible_root:
        raise FixedCapitalChoiceError(
            "every zero of z has a negative capital somewhere; choose a different fixed capital"
        )
    raise NoSolutionError(
        f"z never crosses zero with a negative slope for r in [{r_min}, {r_max}]"
    )


def _checked(z):
    if z is None:
        raise InfeasibleAllocationError("allocation became infeasible inside the root bracket")
    return z


def _pl_norm(coeffs: TechCoefficients, K_total: float) -> float:
    """Typical size of normalized total surplus value, for z tolerances."""
    return max(float(np.mean(coeffs.pl)), 1e-300)


# ---------------------------------------------------------------------------
# zero fixed capital


def _perron_prices(coeffs: TechCoefficients, t: np.ndarray) -> tuple[float, np.ndarray]:
    """Perron root and positive unit vector of B = t_i u_ij / w_i.

    Luxury commodities (nobody consumes them) are priced from their own row
    once the basic block is solved.
    """
    lux = coeffs.luxury_indices()
    basic = [i for i in range(coeffs.N) if i not in lux]
    B = t[:, None] * coeffs.u / coeffs.w[:, None]
    lam, xb = dominant_eigenpair(B[np.ix_(basic, basic)])
    x = np.zeros(coeffs.N)
    x[basic] = xb
    for L in lux:
        x[L] = B[L, basic] @ xb / lam
        if not x[L] > 0:
            raise EigenDomainError(f"luxury branch {L} consumes nothing; its price is undetermined")
    return lam, x / np.linalg.norm(x)


def eigen_rate(coeffs: TechCoefficients) -> tuple[float, float, np.ndarray]:
    """(lambda, r, x_u) for the uniform-rate zero-fixed-capital system."""
    lam, xu = _perron_prices(coeffs, np.ones(coeffs.N))
    return lam, 1.0 / lam - 1.0, xu


def _det_rate(coeffs: TechCoefficients, offsets: np.ndarray, r_step: float, r_max: float) -> float:
    """Reference rate where the homogeneous price system becomes singular
    with a unit Perron root (non-uniform rates, zero fixed capital)."""

    def det(r):
        M, _ = assemble_price_system(coeffs, r, offsets)
        return determinant(M)

    r_lo = -float(np.min(offsets))
    steps = int(math.floor((r_max - r_lo) / r_step + 0.5))
    prev = (r_lo, det(r_lo))
    for k in range(1, steps + 1):
        r = r_lo + k * r_step
        dr = det(r)
        if dr == 0.0 or (prev[1] > 0) != (dr > 0):
            root = r if dr == 0.0 else _refine(det, prev[0], prev[1], r, dr, 0.0, R_XTOL)
            lam, _ = _perron_prices(coeffs, 1.0 + root + offsets)
            if abs(lam - 1.0) <= 1e-9:
                return root
        prev = (r, dr)
    raise NoSolutionError("price-system determinant has no admissible zero on the scanned range")


def solve_zero_fixed(coeffs: TechCoefficients, K_total: float, constraints: ConstraintSet = ConstraintSet(),
                     r_step: float = R_STEP, r_max: float = R_MAX) -> TransformationSolution:
    """Zero fixed capital: x = q* x_u, with q* chosen so that z = 0.

    For each trial modulus q the allocation K(q) comes from :func:`solve_k`
    (equality II at x = q x_u plus the constraints); q* is the root of
    z(q x_u, K(q)), found by bracketing and Illinois refinement.
    """
    if not coeffs.zero_fixed:
        raise ConstraintError("solve_zero_fixed requires every fixed capital to be zero")
    N = coeffs.N
    offsets = constraints.offsets(N)
    if constraints.uniform():
        lam, r, xu = eigen_rate(coeffs)
        method = "eigen"
    else:
        r = _det_rate(coeffs, offsets, r_step, r_max)
        lam, xu = _perron_prices(coeffs, 1.0 + r + offsets)
        method = "determinant-scan"
    _k_system(coeffs, xu, K_total, constraints)

    def z_of_q(q):
        try:
            K, _ = _solve_k_notes(coeffs, q * xu, K_total, constraints, check=False)
        except DegenerateConstraintsError:
            return None
        return z_function(coeffs, q * xu, K)

    ftol = Z_RTOL * _pl_norm(coeffs, K_total)
    q0 = float(coeffs.w.sum() / (coeffs.w @ xu))
    infeasible_root = None
    for a, za, b, zb in _q_brackets(z_of_q, q0):
        try:
            q = a if za == 0.0 else _refine(lambda s: _checked(z_of_q(s)), a, za, b, zb, ftol, 1e-14)
        except InfeasibleAllocationError:
            continue
        zq = z_of_q(q)
        if zq is None or abs(zq) > 1e3 * ftol:
            continue  # sign flip across a pole of K(q)
        x = q * xu
        try:
            K, notes = _solve_k_notes(coeffs, x, K_total, constraints)
        except InfeasibleAllocationError as exc:
            infeasible_root = infeasible_root or exc
            continue
        zero = ZeroFixedSolve(eigen_rate=r, x_unit=xu, q_star=q, x=x)
        note = notes + (("rates from the determinant scan of the homogeneous price system",)
                        if method != "eigen" else ())
        return _finalize(coeffs, x, K, r + offsets, method, constraints, zero=zero, notes=note)
    if infeasible_root is not None:
        raise FixedCapitalChoiceError(
            f"the modulus q* gives a negative allocation ({infeasible_root}); choose a different fixed capital"
        )
    raise NoSolutionError("z(q) does not change sign over the scanned modulus range")


def _q_brackets(z_of_q, q0: float, ratio: float = 1.01, max_steps: int = 700):
    """Sign changes of z(q), nearest to q0 first, walking outward
    geometrically in both directions."""
    z0 = z_of_q(q0)
    if z0 == 0.0:
        yield q0, z0, q0, z0
    up = down = (q0, z0)
    for k in range(1, max_steps + 1):
        for side in (1, -1):
            q = q0 * ratio ** (side * k)
            z = z_of_q(q)
            prev = up if side == 1 else down
            if z is not None and prev[1] is not None and (prev[1] > 0) != (z > 0):
                lo, hi = (prev, (q, z)) if side == 1 else ((q, z), prev)
                yield lo[0], lo[1], hi[0], hi[1]
            if side == 1:
                up = (q, z)
            else:
                down = (q, z)


# ---------------------------------------------------------------------------
# no surplus


def solve_no_surplus(coeffs: TechCoefficients, K_total: float, drop_commodity: Optional[int] = None
                     ) -> TransformationSolution:
    """x = 1 and the unique allocation meeting every commodity's demand.

    Uses N - 1 demand equations (the wage commodity's is dropped unless
    ``drop_commodity`` says otherwise; it follows from the others) and
    total capital.
    """
    if not coeffs.no_surplus:
        raise ConstraintError("solve_no_surplus requires zero surplus value in every branch")
    N = coeffs.N
    drop = coeffs.wage_index if drop_commodity is None else drop_commodity
    m = coeffs.machine_index
    A = np.zeros((N, N))
    b = np.zeros(N)
    A[0] = 1.0
    b[0] = K_total
    row = 1
    for j in range(N):
        if j == drop:
            continue
        g = -coeffs.u[:, j].copy()
        if j == m:
            g[j] += coeffs.w[j]
            g -= coeffs.d
        else:
            g[j] += coeffs.w[j] - (coeffs.d[j] if m is None else 0.0)
        A[row] = g
        row += 1
    try:
        K = solve_linear(A, b)
    except SingularMatrixError as exc:
        raise NoUniqueAllocationError("the demand system has no unique solution") from exc
    if np.any(K < -INFEASIBLE_RTOL * K_total):
        i = int(np.argmin(K))
        raise InfeasibleAllocationError(f"branch {i} would receive negative capital {K[i]:.6g}", branch=i, K=K)
    return _finalize(coeffs, np.ones(N), K, np.zeros(N), "no-surplus")


# ---------------------------------------------------------------------------
# dispatch and checks


def solve(source, constraints: ConstraintSet = ConstraintSet(), K_total: Optional[float] = None,
          **scan) -> TransformationSolution:
    """Pick the right path for a table or coefficient set."""
    if isinstance(source, EconomyTable):
        coeffs = derive_coefficients(source)
        if K_total is None:
            K_total = source.total_capital
    else:
        coeffs = source
        if K_total is None:
            raise ConstraintError("K_total is required when solving from coefficients")
    if coeffs.no_surplus:
        sol = solve_no_surplus(coeffs, K_total)
        if constraints.count():
            sol = _with_note(sol, "no surplus value: allocation is unique, constraints ignored")
        return sol
    if coeffs.zero_fixed:
        return solve_zero_fixed(coeffs, K_total, constraints, **scan)
    return find_r_star(coeffs, K_total, constraints, **scan)


def _with_note(sol: TransformationSolution, note: str) -> TransformationSolution:
    from dataclasses import replace

    return replace(sol, notes=sol.notes + (note,))


def solve_with_allocation(coeffs: TechCoefficients, K, offsets=None,
                          r_step: float = R_STEP, r_max: float = R_MAX) -> TransformationSolution:
    """Rates and prices for a fully prescribed allocation K.

    Used where equality II cannot pin the allocation, as for a table that is
    already in prices (x = 1 makes the equality vacuous).  With fixed
    capital, r is the first downward zero of z(r) at this K; without it, x
    is the Perron vector scaled by equality II.
    """
    K = np.asarray(K, dtype=float)
    N = coeffs.N
    dr = np.zeros(N) if offsets is None else np.asarray(offsets, dtype=float)
    if coeffs.zero_fixed:
        if np.any(dr != 0):
            r = _det_rate(coeffs, dr, r_step, r_max)
            _, xu = _perron_prices(coeffs, 1.0 + r + dr)
        else:
            _, r, xu = eigen_rate(coeffs)
        q = float((K @ coeffs.w) / (K @ (coeffs.w * xu)))
        zero = ZeroFixedSolve(eigen_rate=r, x_unit=xu, q_star=q, x=q * xu)
        return _finalize(coeffs, q * xu, K, r + dr, "given-allocation", zero=zero)

    def z_at(r):
        try:
            return z_function(coeffs, solve_prices(coeffs, r, dr), K)
        except SingularMatrixError:
            return None

    # with K held fixed z(r) may cross zero in either direction, and may
    # also flip sign across a pole of the price system; poles are skipped
    ftol = Z_RTOL * _pl_norm(coeffs, float(K.sum()))
    prev = None
    steps = int(math.floor(r_max / r_step + 0.5))
    for k in range(steps + 1):
        r = k * r_step
        z = z_at(r)
        if z is not None and prev is not None and (prev[1] > 0) != (z > 0):
            try:
                root = r if z == 0.0 else _refine(lambda t: _checked(z_at(t)), prev[0], prev[1], r, z, ftol, R_XTOL)
                x = solve_prices(coeffs, root, dr)
            except (InfeasibleAllocationError, SingularMatrixError):
                root = None
            if root is not None and np.all(x > 0) and abs(z_function(coeffs, x, K)) <= 1e3 * ftol:
                return _finalize(coeffs, x, K, root + dr, "given-allocation")
        prev = None if z is None else (r, z)
    raise NoSolutionError("z never crosses zero for the prescribed allocation")


@dataclass(frozen=True)
class NeutralReport:
    passed: bool
    max_x_deviation: float
    rate_deviation: float
    residuals_ok: bool


def price_table_as_values(solution: TransformationSolution) -> EconomyTable:
    """The price table read as a value table, with e'_i = S_i / (x_wage V_i)."""
    coeffs = solution.coeffs
    wi = coeffs.wage_index
    pt = solution.price_table
    V_price = pt.U[:, wi]
    e_new = np.divide(pt.S, V_price, out=np.zeros_like(pt.S), where=V_price != 0)
    return EconomyTable(
        branch_names=coeffs.branch_names or tuple(f"B{i + 1}" for i in range(coeffs.N)),
        F=coeffs.f * solution.K,
        U=pt.U,
        e_rates=e_new,
        n_cycles=coeffs.n_cycles,
        wage_index=wi,
        machine_index=coeffs.machine_index,
    )


def neutral_element_check(solution: TransformationSolution, tol: float = 1e-9) -> NeutralReport:
    """Re-solve the price table read as a value table; x' must be all ones.

    At x' = 1 equality II holds for every allocation, so the re-solve keeps
    the table's own allocation and solves only for the rate and prices.
    """
    coeffs = solution.coeffs
    if coeffs.no_surplus:
        dx = float(np.max(np.abs(solution.x - 1.0)))
        return NeutralReport(dx <= tol, dx, 0.0, True)
    table = price_table_as_values(solution)
    new = derive_coefficients(table)
    offsets = solution.r_per_branch - solution.r_star
    again = solve_with_allocation(new, table.K, offsets if np.any(offsets != 0) else None)
    dx = float(np.max(np.abs(again.x - 1.0)))
    dr = float(np.max(np.abs(again.r_per_branch - solution.r_per_branch)))
    ok = not again.check()
    return NeutralReport(passed=dx <= tol and ok, max_x_deviation=dx, rate_deviation=dr, residuals_ok=ok)
