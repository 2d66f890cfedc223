"""Exact solutions of the value to production-price transformation."""

from .constructions import (
    BortkiewiczResult,
    build_bortkiewicz,
    marx_constraints,
    solve_marx_simple_reproduction,
    wage_balance_residual,
)
from .dynamics import (
    OkishioPerturbation,
    OkishioReport,
    ScenarioConfig,
    Trajectory,
    TrajectoryRecord,
    convergence_criterion,
    run_convergence,
    run_okishio,
)
from .errors import (
    ConfigurationError,
    ConstraintError,
    ConvergenceError,
    DegenerateConstraintsError,
    EigenDomainError,
    FixedCapitalChoiceError,
    InfeasibleAllocationError,
    NoSolutionError,
    NoUniqueAllocationError,
    SingularMatrixError,
    StructuralError,
    UnsupportedConstructionError,
    ValformeError,
)
from .model import (
    EconomyTable,
    OrganicComposition,
    TechCoefficients,
    check_demand,
    derive_coefficients,
    organic_composition,
    table_from_coefficients,
)
from .solver import (
    PRICE,
    VALUE,
    ConstraintSet,
    ReproductionConstraint,
    TransformationSolution,
    eigen_rate,
    find_r_star,
    neutral_element_check,
    solve,
    solve_k,
    solve_no_surplus,
    solve_zero_fixed,
    z_at_rate,
    z_function,
)

__version__ = "0.1.0"
