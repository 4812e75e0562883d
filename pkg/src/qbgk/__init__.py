"""Two-species quantum BGK relaxation: equilibrium coefficients, attractors
on momentum grids, and bound-preserving time integration."""

from .distributions import (
    DistributionField,
    MomentumGrid,
    discrete_moments,
    eval_equilibrium,
    h_functional,
    p_to_v_moments,
    read_snapshot,
    write_snapshot,
)
from .dynamics import SimConfig, SimState, Species, relax_step, run, transport_step
from .equilibrium import (
    InterCoeffs,
    IntraCoeffs,
    MixtureProblem,
    SpeciesMoments,
    check_feasibility_inter,
    check_feasibility_intra,
    equilibrium_moments,
    solve_inter,
    solve_intra,
    verify_coeffs,
)
from .errors import (
    BoundViolationError,
    CFLError,
    ConvergenceError,
    DomainError,
    InfeasibleError,
    QBGKError,
    RangeError,
)
from .quantum_integrals import (
    J_FERMI_LIMIT,
    IntegralAccuracy,
    Statistics,
    d_func,
    g_val,
    inv_moment0,
    j_val,
    moment0,
    moment2,
    y_of_x,
)

__version__ = "0.1.0"

__all__ = [
    "J_FERMI_LIMIT",
    "BoundViolationError",
    "CFLError",
    "ConvergenceError",
    "DistributionField",
    "DomainError",
    "InfeasibleError",
    "IntegralAccuracy",
    "InterCoeffs",
    "IntraCoeffs",
    "MixtureProblem",
    "MomentumGrid",
    "QBGKError",
    "RangeError",
    "SimConfig",
    "SimState",
    "Species",
    "SpeciesMoments",
    "Statistics",
    "check_feasibility_inter",
    "check_feasibility_intra",
    "d_func",
    "discrete_moments",
    "equilibrium_moments",
    "eval_equilibrium",
    "g_val",
    "h_functional",
    "inv_moment0",
    "j_val",
    "moment0",
    "moment2",
    "p_to_v_moments",
    "read_snapshot",
    "relax_step",
    "run",
    "solve_inter",
    "solve_intra",
    "transport_step",
    "verify_coeffs",
    "write_snapshot",
    "y_of_x",
]
