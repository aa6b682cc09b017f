"""Solver and verification suite for the mixed local/nonlocal Dirichlet problem

    -Lap u + (-Lap)^s u + lam u = |u|^{p-2} u   in the unit ball,  u = 0 outside.

Radial sector discretization with exact-tail zonal kernels, Nehari/Newton
ground states, linearized spectra, s-harmonic extension, and a quantitative
battery for the qualitative theorems (sign structure, Hopf ratio,
non-degeneracy, uniqueness, continuation).
"""

from .assemble import (
    SectorOperator,
    apply_fractional,
    assemble_local,
    assemble_mass,
    assemble_nonlocal,
    assemble_operator,
    gagliardo_seminorm,
    radial_integral,
)
from .extension import ExtensionSample, cs_extend, moment_limit, neumann_trace
from .groundstate import (
    GroundStateSolution,
    ProblemParams,
    energy,
    first_eigen_lambda1,
    nehari_scale,
    solve_ground_state,
)
from .mesh import RadialFunction, RadialMesh, build_mesh
from .opcache import OperatorCache
from .report import CheckResult, VerificationReport
from .special import (
    KernelSpec,
    extension_ds,
    normalization_cns,
    poisson_pns,
    surface_area,
    zonal_kernel,
)
from .spectral import lambda_spectrum, nondegeneracy_margins, sigma_spectrum
from .verify import (
    ContinuationTrace,
    check_nondegeneracy,
    check_theorem1,
    continue_in_p,
    continue_in_s,
    count_sign_changes,
    ground_state_contract,
    hopf_boundary_ratio,
    multistart_uniqueness,
    negative_control_shifted_potential,
    negative_control_third_eigenfunction,
    small_p_asymptotics,
    tau_homotopy_sign_counts,
)

__version__ = "0.1.0"

__all__ = [
    "SectorOperator", "apply_fractional", "assemble_local", "assemble_mass",
    "assemble_nonlocal", "assemble_operator", "gagliardo_seminorm",
    "radial_integral",
    "ExtensionSample", "cs_extend", "moment_limit", "neumann_trace",
    "GroundStateSolution", "ProblemParams", "energy", "first_eigen_lambda1",
    "nehari_scale", "solve_ground_state",
    "RadialFunction", "RadialMesh", "build_mesh",
    "OperatorCache", "CheckResult", "VerificationReport",
    "KernelSpec", "extension_ds", "normalization_cns", "poisson_pns",
    "surface_area", "zonal_kernel",
    "lambda_spectrum", "nondegeneracy_margins", "sigma_spectrum",
    "ContinuationTrace", "check_nondegeneracy", "check_theorem1",
    "continue_in_p", "continue_in_s", "count_sign_changes",
    "ground_state_contract", "hopf_boundary_ratio", "multistart_uniqueness",
    "negative_control_shifted_potential", "negative_control_third_eigenfunction",
    "small_p_asymptotics", "tau_homotopy_sign_counts",
    "__version__",
]
