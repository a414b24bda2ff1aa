"""Steady-state transport for boundary-driven dephased chains with power-law hopping."""

from .lattice import LatticeSpec, build_hamiltonian, hopping_amplitude
from .lindblad import (
    DissipationSpec,
    IntegrationError,
    Trajectory,
    build_damping,
    build_effective_hamiltonian,
    build_pump,
    correlation_rhs,
    evolve,
)
from .oracle import (
    FockOperatorSet,
    OracleError,
    build_liouvillian,
    fock_operators,
    oracle_ness,
)
from .steady import (
    BiorthogonalEigensystem,
    EigendecompositionError,
    NessResult,
    NessSolveError,
    biorthogonal_eig,
    cut_current,
    cut_current_profile,
    density_profile,
    pump_kernel,
    pump_kernel_matrix,
    site_in_current,
    site_in_current_profile,
    solve_ness,
    sylvester_solve,
)

__version__ = "0.1.0"
