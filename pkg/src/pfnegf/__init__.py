"""Partition-free NEGF at desk scale.

Exact-diagonalization computation of the free and interacting retarded Green
kernels, the reducible and irreducible self-energies of a small interacting
sample coupled to finite leads, and numerical verification of the Dyson
identities that tie them together.
"""

from .config import load_config, parse_config, reference_config
from .errors import ConfigError, MemoryBudgetError
from .fock import (
    FockSpace,
    ManyBodyOperator,
    anticommutator,
    build_b_ops,
    build_fock_space,
    build_interaction,
    commutator,
    identity_operator,
    ladder_op,
    second_quantize,
)
from .grid import TimeGrid
from .lattice import (
    Geometry,
    LeadCoupling,
    OnePartHamiltonian,
    TwoBodyPotential,
    build_geometry,
    build_hamiltonians,
)
from .model import Model
from .negf import (
    DysonReport,
    KernelEngine,
    advanced_from_retarded,
    approx_split,
    compute_g0,
    compute_gxi,
    compute_sigma_tilde,
    convergence_study,
    irreducible_sigma,
    restrict_to_sample,
    verify_dyson,
)
from .propagation import (
    CorrelatorFactory,
    CorrelatorGrid,
    heisenberg_series,
    stepper,
    two_time_kernel,
)
from .thermal import (
    DensityOperator,
    ThermalParams,
    factorized_expectation,
    gamma_check,
    gamma_closed_form,
    gibbs,
    pf_expectation_via_gamma,
    picard_gamma,
)
from .volterra import (
    VolterraOperator,
    identity_volterra,
    invert_id_plus,
    neumann_inverse,
)

__version__ = "0.1.0"
