"""Time-dependent variational evolution of matrix product states."""

from .errors import (
    ConfigError, DimensionError, FactorizationError, FitFailureError, HermiticityError,
    InvalidGaugeError, InvalidInputError, MpsError, NumericalFailure, SingularPointError,
    SizeGuardError, StalenessError,
)
from .krylov import KrylovConfig, expm_apply, ground_state
from .mpo import (
    Mpo, fit_exponential_sum, identity_mpo, mpo_expectation, nearest_neighbor_mpo,
    xy_nn_mpo, xy_power_law_mpo,
)
from .mps import (
    MpsState, canonicalize, entanglement_entropy, gauge_transform, local_expectation,
    move_center, norm, overlap, product_mps, random_mps, schmidt_spectrum,
)
from .environments import EnvironmentStack, init_environments
from .integrators import (
    IntegratorConfig, Truncation, compose_order4, dmrg1_sweep, dmrg2_sweep, evolve,
    tdvp1_symmetric_step, tdvp2_symmetric_step,
)
from .oracle import (
    DenseState, dense_evolve, dense_ground, dense_hamiltonian, dense_state, fidelity,
    projection_error, tangent_project_dense, two_site_project_dense,
)

__version__ = "0.1.0"
