"""Cavity-QED simulation of fringe visibility, TPM work statistics and the quantum Jarzynski equality."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    CavjarError,
    ConvergenceError,
    DegenerateError,
    DomainError,
    FitError,
    NumericalError,
    RangeError,
    TruncationError,
)
from .fock import (  # noqa: F401
    FieldOperator,
    FieldState,
    FockSpace,
    auto_dim,
    make_annihilation,
    make_creation,
    make_displacement,
    make_number,
    matrix_exp,
    tail_weight,
)
from .states import (  # noqa: F401
    DriveProtocol,
    ThermalParams,
    delta_F,
    displaced_partition_function,
    displaced_thermal_state,
    helmholtz_free_energy,
    partition_function,
    thermal_state,
)
