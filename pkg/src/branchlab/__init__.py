"""Sparse state-vector simulation of measurement scenarios under unitary, collapse-free dynamics."""

from .branching import (
    Branch,
    IsolationReport,
    SupportReport,
    branch_overlap_matrix,
    conditional_state,
    decompose,
    perception_matrix,
    record_support,
    verify_isolation,
)
from .dynamics import (
    HamiltonianTerm,
    UnitaryOp,
    apply,
    compose,
    controlled_flip,
    controlled_permutation,
    hamiltonian_evolution,
    local_unitary,
)
from .errors import (
    BranchlabError,
    CapacityError,
    EmptyConditionalError,
    LayoutMismatchError,
    PreconditionError,
    SchemaError,
)
from .hilbert import (
    DensityMatrix,
    ReducedSpectrum,
    StateVector,
    SystemLayout,
    basis_state,
    inner_product,
    make_layout,
    partial_trace,
    reduced_spectrum,
    superpose,
)

__version__ = "0.1.0"
