"""edskit: symbolic Pfaffian systems with independence condition.

Derived flags, Cartan systems, prolongations, relative extensions, and
dynamic feedback linearization of two-control systems, over an exact
symbolic scalar kernel with explicit genericity bookkeeping.
"""

from .expr import AssumptionSet, Chart, Ledger, Ternary, canon, diff, is_zero, substitute
from .forms import DifferentialForm, SmoothMap, VectorField, contract, d_coord, ext_d, mod_reduce, pullback, wedge
from .pfaffian import (
    CartanClassReport,
    DerivedFlag,
    PfaffianSystem,
    cartan_class,
    cartan_system,
    derived,
    derived_flag,
    infinite_derived,
    is_cts_check,
    is_frobenius,
    is_system,
    rank,
    verify_tau_equivalence,
)
from .prolong import (
    ProlongationStep,
    RelativeExtensionChain,
    check_cartan_prolongation,
    check_filtration,
    hatJ_rank,
    is_c_regular,
    is_simple,
    partial_prolongation,
    prolong_by_diff,
    relative_extensions,
    sluis_extension,
    total_prolongation,
    verify_corank3_shape,
)
from .linearize import (
    AdaptedCoframing,
    LinearizationReport,
    brunovsky_indices,
    build_adapted_coframing,
    class_upper_bound,
    dynlin_search,
    is_cts,
    is_strongly_linear,
    validate_witness,
    verify_coframing,
)

__version__ = "0.1.0"
