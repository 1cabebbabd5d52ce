"""Finite-volume random Schrodinger operators with Poisson potentials on a periodic grid."""

__version__ = "0.1.0"

from .lattice import (
    BoxSpec,
    DualIndex,
    GridField,
    dispersion,
    forward_fourier,
    inverse_fourier,
    plane_wave,
    riemann_sum_compare,
)
from .potential import (
    PoissonField,
    PotentialSample,
    ProfileSpec,
    WeightLaw,
    builtin_profile,
    evaluate_potential,
    restrict,
    sample_poisson,
)
from .hamiltonian import (
    BOUND_AUDIT,
    HamiltonianHandle,
    ResolventQuery,
    SolveReport,
    apply,
    dense_spectrum,
    gradient_apply,
    resolvent_element,
    resolvent_solve,
)
from .spectral import (
    DiscreteSpectralMeasure,
    SmoothedDensity,
    TestFunction,
    TestFunctionFamily,
    apply_function_matrix_free,
    integrate,
    spectral_measure,
    stieltjes_density,
    vague_weak_report,
)
from .combes_thomas import (
    DecayReport,
    EtaField,
    WeightFunction,
    admissible_shift,
    build_eta,
    conjugated_apply,
    measure_tail_decay,
    numerical_range_probe,
    predicted_tail_bound,
)
from .config import ExperimentConfig, PhiSpec, load_config
from .harness import (
    ConvergenceRecord,
    CutoffFunction,
    cauchy_study,
    measure_convergence_study,
    resolvent_identity_check,
    truncation_study,
)
