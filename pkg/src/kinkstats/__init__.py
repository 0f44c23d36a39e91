"""Exact kink counting statistics for a transverse-field Ising chain quenched across its critical point."""

__version__ = "0.1.0"

from .modes import (  # noqa: E402
    ChainParams,
    ModeGrid,
    QuenchProtocol,
    instantaneous_eigensystem,
    magnetic_field,
    mode_field_coefficients,
    momentum_grid,
)
from .dynamics import (  # noqa: E402
    IntegrationError,
    ModeProbabilities,
    SolverConfig,
    evolve_mode,
    excitation_probability_lz,
    excitation_probability_numeric,
    mode_probabilities,
)
from .counting import (  # noqa: E402
    CumulantReport,
    KinkDistribution,
    characteristic_function,
    cumulant_polynomials,
    cumulants_exact,
    cumulants_from_distribution,
    cumulants_from_moments,
    kink_distribution,
    kink_distribution_convolution,
    le_cam_diagnostic,
    moments_from_distribution,
)
from .theory import (  # noqa: E402
    adiabatic_onset,
    binomial_model,
    cgf_scaling,
    erf_corrected_cumulants,
    kzm_density,
    normal_approximation,
    polylog_three_halves,
    scaling_cumulant_ratio,
)
from .scaling import (  # noqa: E402
    FitResult,
    SweepTable,
    compare_distribution,
    finite_size_study,
    fit_power_law,
    sweep,
)
