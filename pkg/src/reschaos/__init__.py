"""reschaos: dense overlapping Feshbach resonances and their spacing statistics.

A numpy library (plus a small CLI) that evaluates the analytic scattering
length of many coupled resonances, locates dressed resonance positions and
effective widths through a secular-equation solver, generates seeded random
ensembles of bare spectra, and characterizes the resulting spectra with
Brody-parameter fits and the number variance against Poisson, Wigner-Dyson
and semi-Poisson references.
"""

__version__ = "0.1.0"

from .ensembles import (
    EnsembleConfig,
    WidthRule,
    assign_widths,
    derived_rng,
    generate_realization,
    load_ensemble,
    sample_delta_mu,
    sample_poisson_positions,
    sample_semi_poisson_positions,
    sample_semi_poisson_spacings,
    sample_wd_positions,
    save_ensemble,
    wigner_dyson_spacing,
)
from .errors import (
    BracketFailureError,
    ConfigError,
    DegeneratePositionsError,
    EmptyTraceError,
    InvalidRangeError,
    InvalidSpectrumError,
    LengthMismatchError,
    MissingDeltaMuError,
    NonPositiveCoefficientError,
    NumericalFailureError,
    PoleProximityError,
    ReschaosError,
    SolverGuaranteeWarning,
    TooFewPointsError,
    WindowTooLargeError,
)
from .experiments import (
    ExperimentConfig,
    load_config,
    median_scattering_length,
    observed_positions,
    parse_config,
    run_a_scan,
    run_brody_sweep,
    run_number_variance,
    run_phase_grid,
    run_spacing_hist,
    run_validation,
    save_config,
)
from .finite_energy import (
    PhaseGrid,
    PhaseGridSpec,
    energy_shifted_spectrum,
    load_phase_grid_binary,
    locate_ridges,
    phase_shift,
    save_phase_grid_binary,
    save_phase_grid_csv,
    sin2_delta,
    sin2_delta_grid,
)
from .model import (
    Background,
    BareSpectrum,
    DressedSpectrum,
    ShiftTable,
    load_bare_spectrum_csv,
    product_form_value,
    resonance_shift,
    save_bare_spectrum_csv,
    save_dressed_spectrum_csv,
    scattering_length,
    scattering_length_grid,
    secular_value,
    sum_form_denominators,
)
from .solver import (
    dress_spectrum,
    effective_widths,
    find_resonance_positions,
    find_scattering_zeros,
    scan_secular_roots,
    solve_secular,
)
from .stats import (
    BrodyFit,
    NumberVarianceCurve,
    SpacingSample,
    brody_alpha,
    fit_brody,
    mean_eta_over_realizations,
    number_variance,
    reference_pdf,
    reference_sigma2,
    sample_brody_spacings,
    unfold_positions,
    unfold_spacings,
)
