"""Master-equation benchmarks for a damped oscillator in an Ohmic-Drude bath."""

__version__ = "0.1.0"

from .bath import (
    ASYMPTOTIC,
    BathSpec,
    CouplingDensityValue,
    asymptotic_imag_matsubara,
    asymptotic_imag_pv,
    bath_correlation,
    correlation_modes,
    coupling_density,
    nr_f,
    nr_f_cache_info,
    nr_f_many,
    nr_h,
    reorganization_energy,
    reset_kernel_caches,
    spectral_density,
    thermal_spectral_density,
)
from .oscillator import (
    DensityMatrix,
    OperatorMatrix,
    SystemSpec,
    build_ladder,
    build_position_momentum,
    expectation,
    gibbs_state,
    initial_state,
    offdiag_distance,
    system_hamiltonian,
    trace_distance,
)
from .generators import (
    GENERATOR_KINDS,
    EigenFrame,
    Liouvillian,
    NRIngredients,
    dissipator_superop,
    eigenframe,
    hamiltonian_superop,
    nr_ingredients,
    nr_liouvillian,
    redfield_liouvillian,
    rwa_liouvillian,
    unvec,
    vec,
)
from .hpz import (
    ExactMoments,
    HpzCoefficients,
    default_coefficient_grid,
    exact_moments,
    fundamental_solutions,
    hpz_asymptotic_liouvillian,
    hpz_asymptotics,
    hpz_coefficients,
    hpz_liouvillian,
    stationary_covariance,
    stationary_gaussian_state,
)
from .dynamics import (
    METHOD_NAMES,
    DegenerateSteadyStateError,
    EvolutionError,
    SteadyStateError,
    SteadyStateResult,
    Trajectory,
    average_trace_distance,
    benchmark_initial_state,
    beta_tol_search,
    build_generator,
    build_steady_generator,
    evolve,
    positivity_diagnostics,
    relaxation_time,
    steady_errors,
    steady_state,
    thermal_start_state,
    trajectory_distances,
    truncation_tail,
)
from .scan import (
    METRIC_NAMES,
    PRESET_NAMES,
    AxisSpec,
    ScanConfig,
    ScanResult,
    evaluate_cell,
    preset_config,
    run_scan,
    write_plot_script,
    write_scan_csv,
)
