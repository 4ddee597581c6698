"""Numerical laboratory for the circular Riesz gas.

Periodized Riesz interactions on the torus, canonical Gibbs sampling,
conditional (window) kernels, and the estimator suite probing rigidity,
fluctuations, and free-energy brackets.
"""

__version__ = "0.1.0"

from .potential import (
    INF,
    AccuracyError,
    PeriodizedPotential,
    RieszParams,
    TabulatedPotential,
    cell_mean,
    default_truncation,
    eval_periodized,
    eval_riesz,
    integrate_g2,
    pair_tail_certificate,
    riesz_split,
    self_constant,
    tail_bound,
)
from .torus import (
    Configuration,
    TorusBox,
    Window,
    count_in,
    in_perturbed_class,
    perturbed_lattice,
    read_snapshots,
    rng_from_seed,
    sample_binomial,
    sample_poisson,
    torus_diff,
    translate_torus,
    wrap,
    write_snapshots,
)
from .energy import (
    ChargeBalanceError,
    EnergyBreakdown,
    MoveCost,
    backgrounded_energy,
    delta_move,
    local_energy_window,
    local_field,
    move_cost_truncated,
    move_tail_bound,
    replicated_mean_energy,
    total_energy,
)
from .sampler import (
    ChainState,
    accept_probability,
    discretized_transition_matrix,
    dlr_resample_window,
    make_schedule,
    metropolis_step,
    run_chain,
    stationarize,
    swap_windows,
)
from .oracle import (
    OracleValue,
    QuadratureSpec,
    dlr_residual,
    exact_expectation,
    exact_partition,
    gnz_residual,
    reference_periodized,
)
from .estimators import (
    EstimateReport,
    compensator_probe,
    conditional_number_histogram,
    free_energy_bounds_check,
    intensity_profile,
    local_field_moment,
    number_fluctuation,
    swap_ratio_probe,
)
from .config import ConfigError, ExperimentConfig, load_config, validate
from .stats import batch_means_stderr, integrated_autocorr_time
