"""Quantum-enhanced phase sensing with one-axis twisting and time-dependent Jx control."""
from .dynamics import (
    ControlProfile,
    ModelParams,
    Trajectory,
    endpoint,
    evolve_profile,
    qfi_of,
)
from .measurement import (
    MeasurementDistribution,
    NoiseModel,
    apply_noise,
    build_noise_kernel,
    classical_fisher,
    fisher_at_phase,
    jx_distribution,
    optimize_phase_offset,
)
from .optimizer import (
    CfiObjective,
    OptimizationResult,
    OptimizerSettings,
    QfiObjective,
    ascend,
    multi_start,
    objective_cfi,
    objective_qfi,
)
from .protocols import OatScheme, SchemeReport, optimize_oat, run_oat, run_profile, run_tnt
from .spin import (
    BlochDirection,
    DickeState,
    build_operators,
    coherent_state,
    husimi_grid,
    husimi_q,
    moments,
    rotate,
    x_coherent_state,
)

__version__ = "0.1.0"
