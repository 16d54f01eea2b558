"""Coherent-feedback cavity optomechanics simulator.

Mean-field Langevin dynamics jointly with the time-dependent Lyapunov
equation for Gaussian quadrature fluctuations, correlation measures over the
periodic steady state, and parameter-grid sweeps with figure presets.
"""

from .params import SystemParams, DerivedParams, load_params, ParamFileError
from .dynamics import (
    SolverOptions, MeanFieldState, LimitCycle, Trajectory,
    integrate, settle_to_cycle, detect_limit_cycle, stability_check,
    build_drift_matrix, build_diffusion_matrix, mean_field_rhs,
    modulation_period, power_balance_residual,
    DynamicsError, UnstableError, NotConvergedError, QuasiPeriodicError,
)
from .measures import (
    CorrelationRecord, log_negativity, steering, quadrature_squeezing,
    optimal_squeezing, purity, periodic_maxima, record_from_cov,
    min_symplectic_eigenvalue,
)

__version__ = "0.1.0"
