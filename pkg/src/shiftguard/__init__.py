"""Online level-shift detection for ARMA processes.

A moving-window likelihood-ratio chart on one-step prediction errors, its
Monte Carlo calibration, and a two-sided CUSUM baseline.
"""

from .arma import (
    ArmaModel,
    EtaWeights,
    OneStepPredictor,
    PiWeights,
    ShiftSpec,
    ar_representation,
    eta_weights,
    model_eta,
    one_step_errors,
    shift_profile,
    simulate_errors,
)
from .calibration import (
    CalibrationResult,
    RunLengthSummary,
    analytic_critical_value,
    arl_confidence_interval,
    box_probability_quadrature,
    choose_n_for_margin,
    estimate_arl0,
    find_critical_value,
    find_critical_values,
    quadrature_critical_value,
    simulate_run_length,
    write_calibration_csv,
)
from .config import RunConfig
from .cusum import (
    CusumChart,
    CusumConfig,
    CusumState,
    cusum_calibrate_limit,
    cusum_restart_init,
    cusum_update,
)
from .detector import (
    DetectorConfig,
    Signal,
    TsayDetector,
    build_transfer_matrix,
    pointwise_correlation,
)
from .exceptions import *  # noqa: F401,F403
from .numerics import (
    RandomSource,
    chi_square_quantile,
    cholesky,
    normal_quantile,
    sample_mvn_truncated_box,
)

__version__ = "0.1.0"
