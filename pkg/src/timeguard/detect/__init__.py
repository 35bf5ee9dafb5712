"""Detection stack: remote-reference tests, Kalman gating and trust policy."""

from .hypothesis import (
    INCONCLUSIVE,
    AdaptiveConfig,
    DetectorConfig,
    Hypothesis,
    SourceResult,
    StaleSampleError,
    Verdict,
    consensus_test,
    nts_test,
    roughtime_test,
)
from .kalman import (
    GateResult,
    KalmanState,
    NumericalFailure,
    WindowResult,
    kalman_gate_update,
    kalman_predict,
    windowed_innovation_test,
)
from .policy import (
    PHASES,
    StepInputs,
    TrustState,
    adaptive_next_interval,
    recalibrate,
    step_state_machine,
    two_point_check,
    two_point_tolerance,
)

__all__ = [
    "INCONCLUSIVE",
    "PHASES",
    "AdaptiveConfig",
    "DetectorConfig",
    "GateResult",
    "Hypothesis",
    "KalmanState",
    "NumericalFailure",
    "SourceResult",
    "StaleSampleError",
    "StepInputs",
    "TrustState",
    "Verdict",
    "WindowResult",
    "adaptive_next_interval",
    "consensus_test",
    "kalman_gate_update",
    "kalman_predict",
    "nts_test",
    "recalibrate",
    "roughtime_test",
    "step_state_machine",
    "two_point_check",
    "two_point_tolerance",
    "windowed_innovation_test",
]
