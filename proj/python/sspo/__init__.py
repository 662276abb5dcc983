"""Python access to the sspo C++ core."""

from ._sspo import (
    ErdStrategy,
    ErrorQuad,
    LossBreakdown,
    NoiseSchedule,
    Policy,
    PolicySpec,
    RunConfig,
    SspoError,
    SsrMode,
    WeightingMode,
    analytic_gradient_weight,
    compute_sign,
    energy_distance,
    evaluate,
    gradcheck,
    pretrain,
    pseudocode_inside_term,
    ssr_loss,
    theorem2_bias_check,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
