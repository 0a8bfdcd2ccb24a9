from .batch import Batch
from .checkpoint import read_checkpoint, write_checkpoint
from .network import (
    ForwardCache,
    GradientCheckReport,
    HeadGrads,
    Heads,
    ModelParams,
    ModelSpec,
    backward,
    check_gradient,
    forward,
    forward_batch,
    gradient,
    init_params,
)
from .survival import survival_tail, survival_tails

__all__ = [
    "Batch",
    "ForwardCache",
    "GradientCheckReport",
    "HeadGrads",
    "Heads",
    "ModelParams",
    "ModelSpec",
    "backward",
    "check_gradient",
    "forward",
    "forward_batch",
    "gradient",
    "init_params",
    "read_checkpoint",
    "survival_tail",
    "survival_tails",
    "write_checkpoint",
]
