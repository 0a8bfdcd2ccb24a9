from .base import LossBreakdown, ObjectiveResult, clamped_log
from .dfm import DfmObjective, dfm_loss
from .esdf import (
    EsdfObjective,
    EStepWeights,
    e_step,
    e_step_batch,
    esdf_loss,
    likelihood_outcome_check,
)
from .esmm import EsmmObjective, esmm_loss
from .surrogate import EmSurrogate

__all__ = [
    "DfmObjective",
    "EStepWeights",
    "EmSurrogate",
    "EsdfObjective",
    "EsmmObjective",
    "LossBreakdown",
    "ObjectiveResult",
    "clamped_log",
    "dfm_loss",
    "e_step",
    "e_step_batch",
    "esdf_loss",
    "esmm_loss",
    "likelihood_outcome_check",
]
