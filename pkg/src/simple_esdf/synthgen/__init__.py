from .generator import GenConfig, GroundTruth, generate, oracle_posterior, summarize
from .truth_io import read_truth, write_truth

__all__ = [
    "GenConfig",
    "GroundTruth",
    "generate",
    "oracle_posterior",
    "read_truth",
    "summarize",
    "write_truth",
]
