"""Unsupervised LV segmentation via prominence-weighted iterative shortest paths."""

__version__ = "0.1.0"

from .errors import EchoPathError
from .fusesmooth import Boundary
from .params import CostParams, PipelineParams
from .phantom import PhantomSpec, generate_phantom, perturb_uips, run_monte_carlo
from .preprocess import PolarImage, ScanSequence, UIPSet
from .sequence import SegmentationResult, segment_frame, segment_sequence

__all__ = [
    "Boundary",
    "CostParams",
    "EchoPathError",
    "PhantomSpec",
    "PipelineParams",
    "PolarImage",
    "ScanSequence",
    "SegmentationResult",
    "UIPSet",
    "__version__",
    "generate_phantom",
    "perturb_uips",
    "run_monte_carlo",
    "segment_frame",
    "segment_sequence",
]
