"""Multi-task 3D brain-tumor analysis.

A shared hierarchical windowed-attention encoder feeds three task heads:
a U-shaped segmentation decoder, an anchor-based detection head behind an
FPN or path-aggregation neck, and a densely connected grading classifier
that reads the segmentation output. Training balances the task losses with
gradient-norm or min-norm weighting.
"""

from .datamodel import (
    BoundingBox3D,
    Detection,
    FeaturePyramid,
    Grade,
    GradePrediction,
    VolumeSample,
    validate_sample,
)

__version__ = "0.1.0"

__all__ = [
    "BoundingBox3D",
    "Detection",
    "FeaturePyramid",
    "Grade",
    "GradePrediction",
    "VolumeSample",
    "validate_sample",
    "__version__",
]
