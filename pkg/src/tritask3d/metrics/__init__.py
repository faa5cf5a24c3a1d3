from .classification import classification_metrics
from .detection import SWEEP_THRESHOLDS, average_precision, map_sweep
from .profiler import (
    count_macs,
    count_params,
    measure_latency,
    model_size_bytes,
    profile,
    weight_manifest,
    write_macs_table,
)
from .report import EfficiencyRecord, MetricsReport, validate_report
from .segmentation import dice_metric, hausdorff, surface_voxels

__all__ = [
    "classification_metrics",
    "SWEEP_THRESHOLDS",
    "average_precision",
    "map_sweep",
    "count_macs",
    "count_params",
    "measure_latency",
    "model_size_bytes",
    "profile",
    "weight_manifest",
    "write_macs_table",
    "EfficiencyRecord",
    "MetricsReport",
    "validate_report",
    "dice_metric",
    "hausdorff",
    "surface_voxels",
]
