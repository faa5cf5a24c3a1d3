from .augment import AugmentConfig, augment
from .brats import (
    DataError,
    center_crop,
    derive_bbox,
    group_labels,
    list_cases,
    load_case,
    normalize,
    read_manifest,
    ungroup_labels,
    write_case,
)
from .nifti import NiftiError, read_nifti, to_ras, write_nifti
from .phantom import GradeRule, PhantomSpec, make_dataset, synth_case

__all__ = [
    "AugmentConfig",
    "augment",
    "DataError",
    "center_crop",
    "derive_bbox",
    "group_labels",
    "list_cases",
    "load_case",
    "normalize",
    "read_manifest",
    "ungroup_labels",
    "write_case",
    "NiftiError",
    "read_nifti",
    "to_ras",
    "write_nifti",
    "GradeRule",
    "PhantomSpec",
    "make_dataset",
    "synth_case",
]
