from .classification import ClsHeadConfig, GradingClassifier
from .detection import (
    Anchor,
    DetectionHead,
    DetectionHeadConfig,
    decode_boxes,
    encode_boxes,
    generate_anchors,
    iou_3d,
    iou_matrix,
    match_anchors,
    nms_3d,
    postprocess_detections,
)
from .segmentation import SegHeadConfig, SegmentationDecoder

__all__ = [
    "ClsHeadConfig",
    "GradingClassifier",
    "Anchor",
    "DetectionHead",
    "DetectionHeadConfig",
    "decode_boxes",
    "encode_boxes",
    "generate_anchors",
    "iou_3d",
    "iou_matrix",
    "match_anchors",
    "nms_3d",
    "postprocess_detections",
    "SegHeadConfig",
    "SegmentationDecoder",
]
