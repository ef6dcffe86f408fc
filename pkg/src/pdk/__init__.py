"""Panoptic segmentation + depth evaluation, instance-level depth fusion and color maps."""
from .classes import CITYSCAPES, Category, ClassSet, load_classes
from .colormap import ColorMapConfig, depth_to_color, render
from .dataset_io import (
    DepthMap,
    DisparityMap,
    PanopticMap,
    SegmentInfo,
    StereoCamera,
    decode_depth,
    decode_disparity,
    decode_panoptic,
    disparity_to_depth,
    encode_depth,
    encode_panoptic,
)
from .depth_metrics import DepthReport, evaluate_depth
from .errors import DecodeError, EvaluationError, FormatError, PDKError, ValidationError
from .fusion import InstanceDepthRecord, instance_depths
from .panoptic_metrics import MatchResult, PQReport, PQState, accumulate, finalize, match_segments, segment_iou
from .synth import SceneSpec, Perturbation, generate_scene, oracle_depth_report, oracle_match

__version__ = "0.1.0"
