"""Joint multi-leaf segmentation, alignment, and tracking.

Segments template-shaped objects in grayscale frames by Chamfer matching
against a warped template library, selects a non-redundant subset with a
gradient-guided combinatorial search, tracks the selected set across frames
by pose gradient descent, and scores the results with learned quality
models and an F/E/T evaluation protocol.
"""

from ._kernels import BACKEND
from .align import AlignConfig, CandidateSet, IndicatorVector, objective_gradient, objective_value, select_candidates
from .chamfer import NominationSet, TransformedCandidate, angle_term, cm_distance, nominate, snap_tips
from .config import RunConfig, build_run_config, parse_config_file
from .evaluation import EvalReport, MatchResult, evaluate, leaf_match, tip_error
from .imaging import (
    BinaryMask,
    DistanceField,
    EdgeMap,
    GrayImage,
    connected_components,
    distance_transform,
    dt_gradients,
    foreground_mask,
    gaussian_smooth_1d,
    mask_centroid,
    read_gray,
    sobel_edges,
    write_gray,
)
from .io_utils import SchemaError, dump_json, dumps_json, load_json, load_labels, round_floats
from .quality import (
    AlignFeatures,
    RegressionModel,
    SvmModel,
    TrackFeatures,
    alignment_quality_target,
    detect_tracking_failure,
    extract_align_features,
    extract_track_features,
    predict_alignment_quality,
    r_squared,
    reference_index,
    svm_margin,
    train_regression,
    train_svm,
)
from .synth import LeafSpec, SynthSpec, overlap_pair_spec, perturb_poses, render_video
from .templates import (
    LeafTemplate,
    Pose,
    TemplateLibrary,
    build_library,
    default_templates,
    forward_warp,
    inverse_warp,
    load_templates,
    make_ovate_template,
    save_templates,
    warp_mask_grid,
    warp_tips,
)
from .track import (
    FrameFields,
    FrameResult,
    LeafRecord,
    TrackConfig,
    delete_small,
    prepare_frame,
    spawn_new,
    track_frame,
    track_video,
    tracking_gradient,
    tracking_objective,
)

__version__ = "0.1.0"

__all__ = [
    "AlignConfig",
    "AlignFeatures",
    "BACKEND",
    "BinaryMask",
    "CandidateSet",
    "DistanceField",
    "EdgeMap",
    "EvalReport",
    "FrameFields",
    "FrameResult",
    "GrayImage",
    "IndicatorVector",
    "LeafRecord",
    "LeafSpec",
    "LeafTemplate",
    "MatchResult",
    "NominationSet",
    "Pose",
    "RegressionModel",
    "RunConfig",
    "SchemaError",
    "SvmModel",
    "SynthSpec",
    "TemplateLibrary",
    "TrackConfig",
    "TrackFeatures",
    "TransformedCandidate",
    "alignment_quality_target",
    "angle_term",
    "build_library",
    "build_run_config",
    "cm_distance",
    "connected_components",
    "default_templates",
    "delete_small",
    "detect_tracking_failure",
    "distance_transform",
    "dt_gradients",
    "dump_json",
    "dumps_json",
    "evaluate",
    "extract_align_features",
    "extract_track_features",
    "foreground_mask",
    "forward_warp",
    "gaussian_smooth_1d",
    "inverse_warp",
    "leaf_match",
    "mask_centroid",
    "load_json",
    "load_labels",
    "load_templates",
    "make_ovate_template",
    "nominate",
    "objective_gradient",
    "objective_value",
    "overlap_pair_spec",
    "parse_config_file",
    "perturb_poses",
    "predict_alignment_quality",
    "prepare_frame",
    "r_squared",
    "reference_index",
    "read_gray",
    "render_video",
    "round_floats",
    "save_templates",
    "select_candidates",
    "snap_tips",
    "sobel_edges",
    "spawn_new",
    "svm_margin",
    "tip_error",
    "track_frame",
    "track_video",
    "tracking_gradient",
    "tracking_objective",
    "train_regression",
    "train_svm",
    "warp_mask_grid",
    "warp_tips",
    "write_gray",
]
