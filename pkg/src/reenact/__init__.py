"""Head reenactment geometry core.

Library layout:
    model     linear face model, shape assembly, coefficient projection
    camera    scaled-orthographic projection, Euler angles, pose fitting
    recon     per-frame recovery from dense image-space observations
    nmfc      software rasterizer and semantic face-coordinate images
    eyes      pupil detection and eye-sketch rendering
    metrics   sequence evaluation suite
    pipeline  cropping, parameter routing, NN baseline renderer
    streams   file formats (PNG streams, f32/u32 blobs, CSVs, JSON)
    cli       command-line interface
"""

from .camera import CameraPose, compose_rotation, decompose_rotation, estimate_pose, project
from .errors import (
    ClipWarning,
    ConvergenceWarning,
    CorruptMaskError,
    DegenerateConfigError,
    DegenerateModelError,
    DimensionError,
    EmptyInputError,
    EmptyMaskError,
    GimbalLockWarning,
    IngestError,
    InvalidFeatureError,
    ModelLoadError,
    OutOfFrameError,
    PipelineError,
    SubPixelEyeWarning,
    TargetExhaustedError,
)
from .eyes import (
    EyeLandmarks,
    EyeSketchFrame,
    PupilPair,
    detect_pupil,
    detect_pupils,
    render_eye_sketch,
    to_gray,
)
from .metrics import (
    MetricReport,
    aed,
    aeld,
    apd,
    ard,
    dai,
    fid_from_features,
    mapd,
    median_heuristic_bandwidth,
    mmd2_from_features,
)
from .model import (
    FaceShape,
    MorphableModel,
    NormalizedMeanFace,
    ShapeCoefficients,
    assemble_shape,
    load_model_dir,
    normalized_mean_face,
    project_to_bases,
    save_model_dir,
)
from .nmfc import (
    NONE_INDEX,
    NmfcImage,
    VisibilityMask,
    nmfc_color_table,
    nmfc_facial_mask,
    rasterize_visibility,
    render_nmfc,
)
from .pipeline import (
    BoundingBox,
    ConditionalInput,
    NearestNeighborIndex,
    ReenactmentMode,
    RoutedFrame,
    average_bounding_box,
    crop_roi,
    generate_conditional_input,
    nn_baseline_render,
    route_parameters,
)
from .recon import FrameObservation, FrameRecovery, average_identity, recover_frame

__version__ = "0.1.0"
