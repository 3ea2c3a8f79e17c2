"""Closed-loop visual servoing for simulated cloth.

Renders a mass-spring cloth, summarizes each frame by histograms of oriented
wrinkle responses, learns a dictionary pairing feature-space velocities with
gripper velocities from a recording, and drives the grippers toward goal
appearances through sparse coding of the current feature error.
"""
from .clothsim import (
    CameraModel,
    ClothState,
    GripperConfig,
    Perturbation,
    PerturbationScript,
    SimParams,
    apply_perturbation,
    gripper_positions,
    render,
    render_with_coverage,
    step,
)
from .dictionary import (
    FeedbackDictionary,
    KMeansResult,
    Recording,
    build_dictionary,
    kmeans,
    sample_pairs,
)
from .errors import (
    ClothServoError,
    ContractError,
    DictionaryLoadError,
    InsufficientDataError,
    LayoutMismatchError,
    ParameterError,
    SimulationDivergedError,
)
from .features import (
    FeatureLayout,
    FeatureSet,
    FeatureVector,
    color_histogram,
    concat,
    default_gabor_bank,
    default_layout,
    hog_features,
    how_features,
)
from .imaging import (
    BackgroundModel,
    FlatBackground,
    GaborParams,
    Image,
    Kernel,
    Mask,
    apply_mask,
    convolve,
    load_png,
    make_gabor,
    quantize,
    save_png,
    segment_foreground,
    to_luminance,
)
from .scene import (
    crumpled_start,
    default_background,
    default_camera,
    default_feature_set,
    default_sim_params,
    flat_state,
    fold_stages,
    hold_disturbance,
    hold_start,
    settle,
    subject_variant,
    tabletop_cloth,
    training_targets,
    translated_goal,
)
from .servo import (
    ControlDecision,
    GoalSpec,
    ServoConfig,
    ServoTrace,
    TraceRecord,
    control_step,
    run_servo,
)
from .sparse import (
    SparseCode,
    SparseSolverConfig,
    deactivation_threshold,
    kkt_violation,
    reconstruct,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "CameraModel",
    "ClothState",
    "GripperConfig",
    "Perturbation",
    "PerturbationScript",
    "SimParams",
    "apply_perturbation",
    "gripper_positions",
    "render",
    "render_with_coverage",
    "step",
    "FeedbackDictionary",
    "KMeansResult",
    "Recording",
    "build_dictionary",
    "kmeans",
    "sample_pairs",
    "ClothServoError",
    "ContractError",
    "DictionaryLoadError",
    "InsufficientDataError",
    "LayoutMismatchError",
    "ParameterError",
    "SimulationDivergedError",
    "FeatureLayout",
    "FeatureSet",
    "FeatureVector",
    "color_histogram",
    "concat",
    "default_gabor_bank",
    "default_layout",
    "hog_features",
    "how_features",
    "BackgroundModel",
    "FlatBackground",
    "GaborParams",
    "Image",
    "Kernel",
    "Mask",
    "apply_mask",
    "convolve",
    "load_png",
    "make_gabor",
    "quantize",
    "save_png",
    "segment_foreground",
    "to_luminance",
    "crumpled_start",
    "default_background",
    "default_camera",
    "default_feature_set",
    "default_sim_params",
    "flat_state",
    "fold_stages",
    "hold_disturbance",
    "hold_start",
    "settle",
    "subject_variant",
    "tabletop_cloth",
    "training_targets",
    "translated_goal",
    "ControlDecision",
    "GoalSpec",
    "ServoConfig",
    "ServoTrace",
    "TraceRecord",
    "control_step",
    "run_servo",
    "SparseCode",
    "SparseSolverConfig",
    "deactivation_threshold",
    "kkt_violation",
    "reconstruct",
    "solve",
]
