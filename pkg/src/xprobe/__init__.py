"""Dataset-wide explanation probes for black-box image classifiers.

Finds minimal sufficient explanations by beam search over occlusion
patches, expands and counts their sub-explanations, scores attribution
maps with insertion/deletion curves, and cross-tests maps between
models to embed them in a shared plane.
"""

from .errors import (
    AttributionFormatError,
    ConfigError,
    DegenerateCalibrationError,
    DimensionError,
    GridError,
    OracleError,
    XprobeError,
)
from .imaging import (
    BaselineKind,
    BaselineStyle,
    Direction,
    GREY,
    GridSpec,
    ImageTensor,
    PatchSet,
    compose_fractional,
    compose_masked,
    compose_subset_pixels,
    load_image,
    make_baseline,
    make_grid,
    pixel_rank_order,
    upsample_bilinear,
    upsample_nearest,
)
from .kernels import BACKEND
from .oracles import (
    Additive,
    ClassifierOracle,
    ConfidenceCache,
    Conjunctive,
    Disjunctive,
    PatchRuleOracle,
    SquashKind,
    SyntheticOracle,
    make_synthetic,
    mask_token,
    predicted_class,
    score_batch_subsets,
    score_masks,
    score_subset,
)
from .search import (
    BeamConfig,
    Minimality,
    MseRecord,
    brute_force_mses,
    check_minimality,
    find_mses,
    read_mse_jsonl,
    write_mse_jsonl,
)
from .subexplain import (
    CountConfig,
    DedupMode,
    SubExplanationCount,
    SubExplanationNode,
    brute_force_counts,
    count_above_thresholds,
    counts_to_csv,
    expand_all,
    expand_subexplanations,
    read_counts_csv,
)
from .saliency import (
    AttributionMap,
    ModelCalibration,
    PerturbationCurve,
    auc,
    calibrate_model,
    generate_randomized_map,
    load_attribution,
    normalize_score,
    perturbation_curve,
    save_attribution,
    save_attribution_png,
)
from .crosstest import (
    CrossTestMatrix,
    Embedding2D,
    build_matrix,
    center_kernel,
    embedding_to_csv,
    embedding_to_svg,
    kernel_pca_embed,
    matrix_to_csv,
    read_matrix_csv,
)
from .report import (
    MseStats,
    SizeHistogram,
    aggregate,
    export_sag_dot,
    histogram_to_svg,
    percent_curve_to_svg,
    percent_explained,
    size_histogram,
    stats_to_csv,
    stats_to_json,
)
from .adapters import ModelConfig, OnnxOracle, RemoteOracle, encode_batch

__version__ = "0.1.0"

__all__ = [
    "AttributionFormatError",
    "ConfigError",
    "DegenerateCalibrationError",
    "DimensionError",
    "GridError",
    "OracleError",
    "XprobeError",
    "BaselineKind",
    "BaselineStyle",
    "Direction",
    "GREY",
    "GridSpec",
    "ImageTensor",
    "PatchSet",
    "compose_fractional",
    "compose_masked",
    "compose_subset_pixels",
    "load_image",
    "make_baseline",
    "make_grid",
    "pixel_rank_order",
    "upsample_bilinear",
    "upsample_nearest",
    "BACKEND",
    "Additive",
    "ClassifierOracle",
    "ConfidenceCache",
    "Conjunctive",
    "Disjunctive",
    "PatchRuleOracle",
    "SquashKind",
    "SyntheticOracle",
    "make_synthetic",
    "mask_token",
    "predicted_class",
    "score_batch_subsets",
    "score_masks",
    "score_subset",
    "BeamConfig",
    "Minimality",
    "MseRecord",
    "brute_force_mses",
    "check_minimality",
    "find_mses",
    "read_mse_jsonl",
    "write_mse_jsonl",
    "CountConfig",
    "DedupMode",
    "SubExplanationCount",
    "SubExplanationNode",
    "brute_force_counts",
    "count_above_thresholds",
    "counts_to_csv",
    "expand_all",
    "expand_subexplanations",
    "read_counts_csv",
    "AttributionMap",
    "ModelCalibration",
    "PerturbationCurve",
    "auc",
    "calibrate_model",
    "generate_randomized_map",
    "load_attribution",
    "normalize_score",
    "perturbation_curve",
    "save_attribution",
    "save_attribution_png",
    "CrossTestMatrix",
    "Embedding2D",
    "build_matrix",
    "center_kernel",
    "embedding_to_csv",
    "embedding_to_svg",
    "kernel_pca_embed",
    "matrix_to_csv",
    "read_matrix_csv",
    "MseStats",
    "SizeHistogram",
    "aggregate",
    "export_sag_dot",
    "histogram_to_svg",
    "percent_curve_to_svg",
    "percent_explained",
    "size_histogram",
    "stats_to_csv",
    "stats_to_json",
    "ModelConfig",
    "OnnxOracle",
    "RemoteOracle",
    "encode_batch",
]
