"""promptforge: one-shot reference guided point-prompt engineering.

Given patch features for an annotated reference image and for a target
image, the engine matches patches in feature space, screens the matches,
refines the surviving prompt points geometrically, and hands the final
positive/negative point scheme to a promptable segmenter (a built-in
baseline or an external model behind a subprocess adapter).
"""

from .evaluation import (
    CaseData,
    EvalRecord,
    SyntheticCase,
    ablation_grid,
    composition_grid,
    dice,
    exclusive_radius_grid,
    fraction_label,
    generate_synthetic,
    load_manifest,
    records_to_csv,
    sparse_radius_grid,
    sweep,
    write_synthetic_dataset,
)
from .matching import (
    CandidatePrompt,
    FeatureMap,
    backward_match,
    correspondence_matrix,
    forward_match,
    select_hard_negatives,
)
from .patching import (
    PatchGrid,
    PatchLabel,
    build_patch_grid,
    label_reference_patches,
    patch_center,
    patch_centers,
)
from .pipeline import (
    ConfigError,
    NegativeComposition,
    PipelineConfig,
    PipelineTrace,
    Stages,
    load_config,
    parse_config_text,
    run_pipeline,
    validate_config,
)
from .segmenter import (
    SegmenterAdapter,
    SegmenterError,
    baseline_segment,
    external_segment,
    load_adapter_file,
)
from .spatial import (
    PromptClass,
    PromptPoint,
    PromptScheme,
    RadiusSpec,
    exclusive_sampling,
    merge_hard_negatives,
    resolve_radius,
    sparse_sampling,
)
from .tensor_io import (
    load_feature_map,
    load_mask,
    load_prompt_scheme,
    load_tensor,
    save_feature_map,
    save_mask,
    save_prompt_scheme,
    save_tensor,
)

__version__ = "0.1.0"

__all__ = [
    "CandidatePrompt",
    "CaseData",
    "ConfigError",
    "EvalRecord",
    "FeatureMap",
    "NegativeComposition",
    "PatchGrid",
    "PatchLabel",
    "PipelineConfig",
    "PipelineTrace",
    "PromptClass",
    "PromptPoint",
    "PromptScheme",
    "RadiusSpec",
    "SegmenterAdapter",
    "SegmenterError",
    "Stages",
    "SyntheticCase",
    "ablation_grid",
    "backward_match",
    "baseline_segment",
    "build_patch_grid",
    "composition_grid",
    "correspondence_matrix",
    "dice",
    "exclusive_radius_grid",
    "exclusive_sampling",
    "external_segment",
    "forward_match",
    "fraction_label",
    "generate_synthetic",
    "label_reference_patches",
    "load_adapter_file",
    "load_config",
    "load_feature_map",
    "load_manifest",
    "load_mask",
    "load_prompt_scheme",
    "load_tensor",
    "merge_hard_negatives",
    "parse_config_text",
    "patch_center",
    "patch_centers",
    "records_to_csv",
    "resolve_radius",
    "run_pipeline",
    "save_feature_map",
    "save_mask",
    "save_prompt_scheme",
    "save_tensor",
    "select_hard_negatives",
    "sparse_radius_grid",
    "sparse_sampling",
    "sweep",
    "validate_config",
    "write_synthetic_dataset",
]
