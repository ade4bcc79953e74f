"""Five-stage prompt engineering flow from features to a final point scheme.

Stage order is fixed: forward matching, backward matching, exclusive
sampling, sparse sampling, hard-negative merge. Each stage can be toggled,
but the screening stages depend on backward matching having run. A trace
records what every stage kept and removed so runs can be inspected stage by
stage.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .matching import (
    MEAN_OVER_ALL_EXCLUDED,
    MEAN_OVER_POSITIVE_EXCLUDED,
    CandidatePrompt,
    FeatureMap,
    backward_match,
    correspondence_matrix,
    forward_match,
    select_hard_negatives,
)
from .patching import PatchLabel, label_reference_patches, patch_center
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

log = logging.getLogger(__name__)


class NegativeComposition(enum.Enum):
    BACKGROUND_ONLY = "background_only"
    HARD_ONLY = "hard_only"
    BACKGROUND_WITH_HARD = "background_with_hard"


@dataclass(frozen=True)
class Stages:
    forward: bool = True
    backward: bool = True
    exclusive: bool = True
    sparse: bool = True
    hard: bool = True


@dataclass(frozen=True)
class PipelineConfig:
    patch_size: int = 16
    stride: int = 16
    d_exclusive: RadiusSpec = RadiusSpec(0.25)
    d_sparse_positive: RadiusSpec = RadiusSpec(0.0)
    d_sparse_negative: RadiusSpec = RadiusSpec(0.125)
    stages: Stages = Stages()
    negative_composition: NegativeComposition = NegativeComposition.BACKGROUND_WITH_HARD
    hard_mean_scope: str = MEAN_OVER_POSITIVE_EXCLUDED
    sparsify_hard: bool = False


class ConfigError(ValueError):
    """A configuration violates its invariants."""


def validate_config(config: PipelineConfig) -> list[str]:
    """Return one message per violated rule; empty means valid."""
    violations = []
    if config.patch_size < 1:
        violations.append(f"patch_size: must be >= 1, got {config.patch_size}")
    if not 1 <= config.stride <= max(config.patch_size, 1):
        violations.append(
            f"stride: must be within [1, patch_size], got {config.stride}"
        )
    for name in ("d_exclusive", "d_sparse_positive", "d_sparse_negative"):
        frac = getattr(config, name).fraction
        if not 0.0 <= frac <= 1.0:
            violations.append(f"{name}: fraction must be in [0, 1], got {frac}")
    if not config.stages.forward:
        violations.append("stages: forward must always be enabled")
    dependent = [
        name
        for name in ("exclusive", "sparse", "hard")
        if getattr(config.stages, name)
    ]
    if dependent and not config.stages.backward:
        violations.append(
            f"stages: {', '.join(dependent)} require backward matching"
        )
    if config.hard_mean_scope not in (
        MEAN_OVER_POSITIVE_EXCLUDED,
        MEAN_OVER_ALL_EXCLUDED,
    ):
        violations.append(
            f"hard_mean_scope: unknown value {config.hard_mean_scope!r}"
        )
    return violations


@dataclass
class StageRecord:
    stage: str
    kept_points: list[PromptPoint]
    removed_points: list[PromptPoint]

    @property
    def kept(self) -> int:
        return len(self.kept_points)

    @property
    def removed(self) -> int:
        return len(self.removed_points)


@dataclass
class PipelineTrace:
    records: list[StageRecord] = field(default_factory=list)

    def add(self, stage: str, before: PromptScheme | None, after: PromptScheme):
        after_set = set(after.points)
        removed = [
            p for p in (before.points if before else ()) if p not in after_set
        ]
        self.records.append(StageRecord(stage, list(after.points), removed))

    def to_json_bytes(self) -> bytes:
        doc = [
            {
                "stage": rec.stage,
                "kept": rec.kept,
                "removed": rec.removed,
                "points_after": [[p.x, p.y, p.cls.value] for p in rec.kept_points],
            }
            for rec in self.records
        ]
        return (json.dumps(doc, separators=(",", ":")) + "\n").encode("utf-8")


def _candidates_to_points(
    candidates: list[CandidatePrompt], target_grid, cls_of
) -> list[PromptPoint]:
    """Map candidates to target patch centers, deduplicating (x, y, class)."""
    points: list[PromptPoint] = []
    seen = set()
    for cand in candidates:
        x, y = patch_center(target_grid, cand.target_patch)
        cls = cls_of(cand)
        key = (x, y, cls)
        if key in seen:
            continue
        seen.add(key)
        points.append(PromptPoint(x, y, cls))
    return points


def _label_to_class(cand: CandidatePrompt) -> PromptClass:
    return (
        PromptClass.POSITIVE
        if cand.label is PatchLabel.POSITIVE
        else PromptClass.NEGATIVE
    )


def run_pipeline(
    ref: FeatureMap,
    ref_mask: np.ndarray,
    target: FeatureMap,
    target_width: int,
    target_height: int,
    config: PipelineConfig,
) -> tuple[PromptScheme, PipelineTrace]:
    """Produce the prompt scheme for one target image.

    Raises ConfigError or ValueError before any heavy compute if the config
    or the input dimensions are inconsistent.
    """
    violations = validate_config(config)
    if violations:
        raise ConfigError("; ".join(violations))
    ref_mask = np.asarray(ref_mask)
    if ref_mask.shape != (ref.grid.image_height, ref.grid.image_width):
        raise ValueError(
            f"reference mask {ref_mask.shape} does not match reference grid image "
            f"{ref.grid.image_height}x{ref.grid.image_width}"
        )
    if ref.feature_dim != target.feature_dim:
        raise ValueError(
            f"feature_dim mismatch: reference {ref.feature_dim} vs "
            f"target {target.feature_dim}"
        )
    if (target.grid.image_width, target.grid.image_height) != (
        target_width,
        target_height,
    ):
        raise ValueError(
            f"target size {target_width}x{target_height} does not match target "
            f"grid image {target.grid.image_width}x{target.grid.image_height}"
        )

    trace = PipelineTrace()
    labels = label_reference_patches(ref.grid, ref_mask)
    matrix = correspondence_matrix(ref, target)
    candidates = forward_match(matrix, labels)
    log.debug("forward matching nominated %d candidates", len(candidates))

    scheme = PromptScheme(
        target_width,
        target_height,
        tuple(_candidates_to_points(candidates, target.grid, _label_to_class)),
    )
    trace.add("forward", None, scheme)

    hard_points: list[PromptPoint] = []
    if config.stages.backward:
        retained, excluded = backward_match(matrix, candidates, labels)
        log.debug("backward matching kept %d, excluded %d", len(retained), len(excluded))
        after = PromptScheme(
            target_width,
            target_height,
            tuple(_candidates_to_points(retained, target.grid, _label_to_class)),
        )
        trace.add("backward", scheme, after)
        scheme = after
        if (
            config.stages.hard
            and config.negative_composition is not NegativeComposition.BACKGROUND_ONLY
        ):
            hard = select_hard_negatives(excluded, config.hard_mean_scope)
            hard_points = _candidates_to_points(
                hard, target.grid, lambda c: PromptClass.HARD_NEGATIVE
            )

    radius_ex = resolve_radius(config.d_exclusive, target_width, target_height)
    if config.stages.exclusive:
        after = exclusive_sampling(scheme, radius_ex)
        trace.add("exclusive", scheme, after)
        scheme = after

    if config.stages.sparse:
        before = scheme
        scheme = sparse_sampling(
            scheme,
            PromptClass.POSITIVE,
            resolve_radius(config.d_sparse_positive, target_width, target_height),
        )
        scheme = sparse_sampling(
            scheme,
            PromptClass.NEGATIVE,
            resolve_radius(config.d_sparse_negative, target_width, target_height),
        )
        trace.add("sparse", before, scheme)

    if (
        config.stages.hard
        and config.negative_composition is not NegativeComposition.BACKGROUND_ONLY
    ):
        before = scheme
        scheme = merge_hard_negatives(scheme, hard_points, radius_ex)
        if config.sparsify_hard:
            scheme = sparse_sampling(
                scheme,
                PromptClass.NEGATIVE,
                resolve_radius(config.d_sparse_negative, target_width, target_height),
                include_hard_with_negative=True,
            )
        trace.add("hard", before, scheme)

    drop: PromptClass | None = None
    if config.negative_composition is NegativeComposition.BACKGROUND_ONLY:
        drop = PromptClass.HARD_NEGATIVE
    elif config.negative_composition is NegativeComposition.HARD_ONLY:
        drop = PromptClass.NEGATIVE
    if drop is not None:
        before = scheme
        scheme = scheme.replace_points(p for p in scheme.points if p.cls is not drop)
        trace.add("composition", before, scheme)

    return scheme, trace


# ---------------------------------------------------------------------------
# Flat key=value config files
# ---------------------------------------------------------------------------

_STAGE_NAMES = ("forward", "backward", "exclusive", "sparse", "hard")
_BOOL_VALUES = {"true": True, "false": False, "1": True, "0": False}


def config_to_text(config: PipelineConfig) -> str:
    lines = [
        f"patch_size={config.patch_size}",
        f"stride={config.stride}",
        f"d_exclusive={config.d_exclusive.fraction}",
        f"d_sparse_positive={config.d_sparse_positive.fraction}",
        f"d_sparse_negative={config.d_sparse_negative.fraction}",
        "stages=" + ",".join(n for n in _STAGE_NAMES if getattr(config.stages, n)),
        f"negative_composition={config.negative_composition.value}",
        f"hard_mean_scope={config.hard_mean_scope}",
        f"sparsify_hard={'true' if config.sparsify_hard else 'false'}",
    ]
    return "\n".join(lines) + "\n"


def config_from_pairs(pairs: dict[str, str]) -> PipelineConfig:
    """Build a config from key=value strings; unknown keys are errors."""
    config = PipelineConfig()
    for key, value in pairs.items():
        try:
            if key in ("patch_size", "stride"):
                config = replace(config, **{key: int(value)})
            elif key in ("d_exclusive", "d_sparse_positive", "d_sparse_negative"):
                config = replace(config, **{key: RadiusSpec(float(value))})
            elif key == "stages":
                names = [v.strip() for v in value.split(",") if v.strip()]
                unknown = [n for n in names if n not in _STAGE_NAMES]
                if unknown:
                    raise ConfigError(f"stages: unknown stage names {unknown}")
                config = replace(
                    config, stages=Stages(**{n: (n in names) for n in _STAGE_NAMES})
                )
            elif key == "negative_composition":
                config = replace(config, negative_composition=NegativeComposition(value))
            elif key == "hard_mean_scope":
                config = replace(config, hard_mean_scope=value)
            elif key == "sparsify_hard":
                if value.lower() not in _BOOL_VALUES:
                    raise ConfigError(f"sparsify_hard: not a boolean: {value!r}")
                config = replace(config, sparsify_hard=_BOOL_VALUES[value.lower()])
            else:
                raise ConfigError(f"unknown config key {key!r}")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    return config


def parse_config_text(text: str) -> PipelineConfig:
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value.strip()
    return config_from_pairs(pairs)


def load_config(path: str) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())
