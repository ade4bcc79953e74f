"""Dice metric, synthetic fixtures, and the hyperparameter sweep harness.

Synthetic cases stand in for a real annotated dataset: a reference image and
a target image share one object shape placed at different positions, and
patch features are drawn from two well-separated Gaussian clusters (object
vs background). Each cluster is a deterministic sequence of per-patch
prototype vectors shared between reference and target, so at zero noise
every reference patch has a target twin at distance exactly zero while all
patches stay pairwise distinct. Noise on top of the prototypes produces the
hard regime where matching errors appear and the screening stages earn
their keep.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor_io
from .matching import FeatureMap
from .patching import build_patch_grid, patch_centers
from .pipeline import NegativeComposition, PipelineConfig, Stages, run_pipeline
from .segmenter import SegmenterAdapter, baseline_segment, external_segment
from .spatial import RadiusSpec

log = logging.getLogger(__name__)


def dice(pred: np.ndarray, truth: np.ndarray) -> float:
    """Dice similarity 2|P∩T| / (|P|+|T|); two empty masks count as 1.0."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {truth.shape}")
    p = pred != 0
    t = truth != 0
    total = int(p.sum()) + int(t.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((p & t).sum()) / total


# ---------------------------------------------------------------------------
# Synthetic cases
# ---------------------------------------------------------------------------

# Prototype spread within a cluster, as a fraction of the cluster separation.
# Small enough that cluster membership dominates, large enough that every
# patch feature is distinct and matching minima are unique.
_SPREAD_FRACTION = 0.05


@dataclass(frozen=True)
class SyntheticCase:
    """Recipe for one deterministic (reference, target) fixture pair.

    ``band=True`` draws the object as a ribbon spanning the image's short
    dimension (membrane-like structures); otherwise it is a compact
    rectangle or ellipse strictly inside the image.
    """

    seed: int
    image_width: int = 128
    image_height: int = 128
    patch_size: int = 16
    stride: int = 16
    feature_dim: int = 16
    noise_sigma: float = 0.0
    cluster_separation: float | None = None
    object_scale: float = 0.45
    band: bool = False
    lookalike_fraction: float = 0.0

    def separation(self) -> float:
        """Explicit separation, or one wide enough for clean matching.

        The automatic value keeps the clusters at least six noise sigmas
        apart even after the sqrt(2 * dim) growth of intra-cluster
        distances, so samples from different clusters never interleave.
        """
        if self.cluster_separation is not None:
            return self.cluster_separation
        return max(1.0, 6.0 * self.noise_sigma * np.sqrt(2.0 * self.feature_dim))


def _place_object(rng: np.random.Generator, case: SyntheticCase, shape: str,
                  obj_w: int, obj_h: int) -> np.ndarray:
    """Rasterize the object at a random position strictly inside the image."""
    margin = 2
    x0 = int(rng.integers(margin, case.image_width - obj_w - margin + 1))
    y0 = int(rng.integers(margin, case.image_height - obj_h - margin + 1))
    mask = np.zeros((case.image_height, case.image_width), dtype=np.uint8)
    if shape == "rectangle":
        mask[y0:y0 + obj_h, x0:x0 + obj_w] = 1
    else:
        cy, cx = y0 + obj_h / 2.0, x0 + obj_w / 2.0
        yy, xx = np.mgrid[0:case.image_height, 0:case.image_width]
        inside = ((xx - cx) / (obj_w / 2.0)) ** 2 + ((yy - cy) / (obj_h / 2.0)) ** 2 <= 1.0
        mask[inside] = 1
    return mask


def _features_for(
    mask: np.ndarray,
    grid,
    prototypes: dict[bool, np.ndarray],
    sigma: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Assign each patch its cluster prototype (by scan-order ordinal) plus noise."""
    centers = patch_centers(grid)
    inside = mask[centers[:, 1], centers[:, 0]] != 0
    dim = prototypes[True].shape[1]
    feats = np.empty((grid.num_patches, dim), dtype=np.float64)
    for is_object in (True, False):
        idx = np.flatnonzero(inside == is_object)
        protos = prototypes[is_object]
        ordinals = np.arange(len(idx)) % len(protos)
        feats[idx] = protos[ordinals]
    if sigma > 0:
        feats = feats + rng.normal(0.0, sigma, size=feats.shape)
    return feats.astype(np.float32)


def generate_synthetic(
    case: SyntheticCase,
) -> tuple[FeatureMap, np.ndarray, FeatureMap, np.ndarray]:
    """Build (ref features, ref mask, target features, target truth mask)."""
    if not 0.05 <= case.object_scale <= 0.95:
        raise ValueError(f"object_scale must be in [0.05, 0.95], got {case.object_scale}")
    grid = build_patch_grid(
        case.image_width, case.image_height, case.patch_size, case.stride
    )
    rng = np.random.default_rng(case.seed)

    if case.band:
        shape = "rectangle"
        long_dim = max(case.image_width, case.image_height)
        short_dim = min(case.image_width, case.image_height)
        length = int(case.object_scale * long_dim * float(rng.uniform(0.92, 1.05)))
        length = min(max(length, case.patch_size), long_dim - 8)
        thickness = short_dim - 2 * 3
        if case.image_width >= case.image_height:
            obj_w, obj_h = length, thickness
        else:
            obj_w, obj_h = thickness, length
    else:
        shape = "rectangle" if rng.random() < 0.5 else "ellipse"
        base = case.object_scale * min(case.image_width, case.image_height)
        obj_w = max(case.patch_size, int(base * float(rng.uniform(0.85, 1.15))))
        obj_h = max(case.patch_size, int(base * float(rng.uniform(0.85, 1.15))))
        obj_w = min(obj_w, case.image_width - 4)
        obj_h = min(obj_h, case.image_height - 4)

    ref_mask = _place_object(rng, case, shape, obj_w, obj_h)
    target_mask = _place_object(rng, case, shape, obj_w, obj_h)
    if not ref_mask.any() or not target_mask.any():
        raise ValueError("degenerate geometry: empty object region")

    sep = case.separation()
    spread = _SPREAD_FRACTION * sep
    direction = rng.normal(size=case.feature_dim)
    direction /= np.linalg.norm(direction)
    center_bg = rng.normal(0.0, 0.5, size=case.feature_dim)
    center_obj = center_bg + sep * direction

    proto_rng = np.random.default_rng([case.seed, 0xC1])
    n_protos = grid.num_patches
    prototypes = {
        True: center_obj
        + proto_rng.normal(0.0, spread / np.sqrt(case.feature_dim), (n_protos, case.feature_dim)),
        False: center_bg
        + proto_rng.normal(0.0, spread / np.sqrt(case.feature_dim), (n_protos, case.feature_dim)),
    }
    if case.lookalike_fraction > 0:
        # A subset of background prototypes sits much closer to the object
        # cluster: confusable regions that draw false-positive matches.
        count = int(round(case.lookalike_fraction * n_protos))
        chosen = proto_rng.choice(n_protos, size=count, replace=False)
        prototypes[False][chosen] += 0.65 * sep * direction

    ref_feats = _features_for(
        ref_mask, grid, prototypes, case.noise_sigma, np.random.default_rng([case.seed, 0xA1])
    )
    target_feats = _features_for(
        target_mask, grid, prototypes, case.noise_sigma, np.random.default_rng([case.seed, 0xB2])
    )
    return (
        FeatureMap(grid=grid, features=ref_feats),
        ref_mask,
        FeatureMap(grid=grid, features=target_feats),
        target_mask,
    )


# ---------------------------------------------------------------------------
# Case bundles (synthetic or from a dataset manifest)
# ---------------------------------------------------------------------------

@dataclass
class CaseData:
    case_id: str
    ref: FeatureMap
    ref_mask: np.ndarray
    target: FeatureMap
    target_truth: np.ndarray
    target_image: str | None = None


def materialize_cases(cases) -> list[CaseData]:
    """Accept SyntheticCase recipes or ready CaseData bundles."""
    out = []
    for i, case in enumerate(cases):
        if isinstance(case, CaseData):
            out.append(case)
        elif isinstance(case, SyntheticCase):
            ref, ref_mask, target, truth = generate_synthetic(case)
            out.append(
                CaseData(f"synth{case.seed:04d}", ref, ref_mask, target, truth)
            )
        else:
            raise TypeError(f"case {i}: expected SyntheticCase or CaseData")
    return out


def load_manifest(path: str) -> list[CaseData]:
    """Read a dataset manifest: a JSON list of per-case file path records."""
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as fh:
        entries = json.load(fh)
    if not isinstance(entries, list):
        raise ValueError(f"{path}: manifest must be a JSON list")
    cases = []
    for i, entry in enumerate(entries):
        required = ("ref_features", "ref_mask", "target_features", "target_mask")
        missing = [k for k in required if k not in entry]
        if missing:
            raise ValueError(f"{path}: entry {i} missing keys {missing}")

        def _resolve(rel):
            return rel if os.path.isabs(rel) else os.path.join(base, rel)

        target_image = entry.get("target_image")
        cases.append(
            CaseData(
                case_id=entry.get("id", f"case{i:04d}"),
                ref=tensor_io.load_feature_map(_resolve(entry["ref_features"])),
                ref_mask=tensor_io.load_mask(_resolve(entry["ref_mask"])),
                target=tensor_io.load_feature_map(_resolve(entry["target_features"])),
                target_truth=tensor_io.load_mask(_resolve(entry["target_mask"])),
                target_image=_resolve(target_image) if target_image else None,
            )
        )
    return cases


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

@dataclass
class EvalRecord:
    config_id: str
    config: PipelineConfig
    dsc: list[float] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)

    @property
    def mean_dsc(self) -> float:
        return float(np.mean(self.dsc)) if self.dsc else float("nan")


def _segment(segmenter, case: CaseData, scheme):
    if segmenter == "baseline":
        return baseline_segment(scheme)
    if isinstance(segmenter, SegmenterAdapter):
        if not case.target_image:
            raise ValueError(f"{case.case_id}: no target image for external segmenter")
        return external_segment(segmenter, case.target_image, scheme)
    raise TypeError(f"segmenter must be 'baseline' or SegmenterAdapter, got {segmenter!r}")


def _run_one(config: PipelineConfig, case: CaseData, segmenter) -> float:
    scheme, _ = run_pipeline(
        case.ref,
        case.ref_mask,
        case.target,
        case.target.grid.image_width,
        case.target.grid.image_height,
        config,
    )
    mask = _segment(segmenter, case, scheme)
    return dice(mask, case.target_truth)


def sweep(grid, cases, segmenter="baseline", jobs: int = 1) -> list[EvalRecord]:
    """Run every config over every case; failures are recorded, not raised.

    ``grid`` entries are PipelineConfig values or (config_id, config) pairs.
    Results are ordered by (config index, case index) regardless of worker
    scheduling, so identical inputs always produce identical records.
    """
    if not grid:
        raise ValueError("sweep grid is empty")
    entries = [
        entry if isinstance(entry, tuple) else (f"cfg{i:02d}", entry)
        for i, entry in enumerate(grid)
    ]
    bundles = materialize_cases(cases)
    if not bundles:
        raise ValueError("no cases to evaluate")

    tasks = [(ci, cfg_id, cfg, ki, case)
             for ci, (cfg_id, cfg) in enumerate(entries)
             for ki, case in enumerate(bundles)]

    def job(task):
        _, _, cfg, _, case = task
        try:
            return _run_one(cfg, case, segmenter), None
        except Exception as exc:  # recorded per case, sweep continues
            log.info("case %s failed: %s", case.case_id, exc)
            return None, f"{case.case_id}: {type(exc).__name__}: {exc}"

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(job, tasks))
    else:
        outcomes = [job(t) for t in tasks]

    records = [EvalRecord(cfg_id, cfg) for cfg_id, cfg in entries]
    for (ci, _, _, _, _), (value, failure) in zip(tasks, outcomes):
        if failure is None:
            records[ci].dsc.append(value)
        else:
            records[ci].failures.append(failure)
    return records


def fraction_label(fraction: float) -> str:
    """Human label for a radius fraction: 0 stays bare, otherwise a percent."""
    if fraction == 0:
        return "0"
    return f"{fraction * 100:.2f}%"


def _stage_label(stages: Stages) -> str:
    names = [n for n in ("forward", "backward", "exclusive", "sparse", "hard")
             if getattr(stages, n)]
    return "+".join(n[0] for n in names)


def ablation_grid(base: PipelineConfig = PipelineConfig()) -> list[tuple[str, PipelineConfig]]:
    """Five cumulative stage sets, from forward matching alone to all stages."""
    stage_sets = [
        Stages(True, False, False, False, False),
        Stages(True, True, False, False, False),
        Stages(True, True, True, False, False),
        Stages(True, True, True, True, False),
        Stages(True, True, True, True, True),
    ]
    return [
        (_stage_label(s), replace(base, stages=s)) for s in stage_sets
    ]


def composition_grid(base: PipelineConfig = PipelineConfig()) -> list[tuple[str, PipelineConfig]]:
    """Three negative-prompt compositions: background, hard, and both."""
    return [
        (comp.value, replace(base, negative_composition=comp))
        for comp in (
            NegativeComposition.BACKGROUND_ONLY,
            NegativeComposition.HARD_ONLY,
            NegativeComposition.BACKGROUND_WITH_HARD,
        )
    ]


def exclusive_radius_grid(
    fractions, base: PipelineConfig = PipelineConfig()
) -> list[tuple[str, PipelineConfig]]:
    return [
        (fraction_label(f), replace(base, d_exclusive=RadiusSpec(f)))
        for f in fractions
    ]


def sparse_radius_grid(
    pairs, base: PipelineConfig = PipelineConfig()
) -> list[tuple[str, PipelineConfig]]:
    """Grid over (positive, negative) sparse radius fraction pairs."""
    return [
        (
            f"{fraction_label(p)}/{fraction_label(n)}",
            replace(
                base,
                d_sparse_positive=RadiusSpec(p),
                d_sparse_negative=RadiusSpec(n),
            ),
        )
        for p, n in pairs
    ]


def records_to_csv(records: list[EvalRecord], segmenter_tag: str = "baseline") -> str:
    """Render sweep records as CSV: hyperparameters, per-segmenter DSC, average."""
    header = [
        "config_id",
        "d_exclusive",
        "d_sparse_positive",
        "d_sparse_negative",
        "stages",
        "negative_composition",
        f"dsc_{segmenter_tag}",
        "dsc_average",
        "cases_ok",
        "cases_failed",
        "notes",
    ]
    lines = [",".join(header)]
    for rec in records:
        cfg = rec.config
        mean = rec.mean_dsc
        mean_txt = "" if np.isnan(mean) else f"{mean:.4f}"
        notes = ";".join(rec.failures)
        if "," in notes or '"' in notes:
            notes = '"' + notes.replace('"', '""') + '"'
        row = [
            rec.config_id,
            fraction_label(cfg.d_exclusive.fraction),
            fraction_label(cfg.d_sparse_positive.fraction),
            fraction_label(cfg.d_sparse_negative.fraction),
            _stage_label(cfg.stages),
            cfg.negative_composition.value,
            mean_txt,
            mean_txt,
            str(len(rec.dsc)),
            str(len(rec.failures)),
            notes,
        ]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Writing synthetic fixtures to disk
# ---------------------------------------------------------------------------

def write_synthetic_dataset(cases: list[SyntheticCase], out_dir: str) -> str:
    """Materialize cases as FPT/PGM files plus a manifest; returns manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for case in cases:
        ref, ref_mask, target, truth = generate_synthetic(case)
        prefix = f"case{case.seed:04d}"
        paths = {
            "ref_features": f"{prefix}_ref.fpt",
            "ref_mask": f"{prefix}_ref_mask.pgm",
            "target_features": f"{prefix}_target.fpt",
            "target_mask": f"{prefix}_target_mask.pgm",
        }
        tensor_io.save_feature_map(ref, os.path.join(out_dir, paths["ref_features"]))
        tensor_io.save_mask(ref_mask, os.path.join(out_dir, paths["ref_mask"]))
        tensor_io.save_feature_map(
            target, os.path.join(out_dir, paths["target_features"])
        )
        tensor_io.save_mask(truth, os.path.join(out_dir, paths["target_mask"]))
        entries.append({"id": prefix, **paths})
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(entries, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path
