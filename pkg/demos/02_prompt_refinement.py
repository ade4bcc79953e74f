"""Stage-by-stage view of prompt refinement on one noisy synthetic case.

The trace records what every stage kept and removed; this is the same data
the `promptforge trace` subcommand turns into per-stage overlay images.
"""

from promptforge import (
    PipelineConfig,
    PromptClass,
    SyntheticCase,
    generate_synthetic,
    run_pipeline,
)

case = SyntheticCase(
    seed=5,
    image_width=256,
    image_height=96,
    feature_dim=8,
    cluster_separation=4.0,
    noise_sigma=2.0,
    object_scale=0.8,
    band=True,
    lookalike_fraction=0.15,
)
ref, ref_mask, target, truth = generate_synthetic(case)

scheme, trace = run_pipeline(
    ref, ref_mask, target, case.image_width, case.image_height, PipelineConfig()
)

print(f"{'stage':<12} {'kept':>5} {'removed':>8} {'pos':>5} {'neg':>5} {'hard':>5}")
for rec in trace.records:
    pos = sum(1 for p in rec.kept_points if p.cls is PromptClass.POSITIVE)
    neg = sum(1 for p in rec.kept_points if p.cls is PromptClass.NEGATIVE)
    hard = sum(1 for p in rec.kept_points if p.cls is PromptClass.HARD_NEGATIVE)
    print(f"{rec.stage:<12} {rec.kept:>5} {rec.removed:>8} {pos:>5} {neg:>5} {hard:>5}")

print(f"\nfinal scheme: {len(scheme.points)} points "
      f"({len(scheme.positives)} positive, "
      f"{len(scheme.negatives)} negative-kind)")
