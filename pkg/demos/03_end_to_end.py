"""Full loop: synthetic fixture -> prompt scheme -> baseline mask -> Dice.

Writes the prompt scheme, predicted mask, ground truth, and per-stage
overlays under demos/out/ so the run can be inspected with any PGM viewer.
"""

import json
import os

import numpy as np

from promptforge import (
    PipelineConfig,
    SyntheticCase,
    baseline_segment,
    dice,
    generate_synthetic,
    run_pipeline,
    save_mask,
    save_prompt_scheme,
)
from promptforge.tensor_io import save_image_gray

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

case = SyntheticCase(seed=12, image_width=384, image_height=96,
                     object_scale=0.92, band=True)
ref, ref_mask, target, truth = generate_synthetic(case)

scheme, trace = run_pipeline(
    ref, ref_mask, target, case.image_width, case.image_height, PipelineConfig()
)
pred = baseline_segment(scheme)
score = dice(pred, truth)

save_prompt_scheme(scheme, os.path.join(OUT, "scheme.json"))
with open(os.path.join(OUT, "trace.json"), "wb") as fh:
    fh.write(trace.to_json_bytes())
save_mask(pred, os.path.join(OUT, "predicted.pgm"))
save_mask(truth, os.path.join(OUT, "truth.pgm"))

# a quick composite: truth boundary region vs prediction
composite = np.full(truth.shape, 64, dtype=np.uint8)
composite[truth == 1] = 160
composite[(pred == 1) & (truth == 0)] = 255   # false positive band
composite[(pred == 0) & (truth == 1)] = 0     # missed object
save_image_gray(composite, os.path.join(OUT, "composite.pgm"))

print(f"prompt points: {len(scheme.points)} "
      f"({len(scheme.positives)} positive)")
print(f"Dice vs truth: {score:.4f}")
print(f"artifacts in {OUT}:")
for name in sorted(os.listdir(OUT)):
    print(f"  {name}")

doc = json.load(open(os.path.join(OUT, "trace.json")))
print("stage point counts:", {r["stage"]: r["kept"] for r in doc})
