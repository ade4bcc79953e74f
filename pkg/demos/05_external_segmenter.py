"""The subprocess adapter contract, exercised with a throwaway segmenter.

Any executable that accepts an image path, a scheme JSON path, and an
output path, writes a binary PGM mask, and exits 0 can serve as the
segmenter. Here the stand-in paints a disc around each positive prompt,
just to show the plumbing; the real thing would run a promptable model.
"""

import os
import sys
import tempfile

import numpy as np

from promptforge import (
    PipelineConfig,
    SegmenterAdapter,
    SyntheticCase,
    dice,
    external_segment,
    generate_synthetic,
    run_pipeline,
)
from promptforge.tensor_io import save_image_gray

TOY_SEGMENTER = '''
import json, sys
import numpy as np

image_path, scheme_path, out_path = sys.argv[1:4]
doc = json.load(open(scheme_path))
w, h = doc["image_size"]
yy, xx = np.mgrid[0:h, 0:w]
mask = np.zeros((h, w), dtype=np.uint8)
for x, y in doc["positive"]:
    mask[(xx - x) ** 2 + (yy - y) ** 2 <= 20 ** 2] = 1
with open(out_path, "wb") as fh:
    fh.write(b"P5\\n%d %d\\n255\\n" % (w, h))
    fh.write((mask * 255).tobytes())
'''

case = SyntheticCase(seed=4, image_width=256, image_height=96,
                     object_scale=0.85, band=True)
ref, ref_mask, target, truth = generate_synthetic(case)
scheme, _ = run_pipeline(
    ref, ref_mask, target, case.image_width, case.image_height, PipelineConfig()
)

with tempfile.TemporaryDirectory() as workdir:
    script = os.path.join(workdir, "toy_segmenter.py")
    with open(script, "w") as fh:
        fh.write(TOY_SEGMENTER)
    image_path = os.path.join(workdir, "target.pgm")
    save_image_gray((truth * 200 + 30).astype(np.uint8), image_path)

    adapter = SegmenterAdapter(
        invocation=f"{sys.executable} {script} {{image}} {{scheme}} {{out}}",
        workdir=workdir,
        timeout=30.0,
    )
    mask = external_segment(adapter, image_path, scheme)

print(f"adapter returned a {mask.shape[1]}x{mask.shape[0]} mask, "
      f"{int(mask.sum())} foreground pixels")
print(f"Dice vs truth (toy segmenter, expectedly rough): {dice(mask, truth):.4f}")
