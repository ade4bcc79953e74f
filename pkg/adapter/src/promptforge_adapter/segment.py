"""Run a promptable segmenter from a prompt-scheme JSON to a PGM mask.

Usage:
    promptforge-segment --image img.pgm --scheme scheme.json --out mask.pgm
                        [--model threshold] [--dump-scores scores.json]

Fulfills the engine's adapter command contract: writes a binary PGM mask
of exactly the scheme's image_size and exits 0, or exits nonzero with a
diagnostic on stderr. Hard-negative prompts are passed to the model as
negative point labels. When the model yields several proposals, the
highest-scoring one is written (earliest wins on ties).
"""

from __future__ import annotations

import argparse
import json
import sys

from . import formats, models


def segment_with_prompts(
    image_path: str,
    scheme_path: str,
    out_path: str,
    model: str = "threshold",
    dump_scores: str | None = None,
) -> None:
    scheme = formats.read_scheme(scheme_path)
    points = scheme["points"]
    if not points:
        raise ValueError("scheme has no prompt points; the segmenter needs at least one")
    w, h = scheme["size"]

    if model == "threshold":
        gray = formats.read_pgm(image_path)
        if gray.shape != (h, w):
            raise ValueError(
                f"image is {gray.shape[1]}x{gray.shape[0]}, scheme says {w}x{h}"
            )
        proposals, scores = models.threshold_proposals(gray, points)
        mask, chosen = models.pick_best(proposals, scores)
        if dump_scores:
            with open(dump_scores, "w", encoding="utf-8") as fh:
                json.dump({"scores": scores, "chosen": chosen}, fh)
    elif model.startswith("sam"):
        model_type = model.split(":", 1)[1] if ":" in model else "vit_b"
        mask = models.sam_segment(image_path, points, model_type)
        if mask.shape != (h, w):
            raise ValueError(
                f"segmenter produced {mask.shape[1]}x{mask.shape[0]}, "
                f"scheme says {w}x{h}"
            )
    else:
        raise ValueError(f"unknown model {model!r} (try threshold or sam:vit_b)")

    formats.write_mask(mask, out_path)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--image", required=True)
    parser.add_argument("--scheme", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--model", default="threshold")
    parser.add_argument("--dump-scores")
    args = parser.parse_args(argv)
    try:
        segment_with_prompts(
            args.image, args.scheme, args.out,
            model=args.model, dump_scores=args.dump_scores,
        )
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
