"""Dump a vision encoder's patch features to an FPT file plus sidecar.

Usage:
    promptforge-extract --image img.pgm --out feats.fpt [--model patchstats]
                        [--patch-size 16] [--stride 16] [--resample-to 16]

The sidecar ``<out>.json`` carries the grid geometry the engine treats as
authoritative (plus the model tag and whether the feature grid was
resampled from the encoder's native patch size).
"""

from __future__ import annotations

import argparse
import sys

from . import formats, models


def extract_features(
    image_path: str,
    model: str,
    out_path: str,
    patch_size: int = 16,
    stride: int = 16,
    resample_to: int | None = None,
) -> None:
    if model == "patchstats":
        gray = formats.read_pgm(image_path)
        feats, rows, cols = models.patchstats_features(gray, patch_size, stride)
        h, w = gray.shape
        effective_patch, effective_stride, resampled = patch_size, stride, False
    elif model.startswith("dinov2"):
        name = model if model != "dinov2" else "dinov2_vits14"
        feats, rows, cols, effective_patch, resampled = models.dinov2_features(
            image_path, name, resample_to
        )
        effective_stride = effective_patch
        w = cols * effective_patch
        h = rows * effective_patch
    else:
        raise ValueError(f"unknown model {model!r} (try patchstats or dinov2_vits14)")

    if feats.shape[0] != rows * cols:
        raise RuntimeError(
            f"feature rows {feats.shape[0]} disagree with grid {rows}x{cols}"
        )
    formats.write_fpt(feats, out_path)
    formats.write_grid_sidecar(
        out_path + ".json",
        image_width=w,
        image_height=h,
        patch_size=effective_patch,
        stride=effective_stride,
        rows=rows,
        cols=cols,
        model=model,
        resampled=resampled,
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--image", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--model", default="patchstats")
    parser.add_argument("--patch-size", type=int, default=16)
    parser.add_argument("--stride", type=int, default=16)
    parser.add_argument("--resample-to", type=int, default=None)
    args = parser.parse_args(argv)
    try:
        extract_features(
            args.image, args.model, args.out,
            patch_size=args.patch_size, stride=args.stride,
            resample_to=args.resample_to,
        )
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
