"""Promptable-segmenter contract: a built-in baseline plus a file adapter.

The baseline labels each pixel by its nearest prompt point, which keeps the
whole pipeline testable without any model runtime: adding positives can only
grow the mask, adding negatives can only shrink it. Real segmenters are
reached through a subprocess adapter that exchanges scheme JSON and PGM
masks on disk.
"""

from __future__ import annotations

import logging
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass

import numpy as np

from . import tensor_io
from .spatial import PromptScheme

log = logging.getLogger(__name__)

_PLACEHOLDERS = ("{image}", "{scheme}", "{out}")


class SegmenterError(RuntimeError):
    """Base class for segmentation failures."""


class AdapterProcessError(SegmenterError):
    """External command exited nonzero."""

    def __init__(self, message: str, stderr: str = ""):
        super().__init__(message)
        self.stderr = stderr


class AdapterTimeoutError(SegmenterError):
    """External command exceeded its time budget."""


class AdapterOutputError(SegmenterError):
    """External command produced no mask, a bad mask, or the wrong size."""


def baseline_segment(scheme: PromptScheme) -> np.ndarray:
    """Nearest-prompt labeling: 1 where the closest point is positive.

    Distance ties go to the negative side, and hard negatives count as
    negative. Exact integer arithmetic on squared distances keeps the
    tie rule bit-stable.
    """
    pos = scheme.positives
    if not pos:
        raise SegmenterError("baseline segmenter needs at least one positive point")
    neg = scheme.negatives

    h, w = scheme.image_height, scheme.image_width
    xs = np.arange(w, dtype=np.int64)[None, :]
    ys = np.arange(h, dtype=np.int64)[:, None]

    def min_sq(points):
        best = np.full((h, w), np.iinfo(np.int64).max, dtype=np.int64)
        for p in points:
            d2 = (xs - p.x) ** 2 + (ys - p.y) ** 2
            np.minimum(best, d2, out=best)
        return best

    d_pos = min_sq(pos)
    if not neg:
        return np.ones((h, w), dtype=np.uint8)
    d_neg = min_sq(neg)
    return (d_pos < d_neg).astype(np.uint8)


@dataclass(frozen=True)
class SegmenterAdapter:
    """External command bridging to a real promptable segmenter.

    ``invocation`` is a shell-style template whose {image}, {scheme} and
    {out} placeholders are substituted per call. The command must write a
    binary PGM mask at {out} and exit 0.
    """

    invocation: str
    workdir: str = "."
    timeout: float = 120.0

    def __post_init__(self):
        missing = [ph for ph in _PLACEHOLDERS if ph not in self.invocation]
        if missing:
            raise ValueError(f"invocation template missing placeholders {missing}")


def external_segment(
    adapter: SegmenterAdapter, image_path: str, scheme: PromptScheme
) -> np.ndarray:
    """Run the adapter command on one image + scheme, return the mask."""
    if not os.path.exists(image_path):
        raise FileNotFoundError(image_path)
    os.makedirs(adapter.workdir, exist_ok=True)
    fd, scheme_path = tempfile.mkstemp(suffix=".json", dir=adapter.workdir)
    os.close(fd)
    out_path = scheme_path[:-5] + ".out.pgm"
    try:
        tensor_io.save_prompt_scheme(scheme, scheme_path)
        argv = [
            tok.format(image=image_path, scheme=scheme_path, out=out_path)
            for tok in shlex.split(adapter.invocation)
        ]
        log.debug("invoking segmenter adapter: %s", argv)
        try:
            proc = subprocess.run(
                argv,
                cwd=adapter.workdir,
                capture_output=True,
                text=True,
                timeout=adapter.timeout,
            )
        except subprocess.TimeoutExpired:
            raise AdapterTimeoutError(
                f"segmenter command timed out after {adapter.timeout}s"
            ) from None
        if proc.returncode != 0:
            raise AdapterProcessError(
                f"segmenter command exited {proc.returncode}: {proc.stderr.strip()}",
                stderr=proc.stderr,
            )
        if not os.path.exists(out_path):
            raise AdapterOutputError("segmenter command wrote no output mask")
        try:
            mask = tensor_io.load_mask(out_path)
        except tensor_io.TensorIOError as exc:
            raise AdapterOutputError(f"output mask unreadable: {exc}") from None
        if mask.shape != (scheme.image_height, scheme.image_width):
            raise AdapterOutputError(
                f"output mask is {mask.shape[1]}x{mask.shape[0]}, scheme says "
                f"{scheme.image_width}x{scheme.image_height}"
            )
        return mask
    finally:
        for path in (scheme_path, out_path):
            try:
                os.unlink(path)
            except OSError:
                pass


def load_adapter_file(path: str) -> SegmenterAdapter:
    """Read an adapter description file.

    First non-comment line is the invocation template; optional
    ``timeout=<seconds>`` and ``workdir=<dir>`` lines follow.
    """
    invocation = None
    timeout = 120.0
    workdir = "."
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("timeout="):
                timeout = float(line.split("=", 1)[1])
            elif line.startswith("workdir="):
                workdir = line.split("=", 1)[1]
            elif invocation is None:
                invocation = line
            else:
                raise ValueError(f"{path}: unexpected extra line {line!r}")
    if invocation is None:
        raise ValueError(f"{path}: no invocation template found")
    return SegmenterAdapter(invocation=invocation, workdir=workdir, timeout=timeout)
