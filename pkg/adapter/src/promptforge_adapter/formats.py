"""Interchange file writers/readers, implemented against the wire formats.

Deliberately independent of the engine package: conformance means these
bytes load through the engine's own loaders, not that both sides share
code.
"""

from __future__ import annotations

import json

import numpy as np

FPT_MAGIC = b"FPT1\n\0"


def write_fpt(array: np.ndarray, path: str) -> None:
    arr = np.asarray(array, dtype=np.float32)
    if arr.ndim not in (2, 3):
        raise ValueError(f"tensor rank must be 2 or 3, got {arr.ndim}")
    shape = ",".join(str(d) for d in arr.shape)
    with open(path, "wb") as fh:
        fh.write(FPT_MAGIC)
        fh.write(b"dtype=f32\n")
        fh.write(f"shape={shape}\n".encode("ascii"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def write_grid_sidecar(
    path: str,
    image_width: int,
    image_height: int,
    patch_size: int,
    stride: int,
    rows: int,
    cols: int,
    **extra,
) -> None:
    meta = {
        "image_width": image_width,
        "image_height": image_height,
        "patch_size": patch_size,
        "stride": stride,
        "rows": rows,
        "cols": cols,
    }
    meta.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, separators=(",", ":"), sort_keys=True)
        fh.write("\n")


def read_pgm(path: str) -> np.ndarray:
    """Binary PGM (P5) to a uint8 (h, w) array, raw gray values."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:2] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    fields: list[int] = []
    i = 2
    while len(fields) < 3:
        if i >= len(blob):
            raise ValueError(f"{path}: header ended early")
        c = blob[i:i + 1]
        if c == b"#":
            i = blob.find(b"\n", i)
            if i < 0:
                raise ValueError(f"{path}: unterminated comment")
            i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(blob) and not blob[j:j + 1].isspace():
                j += 1
            fields.append(int(blob[i:j]))
            i = j
    w, h, maxval = fields
    if not (0 < w and 0 < h and 0 < maxval <= 255):
        raise ValueError(f"{path}: bad header {w}x{h} maxval {maxval}")
    i += 1
    data = blob[i:i + w * h]
    if len(data) != w * h:
        raise ValueError(f"{path}: truncated raster")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w).copy()


def write_pgm(image: np.ndarray, path: str) -> None:
    arr = np.asarray(image, dtype=np.uint8)
    if arr.ndim != 2:
        raise ValueError(f"image must be 2-D, got {arr.shape}")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def write_mask(mask: np.ndarray, path: str) -> None:
    write_pgm((np.asarray(mask) != 0).astype(np.uint8) * 255, path)


def read_scheme(path: str) -> dict:
    """Prompt-scheme JSON to {'size': (w, h), 'points': [(x, y, label)]}.

    Labels follow the promptable-segmenter convention: 1 for positive, 0
    for negative; hard negatives are passed as negative point labels.
    """
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    size = doc.get("image_size")
    if not (isinstance(size, list) and len(size) == 2):
        raise ValueError(f"{path}: missing image_size")
    points = []
    for key, label in (("positive", 1), ("negative", 0), ("hard_negative", 0)):
        for entry in doc.get(key, []):
            points.append((int(entry[0]), int(entry[1]), label))
    return {"size": (int(size[0]), int(size[1])), "points": points}
