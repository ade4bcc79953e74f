"""Readers and writers for the on-disk interchange formats.

Three formats cross the process boundary:

* FPT tensor files: a fixed ASCII header followed by raw little-endian
  float32 data, used for patch feature matrices.
* Binary masks: 8-bit binary PGM (``P5``, maxval 255).
* Prompt schemes: a small JSON document listing labeled pixel coordinates.

All loaders validate before returning; all writers produce files that the
matching loader reproduces exactly (value-level round trip, byte-level for
tensors).
"""

from __future__ import annotations

import json
import os

import numpy as np

from .spatial import PromptClass, PromptPoint, PromptScheme

FPT_MAGIC = b"FPT1\n\0"

# Guard against absurd header values before allocating anything.
MAX_PIXELS = 1 << 28
MAX_TENSOR_ELEMENTS = 1 << 28


class TensorIOError(ValueError):
    """Base class for interchange-format failures."""


class MalformedHeaderError(TensorIOError):
    """Magic, shape line, or header framing is not as expected."""


class UnsupportedDtypeError(TensorIOError):
    """Tensor file declares an element type other than float32."""


class TruncatedDataError(TensorIOError):
    """Payload byte count disagrees with the declared shape."""


class MaskFormatError(TensorIOError):
    """Mask file is not a binary PGM we can read."""


class SchemeFormatError(TensorIOError):
    """Prompt scheme JSON is structurally invalid."""


# ---------------------------------------------------------------------------
# FPT tensor files
# ---------------------------------------------------------------------------

def save_tensor(array: np.ndarray, path: str | os.PathLike) -> None:
    """Write ``array`` (float32, rank 2 or 3) as an FPT file."""
    arr = np.asarray(array)
    if arr.dtype != np.float32:
        raise UnsupportedDtypeError(
            f"tensor files hold float32 only, got {arr.dtype}"
        )
    if arr.ndim not in (2, 3):
        raise MalformedHeaderError(
            f"tensor rank must be 2 or 3, got {arr.ndim}"
        )
    shape_line = "shape=" + ",".join(str(d) for d in arr.shape)
    header = FPT_MAGIC + b"dtype=f32\n" + shape_line.encode("ascii") + b"\n\n"
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_tensor(path: str | os.PathLike) -> np.ndarray:
    """Read an FPT file back into a float32 array of the declared shape."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(FPT_MAGIC) or blob[: len(FPT_MAGIC)] != FPT_MAGIC:
        raise MalformedHeaderError(f"{path}: bad magic, not an FPT file")
    rest = blob[len(FPT_MAGIC):]

    dtype_line, sep, rest = rest.partition(b"\n")
    if not sep:
        raise MalformedHeaderError(f"{path}: header ends inside dtype line")
    if not dtype_line.startswith(b"dtype="):
        raise MalformedHeaderError(f"{path}: expected dtype line, got {dtype_line!r}")
    if dtype_line != b"dtype=f32":
        raise UnsupportedDtypeError(
            f"{path}: unsupported dtype {dtype_line[6:].decode('ascii', 'replace')!r}"
        )

    shape_line, sep, rest = rest.partition(b"\n")
    if not sep or not shape_line.startswith(b"shape="):
        raise MalformedHeaderError(f"{path}: missing shape line")
    try:
        shape = tuple(int(tok) for tok in shape_line[6:].split(b","))
    except ValueError:
        raise MalformedHeaderError(
            f"{path}: non-integer shape {shape_line[6:]!r}"
        ) from None
    if len(shape) not in (2, 3) or any(d < 0 for d in shape):
        raise MalformedHeaderError(f"{path}: invalid shape {shape}")

    if not rest.startswith(b"\n"):
        raise MalformedHeaderError(f"{path}: missing blank line after header")
    payload = rest[1:]

    count = 1
    for d in shape:
        count *= d
    if count > MAX_TENSOR_ELEMENTS:
        raise MalformedHeaderError(f"{path}: declared shape {shape} is too large")
    if len(payload) != 4 * count:
        raise TruncatedDataError(
            f"{path}: expected {4 * count} payload bytes, found {len(payload)}"
        )
    return np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(shape)


# ---------------------------------------------------------------------------
# PGM masks
# ---------------------------------------------------------------------------

def save_mask(mask: np.ndarray, path: str | os.PathLike) -> None:
    """Write a binary (h, w) mask as PGM P5; ones are stored as 255."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise MaskFormatError(f"mask must be 2-D, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise MaskFormatError("mask values must be 0 or 1")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write((arr.astype(np.uint8) * 255).tobytes())


def _pgm_tokens(blob: bytes, count: int, path) -> tuple[list[int], int]:
    """Read `count` whitespace/comment separated ASCII integers, return offset."""
    tokens: list[int] = []
    i = 0
    while len(tokens) < count:
        if i >= len(blob):
            raise MaskFormatError(f"{path}: header ended early")
        c = blob[i:i + 1]
        if c == b"#":
            nl = blob.find(b"\n", i)
            i = len(blob) if nl < 0 else nl + 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(blob) and not blob[j:j + 1].isspace() and blob[j:j + 1] != b"#":
                j += 1
            tok = blob[i:j]
            if not tok.isdigit():
                raise MaskFormatError(f"{path}: bad header token {tok!r}")
            tokens.append(int(tok))
            i = j
    return tokens, i


def load_mask(path: str | os.PathLike) -> np.ndarray:
    """Read a PGM P5 file into a uint8 (h, w) array; any nonzero pixel maps to 1."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:2] != b"P5":
        raise MaskFormatError(f"{path}: not a binary PGM (magic {blob[:2]!r})")
    (w, h, maxval), offset = _pgm_tokens(blob[2:], 3, path)
    offset += 2
    if w < 1 or h < 1 or w * h > MAX_PIXELS:
        raise MaskFormatError(f"{path}: unreasonable dimensions {w}x{h}")
    if not 1 <= maxval <= 255:
        raise MaskFormatError(f"{path}: unsupported maxval {maxval}")
    # Exactly one whitespace byte separates header from raster data.
    offset += 1
    data = blob[offset:offset + w * h]
    if len(data) != w * h:
        raise MaskFormatError(
            f"{path}: expected {w * h} raster bytes, found {len(data)}"
        )
    raw = np.frombuffer(data, dtype=np.uint8).reshape(h, w)
    return (raw != 0).astype(np.uint8)


def load_image_gray(path: str | os.PathLike) -> np.ndarray:
    """Read a PGM P5 file keeping its raw gray values (for overlays)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:2] != b"P5":
        raise MaskFormatError(f"{path}: not a binary PGM (magic {blob[:2]!r})")
    (w, h, maxval), offset = _pgm_tokens(blob[2:], 3, path)
    offset += 2 + 1
    if w < 1 or h < 1 or w * h > MAX_PIXELS or not 1 <= maxval <= 255:
        raise MaskFormatError(f"{path}: bad header ({w}x{h}, maxval {maxval})")
    data = blob[offset:offset + w * h]
    if len(data) != w * h:
        raise MaskFormatError(f"{path}: expected {w * h} raster bytes, found {len(data)}")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w).copy()


def save_image_gray(image: np.ndarray, path: str | os.PathLike) -> None:
    """Write a uint8 grayscale (h, w) array as PGM P5."""
    arr = np.asarray(image, dtype=np.uint8)
    if arr.ndim != 2:
        raise MaskFormatError(f"image must be 2-D, got shape {arr.shape}")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


# ---------------------------------------------------------------------------
# Prompt scheme JSON
# ---------------------------------------------------------------------------

_CLASS_KEYS = (
    ("positive", PromptClass.POSITIVE),
    ("negative", PromptClass.NEGATIVE),
    ("hard_negative", PromptClass.HARD_NEGATIVE),
)


def scheme_to_json_bytes(scheme: PromptScheme) -> bytes:
    """Canonical JSON encoding; identical schemes serialize to identical bytes."""
    doc: dict = {"image_size": [scheme.image_width, scheme.image_height]}
    for key, cls in _CLASS_KEYS:
        doc[key] = [[p.x, p.y] for p in scheme.points if p.cls is cls]
    return (json.dumps(doc, separators=(",", ":")) + "\n").encode("utf-8")


def save_prompt_scheme(scheme: PromptScheme, path: str | os.PathLike) -> None:
    """Write the scheme JSON document."""
    with open(path, "wb") as fh:
        fh.write(scheme_to_json_bytes(scheme))


def load_prompt_scheme(path: str | os.PathLike) -> PromptScheme:
    """Read and validate a scheme JSON document."""
    with open(path, "rb") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemeFormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise SchemeFormatError(f"{path}: top level must be an object")
    size = doc.get("image_size")
    if (
        not isinstance(size, list) or len(size) != 2
        or not all(isinstance(v, int) and v > 0 for v in size)
    ):
        raise SchemeFormatError(f"{path}: image_size must be [width, height]")
    width, height = size
    points: list[PromptPoint] = []
    for key, cls in _CLASS_KEYS:
        entries = doc.get(key, [])
        if not isinstance(entries, list):
            raise SchemeFormatError(f"{path}: {key} must be a list")
        for entry in entries:
            if (
                not isinstance(entry, list) or len(entry) != 2
                or not all(isinstance(v, int) for v in entry)
            ):
                raise SchemeFormatError(f"{path}: {key} entries must be [x, y]")
            points.append(PromptPoint(entry[0], entry[1], cls))
    try:
        return PromptScheme(width, height, tuple(points))
    except ValueError as exc:
        raise SchemeFormatError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# Feature-map files (FPT tensor + grid metadata sidecar)
# ---------------------------------------------------------------------------

_SIDECAR_KEYS = ("image_width", "image_height", "patch_size", "stride", "rows", "cols")


def sidecar_path(features_path: str | os.PathLike) -> str:
    return str(features_path) + ".json"


def save_feature_map(fmap, path: str | os.PathLike) -> None:
    """Write a FeatureMap as an FPT file plus a grid-metadata sidecar."""
    save_tensor(fmap.features, path)
    grid = fmap.grid
    meta = {key: int(getattr(grid, key)) for key in _SIDECAR_KEYS}
    with open(sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, separators=(",", ":"))
        fh.write("\n")


def load_feature_map(path: str | os.PathLike):
    """Read an FPT file and its sidecar back into a FeatureMap."""
    from .matching import FeatureMap
    from .patching import build_patch_grid

    features = load_tensor(path)
    meta_path = sidecar_path(path)
    try:
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise TensorIOError(
            f"{path}: missing grid metadata sidecar {meta_path}"
        ) from None
    except json.JSONDecodeError as exc:
        raise TensorIOError(f"{meta_path}: invalid JSON ({exc})") from None
    missing = [k for k in _SIDECAR_KEYS if k not in meta]
    if missing:
        raise TensorIOError(f"{meta_path}: missing keys {missing}")
    grid = build_patch_grid(
        meta["image_width"], meta["image_height"],
        meta["patch_size"], meta["stride"],
    )
    if (grid.rows, grid.cols) != (meta["rows"], meta["cols"]):
        raise TensorIOError(
            f"{meta_path}: declared grid {meta['rows']}x{meta['cols']} does not "
            f"match computed {grid.rows}x{grid.cols}"
        )
    if features.ndim == 3:
        rows, cols, dim = features.shape
        if (rows, cols) != (grid.rows, grid.cols):
            raise TensorIOError(
                f"{path}: spatial tensor {rows}x{cols} does not match grid"
            )
        features = features.reshape(rows * cols, dim)
    return FeatureMap(grid=grid, features=features)
