"""Feature encoders and promptable segmenters behind the adapter CLIs.

``patchstats`` and ``threshold`` are self-contained numpy models so the
file contracts can be exercised without any weights. ``dinov2`` and
``sam`` wrap the usual research stacks and raise ModelUnavailable with an
actionable message when the runtime or checkpoints are missing.
"""

from __future__ import annotations

import os

import numpy as np
from scipy import ndimage


class ModelUnavailable(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Feature encoders
# ---------------------------------------------------------------------------

def patchstats_features(gray: np.ndarray, patch_size: int, stride: int):
    """Deterministic hand-crafted per-patch features (no weights needed).

    Seven intensity/gradient statistics plus a 3x3 average-pooled
    thumbnail: 16 dimensions per patch.
    """
    h, w = gray.shape
    if h < patch_size or w < patch_size:
        raise ValueError(f"image {w}x{h} smaller than patch size {patch_size}")
    img = gray.astype(np.float32) / 255.0
    gy, gx = np.gradient(img)
    rows = (h - patch_size) // stride + 1
    cols = (w - patch_size) // stride + 1
    feats = np.empty((rows * cols, 16), dtype=np.float32)
    third = max(1, patch_size // 3)
    for r in range(rows):
        for c in range(cols):
            y0, x0 = r * stride, c * stride
            p = img[y0:y0 + patch_size, x0:x0 + patch_size]
            px = gx[y0:y0 + patch_size, x0:x0 + patch_size]
            py = gy[y0:y0 + patch_size, x0:x0 + patch_size]
            grad = np.hypot(px, py)
            stats = (
                p.mean(), p.std(), p.min(), p.max(),
                px.mean(), py.mean(), grad.std(),
            )
            thumb = [
                p[i * third:(i + 1) * third or None,
                  j * third:(j + 1) * third or None].mean()
                for i in range(3)
                for j in range(3)
            ]
            feats[r * cols + c] = np.array(stats + tuple(thumb), dtype=np.float32)
    return feats, rows, cols


def dinov2_features(image_path: str, model_name: str, resample_to: int | None):
    """Patch features from a DINOv2 backbone via torch hub.

    Returns (features, rows, cols, effective_patch, resampled). Requires
    torch, pillow, and the hub checkpoint to be available locally.
    """
    try:
        import torch
        from PIL import Image
    except ImportError as exc:
        raise ModelUnavailable(f"torch/pillow not installed: {exc}") from None
    try:
        model = torch.hub.load("facebookresearch/dinov2", model_name)
    except Exception as exc:
        raise ModelUnavailable(
            f"could not load {model_name} from torch hub "
            f"(weights must be cached locally): {exc}"
        ) from None
    model.eval()
    native = model.patch_size  # 14 for the stock backbones

    img = Image.open(image_path).convert("RGB")
    w, h = img.size
    crop_w, crop_h = (w // native) * native, (h // native) * native
    if crop_w < native or crop_h < native:
        raise ValueError(f"image {w}x{h} smaller than the encoder patch {native}")
    tensor = torch.from_numpy(
        np.asarray(img, dtype=np.float32)[:crop_h, :crop_w] / 255.0
    ).permute(2, 0, 1)
    mean = torch.tensor([0.485, 0.456, 0.406]).view(3, 1, 1)
    std = torch.tensor([0.229, 0.224, 0.225]).view(3, 1, 1)
    tensor = (tensor - mean) / std

    with torch.no_grad():
        out = model.forward_features(tensor.unsqueeze(0))
    tokens = out["x_norm_patchtokens"][0]
    rows, cols = crop_h // native, crop_w // native
    grid = tokens.reshape(rows, cols, -1)

    if resample_to and resample_to != native:
        new_rows = max(1, crop_h // resample_to)
        new_cols = max(1, crop_w // resample_to)
        grid = torch.nn.functional.interpolate(
            grid.permute(2, 0, 1).unsqueeze(0),
            size=(new_rows, new_cols),
            mode="bilinear",
            align_corners=False,
        )[0].permute(1, 2, 0)
        return grid.numpy().reshape(-1, grid.shape[-1]), new_rows, new_cols, resample_to, True
    return grid.numpy().reshape(-1, grid.shape[-1]), rows, cols, native, False


# ---------------------------------------------------------------------------
# Promptable segmenters
# ---------------------------------------------------------------------------

def threshold_proposals(gray: np.ndarray, points):
    """Weight-free multi-proposal segmentation from intensity bands.

    Each proposal binarizes the image around the positive prompts' mean
    intensity with a different tolerance, keeps connected components that
    contain a positive prompt, and is scored by prompt agreement (positives
    inside, negatives outside). Returns (proposals, scores).
    """
    img = gray.astype(np.float32)
    pos = [(x, y) for x, y, label in points if label == 1]
    neg = [(x, y) for x, y, label in points if label == 0]
    if not pos:
        raise ValueError("threshold segmenter needs at least one positive point")
    seed_values = np.array([img[y, x] for x, y in pos])
    center = float(seed_values.mean())
    spread = float(max(seed_values.std(), 4.0))

    proposals, scores = [], []
    for k in (0.5, 1.0, 2.0, 4.0):
        band = np.abs(img - center) <= k * spread
        labeled, _ = ndimage.label(band)
        keep = {labeled[y, x] for x, y in pos if labeled[y, x] != 0}
        mask = np.isin(labeled, sorted(keep)) if keep else np.zeros_like(band)
        agree = sum(1 for x, y in pos if mask[y, x])
        agree += sum(1 for x, y in neg if not mask[y, x])
        proposals.append(mask.astype(np.uint8))
        scores.append(agree / len(points))
    return proposals, scores


def pick_best(proposals, scores):
    """Documented selection rule: highest score wins, earliest on ties."""
    best = int(np.argmax(scores))
    return proposals[best], best


def sam_segment(image_path: str, points, model_type: str):
    """Point-prompted SAM; selects the highest-scoring proposal.

    Needs the segment-anything package and a checkpoint (path from
    PROMPTFORGE_SAM_CHECKPOINT). Hard negatives arrive with label 0.
    """
    try:
        import torch  # noqa: F401
        from PIL import Image
        from segment_anything import SamPredictor, sam_model_registry
    except ImportError as exc:
        raise ModelUnavailable(f"segment-anything stack not installed: {exc}") from None
    checkpoint = os.environ.get("PROMPTFORGE_SAM_CHECKPOINT")
    if not checkpoint or not os.path.exists(checkpoint):
        raise ModelUnavailable(
            "set PROMPTFORGE_SAM_CHECKPOINT to a local checkpoint file"
        )
    sam = sam_model_registry[model_type](checkpoint=checkpoint)
    predictor = SamPredictor(sam)
    image = np.asarray(Image.open(image_path).convert("RGB"))
    predictor.set_image(image)
    coords = np.array([(x, y) for x, y, _ in points], dtype=np.float32)
    labels = np.array([label for _, _, label in points], dtype=np.int32)
    masks, scores, _ = predictor.predict(
        point_coords=coords, point_labels=labels, multimask_output=True
    )
    mask, _ = pick_best(list(masks), list(scores))
    return mask.astype(np.uint8)
