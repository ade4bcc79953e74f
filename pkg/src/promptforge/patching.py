"""Sliding-window patch grids and reference-patch labeling.

A grid covers every full window of ``patch_size`` pixels advanced by
``stride``; partial windows at the right/bottom border are dropped, never
padded. Patches are indexed row-major.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class PatchLabel(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


@dataclass(frozen=True)
class PatchGrid:
    image_width: int
    image_height: int
    patch_size: int
    stride: int
    rows: int
    cols: int

    @property
    def num_patches(self) -> int:
        return self.rows * self.cols


def build_patch_grid(
    image_width: int, image_height: int, patch_size: int, stride: int
) -> PatchGrid:
    """Lay a full-window sliding grid over an image."""
    if patch_size < 1:
        raise ValueError(f"patch_size must be >= 1, got {patch_size}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if stride > patch_size:
        raise ValueError(
            f"stride {stride} larger than patch_size {patch_size} would skip pixels"
        )
    if image_width < patch_size or image_height < patch_size:
        raise ValueError(
            f"image {image_width}x{image_height} smaller than patch_size {patch_size}"
        )
    rows = (image_height - patch_size) // stride + 1
    cols = (image_width - patch_size) // stride + 1
    return PatchGrid(image_width, image_height, patch_size, stride, rows, cols)


def patch_center(grid: PatchGrid, index: int) -> tuple[int, int]:
    """Pixel center (x, y) of the patch at a row-major index."""
    if not 0 <= index < grid.num_patches:
        raise IndexError(f"patch index {index} out of range 0..{grid.num_patches - 1}")
    row, col = divmod(index, grid.cols)
    half = grid.patch_size // 2
    return (col * grid.stride + half, row * grid.stride + half)


def patch_centers(grid: PatchGrid) -> np.ndarray:
    """All patch centers as an (n, 2) int array of (x, y), row-major order."""
    cols = np.arange(grid.cols) * grid.stride + grid.patch_size // 2
    rows = np.arange(grid.rows) * grid.stride + grid.patch_size // 2
    xx, yy = np.meshgrid(cols, rows)
    return np.stack([xx.ravel(), yy.ravel()], axis=1)


def label_reference_patches(grid: PatchGrid, mask: np.ndarray) -> list[PatchLabel]:
    """Label each patch by whether the mask covers its center pixel."""
    mask = np.asarray(mask)
    if mask.shape != (grid.image_height, grid.image_width):
        raise ValueError(
            f"mask shape {mask.shape} does not match grid image "
            f"{grid.image_height}x{grid.image_width}"
        )
    centers = patch_centers(grid)
    hits = mask[centers[:, 1], centers[:, 0]] != 0
    return [PatchLabel.POSITIVE if h else PatchLabel.NEGATIVE for h in hits]
