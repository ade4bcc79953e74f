"""Feature-space correspondence and candidate prompt screening.

The correspondence matrix holds the Euclidean distance between every
reference patch feature and every target patch feature; smaller means more
similar. Forward matching nominates one target patch per labeled reference
patch, backward matching keeps only candidates whose best reference match
agrees with the label, and the strongest rejected positives are re-screened
as hard negatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .patching import PatchGrid, PatchLabel

# Row block size for the distance computation keeps the float32 difference
# buffer around 32 MiB at dim 1024.
_BLOCK_ELEMENTS = 8_000_000

MEAN_OVER_POSITIVE_EXCLUDED = "positive_excluded_only"
MEAN_OVER_ALL_EXCLUDED = "all_excluded"


@dataclass(frozen=True)
class FeatureMap:
    """Per-patch embedding vectors plus the grid geometry that produced them."""

    grid: PatchGrid
    features: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float32)
        if feats.ndim != 2:
            raise ValueError(f"features must be (patches, dim), got {feats.shape}")
        if feats.shape[0] != self.grid.num_patches:
            raise ValueError(
                f"{feats.shape[0]} feature rows for a grid of "
                f"{self.grid.num_patches} patches"
            )
        if feats.shape[1] < 1:
            raise ValueError("feature dimension must be >= 1")
        object.__setattr__(self, "features", feats)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class CandidatePrompt:
    """A target patch nominated as a prompt, traced back to a reference patch."""

    target_patch: int
    label: PatchLabel
    source_ref_patch: int
    distance: float


def _as_feature_matrix(x) -> np.ndarray:
    feats = x.features if isinstance(x, FeatureMap) else np.asarray(x, dtype=np.float32)
    if feats.ndim != 2:
        raise ValueError(f"expected a (patches, dim) matrix, got shape {feats.shape}")
    if feats.shape[0] == 0:
        raise ValueError("empty feature map")
    return feats


def correspondence_matrix(ref, target) -> np.ndarray:
    """Dense (ref patches x target patches) Euclidean distance matrix.

    Differences are taken in float32 and the squared sums accumulated in
    float64, block by block, so identical vectors come out at exactly 0.0.
    Accepts FeatureMap values or plain (n, dim) arrays.
    """
    a = _as_feature_matrix(ref)
    b = _as_feature_matrix(target)
    if a.shape[1] != b.shape[1]:
        raise ValueError(
            f"feature_dim mismatch: reference {a.shape[1]} vs target {b.shape[1]}"
        )
    n, dim = a.shape
    m = b.shape[0]
    out = np.empty((n, m), dtype=np.float64)
    block = max(1, _BLOCK_ELEMENTS // max(1, m * dim))
    for start in range(0, n, block):
        stop = min(start + block, n)
        diff = a[start:stop, None, :] - b[None, :, :]
        np.einsum("ijk,ijk->ij", diff, diff, dtype=np.float64, out=out[start:stop])
    np.sqrt(out, out=out)
    return out


def forward_match(
    m: np.ndarray, ref_labels: list[PatchLabel]
) -> list[CandidatePrompt]:
    """Nominate the closest target patch for every reference patch.

    Ties resolve to the lowest target index. The candidate carries the
    reference patch's label.
    """
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != len(ref_labels):
        raise ValueError(
            f"matrix {m.shape} does not match {len(ref_labels)} reference labels"
        )
    best = np.argmin(m, axis=1)
    return [
        CandidatePrompt(int(j), ref_labels[i], i, float(m[i, j]))
        for i, j in enumerate(best)
    ]


def backward_match(
    m: np.ndarray,
    candidates: list[CandidatePrompt],
    ref_labels: list[PatchLabel],
) -> tuple[list[CandidatePrompt], list[CandidatePrompt]]:
    """Split candidates by the round trip back to the reference.

    For a candidate on target patch j, the best-matching reference patch is
    the argmin of column j (lowest index on ties). Agreement with the
    candidate's label retains it unchanged; disagreement moves it to the
    excluded list, re-anchored to that column minimum so the recorded
    distance is the point's strongest reference correspondence.
    """
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != len(ref_labels):
        raise ValueError(
            f"matrix {m.shape} does not match {len(ref_labels)} reference labels"
        )
    col_best = np.argmin(m, axis=0)
    retained: list[CandidatePrompt] = []
    excluded: list[CandidatePrompt] = []
    for cand in candidates:
        j = cand.target_patch
        i_star = int(col_best[j])
        if ref_labels[i_star] is cand.label:
            retained.append(cand)
        else:
            excluded.append(
                CandidatePrompt(j, cand.label, i_star, float(m[i_star, j]))
            )
    return retained, excluded


def select_hard_negatives(
    excluded: list[CandidatePrompt],
    mean_scope: str = MEAN_OVER_POSITIVE_EXCLUDED,
) -> list[CandidatePrompt]:
    """Pick rejected positives whose correspondence beats the mean.

    Only candidates that forward-matched as positive are eligible (they mark
    background look-alikes of the target class). Strong correspondence means
    a distance strictly below the mean, taken over the eligible set or over
    all excluded candidates depending on ``mean_scope``. Callers re-purpose
    the survivors as hard-negative prompts.
    """
    if mean_scope not in (MEAN_OVER_POSITIVE_EXCLUDED, MEAN_OVER_ALL_EXCLUDED):
        raise ValueError(f"unknown mean_scope {mean_scope!r}")
    eligible = [c for c in excluded if c.label is PatchLabel.POSITIVE]
    if not eligible:
        return []
    if mean_scope == MEAN_OVER_ALL_EXCLUDED:
        mean = float(np.mean([c.distance for c in excluded]))
    else:
        mean = float(np.mean([c.distance for c in eligible]))
    return [c for c in eligible if c.distance < mean]
