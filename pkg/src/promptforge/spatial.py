"""Physical-space refinement of prompt point sets.

Prompts live as labeled integer pixel coordinates. Three filters operate on
them: exclusive sampling (drop negatives near positives), sparse sampling
(thin same-class clusters, keeping the point farthest from the opposite
class), and hard-negative merging (append re-screened negatives, then
re-apply exclusion).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class PromptClass(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    HARD_NEGATIVE = "hard_negative"

    @property
    def is_negative_kind(self) -> bool:
        return self is not PromptClass.POSITIVE


@dataclass(frozen=True)
class PromptPoint:
    """One labeled pixel position. x grows rightward, y downward."""

    x: int
    y: int
    cls: PromptClass


@dataclass(frozen=True)
class PromptScheme:
    """A full point-prompt set for one target image."""

    image_width: int
    image_height: int
    points: tuple[PromptPoint, ...] = ()

    def __post_init__(self):
        if self.image_width < 1 or self.image_height < 1:
            raise ValueError(
                f"image size must be positive, got "
                f"{self.image_width}x{self.image_height}"
            )
        seen = set()
        for p in self.points:
            if not (0 <= p.x < self.image_width and 0 <= p.y < self.image_height):
                raise ValueError(f"point {p} out of bounds")
            key = (p.x, p.y, p.cls)
            if key in seen:
                raise ValueError(f"duplicate point {key}")
            seen.add(key)

    def of_class(self, cls: PromptClass) -> tuple[PromptPoint, ...]:
        return tuple(p for p in self.points if p.cls is cls)

    @property
    def positives(self) -> tuple[PromptPoint, ...]:
        return self.of_class(PromptClass.POSITIVE)

    @property
    def negatives(self) -> tuple[PromptPoint, ...]:
        """All negative-kind points (plain and hard)."""
        return tuple(p for p in self.points if p.cls.is_negative_kind)

    def replace_points(self, points) -> "PromptScheme":
        return PromptScheme(self.image_width, self.image_height, tuple(points))


@dataclass(frozen=True)
class RadiusSpec:
    """A search radius expressed as a fraction of the image size."""

    fraction: float

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"radius fraction must be in [0, 1], got {self.fraction}")


def resolve_radius(
    spec: RadiusSpec, image_width: int, image_height: int, base: str = "min"
) -> float:
    """Map a fractional radius to pixels.

    The reference length defaults to the smaller image dimension (never
    exceeds either side, symmetric for square crops); "max" and "geomean"
    are available for experiments on elongated images.
    """
    if base == "min":
        length = min(image_width, image_height)
    elif base == "max":
        length = max(image_width, image_height)
    elif base == "geomean":
        length = math.sqrt(image_width * image_height)
    else:
        raise ValueError(f"unknown radius base {base!r}")
    return spec.fraction * length


def _coords(points) -> np.ndarray:
    if not points:
        return np.empty((0, 2), dtype=np.float64)
    return np.array([(p.x, p.y) for p in points], dtype=np.float64)


def exclusive_sampling(scheme: PromptScheme, radius: float) -> PromptScheme:
    """Drop every negative-kind point within `radius` of any positive.

    "Within" is a closed ball: a negative at exactly `radius` is removed.
    Positives always pass through unchanged.
    """
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    pos = _coords(scheme.positives)
    if len(pos) == 0:
        return scheme
    kept = []
    for p in scheme.points:
        if p.cls is PromptClass.POSITIVE:
            kept.append(p)
            continue
        d2 = (pos[:, 0] - p.x) ** 2 + (pos[:, 1] - p.y) ** 2
        if d2.min() > radius * radius:
            kept.append(p)
    return scheme.replace_points(kept)


def _mean_opposite_distance(points, opposite: np.ndarray) -> list[float]:
    """Mean Euclidean distance from each point to the opposite-class set."""
    if len(opposite) == 0:
        return [0.0 for _ in points]
    out = []
    for p in points:
        d = np.hypot(opposite[:, 0] - p.x, opposite[:, 1] - p.y)
        out.append(float(d.mean()))
    return out


def sparse_sampling(
    scheme: PromptScheme,
    class_to_sparsify: PromptClass,
    radius: float,
    include_hard_with_negative: bool = False,
) -> PromptScheme:
    """Thin one prompt class so no two survivors sit within `radius`.

    Candidates are ranked by mean distance to the opposite class (positives
    against all negative kinds and vice versa) and accepted greedily from the
    farthest down, ties broken by lowest (y, x). A radius of 0 is a no-op.

    With ``include_hard_with_negative`` the NEGATIVE pass treats hard
    negatives as part of the same class (one pool, one spacing constraint).
    """
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if radius == 0:
        return scheme

    if class_to_sparsify is PromptClass.NEGATIVE and include_hard_with_negative:
        in_pool = lambda p: p.cls.is_negative_kind  # noqa: E731
    else:
        in_pool = lambda p: p.cls is class_to_sparsify  # noqa: E731
    pool = [p for p in scheme.points if in_pool(p)]
    if len(pool) <= 1:
        return scheme

    if class_to_sparsify is PromptClass.POSITIVE:
        opposite = _coords([p for p in scheme.points if p.cls.is_negative_kind])
    else:
        opposite = _coords(scheme.positives)

    ranks = _mean_opposite_distance(pool, opposite)
    order = sorted(range(len(pool)), key=lambda i: (-ranks[i], pool[i].y, pool[i].x))
    accepted: list[PromptPoint] = []
    r2 = radius * radius
    for i in order:
        p = pool[i]
        ok = all((a.x - p.x) ** 2 + (a.y - p.y) ** 2 > r2 for a in accepted)
        if ok:
            accepted.append(p)

    accepted_set = set(accepted)
    kept = [p for p in scheme.points if not in_pool(p) or p in accepted_set]
    return scheme.replace_points(kept)


def merge_hard_negatives(
    scheme: PromptScheme,
    hard: list[PromptPoint] | tuple[PromptPoint, ...],
    radius_exclusive: float,
) -> PromptScheme:
    """Append hard-negative points, then re-apply exclusion around positives.

    A hard point that lands on the exact (x, y) of an existing negative-kind
    point is dropped rather than duplicated.
    """
    for p in hard:
        if p.cls is not PromptClass.HARD_NEGATIVE:
            raise ValueError(f"hard point {p} must carry the hard-negative class")
    occupied = {(p.x, p.y) for p in scheme.points if p.cls.is_negative_kind}
    merged = list(scheme.points)
    for p in hard:
        if (p.x, p.y) in occupied:
            continue
        occupied.add((p.x, p.y))
        merged.append(p)
    return exclusive_sampling(scheme.replace_points(merged), radius_exclusive)


def euclidean(a: PromptPoint, b: PromptPoint) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)
