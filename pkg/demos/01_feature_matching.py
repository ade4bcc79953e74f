"""Patch correspondence and candidate screening on a tiny hand-made example.

The reference image has six patches (three object, three background); two of
its background patches are look-alikes of object features. The target has
four patches, two of which are background regions imitating the object.
Forward matching falls for both impostors; backward matching catches them,
and the stronger one comes back as a hard negative.
"""

import numpy as np

from promptforge import (
    FeatureMap,
    PatchLabel,
    backward_match,
    build_patch_grid,
    correspondence_matrix,
    forward_match,
    select_hard_negatives,
)

P, N = PatchLabel.POSITIVE, PatchLabel.NEGATIVE

ref = FeatureMap(grid=build_patch_grid(48, 32, 16, 16), features=np.array([
    [1.00, 0.00, 0.00],   # object
    [0.60, 0.40, 0.00],   # object
    [0.50, 0.50, 0.30],   # object
    [0.00, 1.00, 0.00],   # background
    [0.97, 0.03, 0.06],   # background look-alike A
    [0.44, 0.50, 0.33],   # background look-alike B
], dtype=np.float32))
ref_labels = [P, P, P, N, N, N]

target = FeatureMap(grid=build_patch_grid(32, 32, 16, 16), features=np.array([
    [0.00, 0.95, 0.05],   # background
    [0.98, 0.02, 0.04],   # impostor A (background resembling the object)
    [0.62, 0.38, 0.02],   # object
    [0.45, 0.52, 0.35],   # impostor B
], dtype=np.float32))

m = correspondence_matrix(ref, target)
print("correspondence matrix (rows = reference patches):")
print(np.round(m, 3))

candidates = forward_match(m, ref_labels)
print("\nforward matching (one candidate per reference patch):")
for c in candidates:
    print(f"  ref {c.source_ref_patch} ({c.label.value:8s}) -> "
          f"target {c.target_patch}, distance {c.distance:.3f}")

retained, excluded = backward_match(m, candidates, ref_labels)
print(f"\nbackward matching: {len(retained)} retained, {len(excluded)} excluded")
for c in excluded:
    print(f"  excluded: target {c.target_patch} was forward-labeled "
          f"{c.label.value}, but its strongest reference match is patch "
          f"{c.source_ref_patch} ({ref_labels[c.source_ref_patch].value}) "
          f"at distance {c.distance:.3f}")

hard = select_hard_negatives(excluded)
print("\nhard negatives (rejected positives with correspondence above the "
      f"excluded mean): target patches {[c.target_patch for c in hard]}")
