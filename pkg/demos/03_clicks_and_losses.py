"""Click handling and the composite loss, end to end on one synthetic mask.

Simulates user clicks against a ground-truth disk, renders their distance
maps, then evaluates every loss component for a deliberately imperfect
prediction so the numbers are easy to eyeball.
"""

import numpy as np

from hyperseg import (
    boundary_phl,
    diversity_weights,
    extract_boundary,
    interactive_context_loss,
    jaccard_loss,
    simulate_clicks,
    total_loss,
)

size = 48
xs, ys = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
gt = ((xs - 24) ** 2 + (ys - 24) ** 2 <= 14**2).astype(float)

clicks = simulate_clicks(gt.astype(bool), rng_seed=7, n_pos=5, n_neg=5)
print(f"simulated clicks on a radius-14 disk: pos {list(clicks.positive_clicks)}")
print(f"                                      neg {list(clicks.negative_clicks)}")
print(f"distance maps: D_pos range [{clicks.dist_pos.min():.0f}, {clicks.dist_pos.max():.1f}], "
      f"zero exactly at the {int((clicks.dist_pos == 0).sum())} positive clicks")

# an imperfect prediction: the disk shifted right by 4 px, slightly soft
pred = np.clip(((xs - 28) ** 2 + (ys - 24) ** 2 <= 14**2) * 0.9 + 0.05, 0.0, 1.0)

print(f"\njaccard loss (shifted disk vs gt):    {jaccard_loss(gt, pred):.4f}")
print(f"interactive-context loss:             "
      f"{interactive_context_loss(clicks.mask_pos, clicks.mask_neg, pred):.4f}")
for delta in (0.5, 1.0, 2.0):
    print(f"boundary pseudo-Huber (delta={delta}):     {boundary_phl(gt, pred, delta):.4f}")
contour = extract_boundary(pred >= 0.5)
print(f"predicted-mask contour: {len(contour.point_set)} boundary pixels")

# three heads of varying quality -> the total loss picks the best for the min
heads = np.stack([pred, gt * 0.94 + 0.03, np.full_like(gt, 0.4)])
bd = total_loss(gt, heads, clicks, delta=1.0)
print(f"\nper-head jaccard: {[round(v, 4) for v in bd.jaccard_per_head]}")
print(f"per-head click penalty: {[round(v, 4) for v in bd.interactive_context_per_head]}")
print(f"diversity weights (M=3): {list(bd.diversity)}  (M=6 would be {diversity_weights(6).tolist()})")
print(f"best head by jaccard+context: {bd.min_head_index}")
print(f"total loss: {bd.total:.4f} (recomposes to {bd.recompute_total():.4f})")
