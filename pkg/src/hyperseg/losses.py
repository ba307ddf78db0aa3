"""Training losses and evaluation metrics.

The composite training objective combines, per image: the best head's relaxed
IOU plus click-agreement penalty (a min over heads), a weighted relaxed-IOU
term per head with geometrically decreasing weights that order the heads by
accuracy, and a pseudo-Huber penalty on the predicted mask's own boundary
pixels. Evaluation reports mean IOU and mean boundary IOU over mask pairs.

Connectivity conventions: foreground components are 4-connected, background
8-connected. Boundary extraction traces the outer contour of the largest
foreground component with the Moore neighborhood; the traced loop can revisit
pixels on one-pixel-wide spurs, so loss and metric computations use the set
of traced points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])

# Clockwise Moore neighborhood in (x, y) with y pointing down, starting west.
_MOORE = ((-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1))


def diversity_weights(num_heads: int) -> np.ndarray:
    """Per-head weights 0.01 * 2^(M-m) for m = 1..M; strictly decreasing,
    last entry exactly 0.01."""
    if num_heads < 1:
        raise ValueError("need at least one head")
    return 0.01 * 2.0 ** np.arange(num_heads - 1, -1, -1, dtype=np.float64)


def jaccard_loss(a: np.ndarray, b: np.ndarray) -> float:
    """Relaxed IOU loss: 1 - sum(min(A,B)) / sum(max(A,B)).

    Symmetric, 0 iff the maps agree; two identically-zero maps are defined to
    agree perfectly (loss 0).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"map shapes differ: {a.shape} vs {b.shape}")
    denom = float(np.maximum(a, b).sum())
    if denom == 0.0:
        return 0.0
    return 1.0 - float(np.minimum(a, b).sum()) / denom


def interactive_context_loss(sp_mask: np.ndarray, sn_mask: np.ndarray, a: np.ndarray) -> float:
    """Click-agreement penalty: ||Sp . (Sp - A)||_1 + ||Sn . (Sn - (1 - A))||_1.

    Equals the sum of (1 - A) over positive-click pixels plus the sum of A
    over negative-click pixels for A in [0, 1].
    """
    sp = np.asarray(sp_mask, dtype=np.float64)
    sn = np.asarray(sn_mask, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    return float(np.abs(sp * (sp - a)).sum() + np.abs(sn * (sn - (1.0 - a))).sum())


@dataclass(frozen=True)
class Contour:
    """Ordered outer boundary of the largest 4-connected foreground component.

    Consecutive points are 8-adjacent and the sequence is a closed loop (the
    last point is 8-adjacent to the first) for components larger than one
    pixel. One-pixel-wide spurs appear twice in the loop; ``point_set`` is
    the deduplicated pixel set.
    """

    points: tuple

    def __len__(self):
        return len(self.points)

    @property
    def point_set(self) -> frozenset:
        return frozenset(self.points)

    def raster(self, w: int, h: int) -> np.ndarray:
        out = np.zeros((w, h), dtype=bool)
        for x, y in self.points:
            out[x, y] = True
        return out


def _largest_component(mask: np.ndarray) -> np.ndarray:
    labels, count = ndimage.label(mask, structure=_FOUR_CONN)
    if count == 0:
        return np.zeros_like(mask, dtype=bool)
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    return labels == int(np.argmax(sizes))  # ties: lowest label = first in scan order


def _moore_step(comp: np.ndarray, cur, back):
    w, h = comp.shape
    dx, dy = back[0] - cur[0], back[1] - cur[1]
    i = _MOORE.index((dx, dy))
    prev = back
    for step in range(1, 9):
        ox, oy = _MOORE[(i + step) % 8]
        cand = (cur[0] + ox, cur[1] + oy)
        if 0 <= cand[0] < w and 0 <= cand[1] < h and comp[cand]:
            return cand, prev
        prev = cand
    raise RuntimeError("isolated pixel reached Moore step")  # guarded by caller


def extract_boundary(mask: np.ndarray) -> Contour:
    """Moore-neighborhood outer contour of the largest foreground component."""
    mask = np.asarray(mask, dtype=bool)
    comp = _largest_component(mask)
    coords = np.argwhere(comp)
    if len(coords) == 0:
        return Contour(())
    # Uppermost-leftmost pixel: smallest y, then smallest x.
    order = np.lexsort((coords[:, 0], coords[:, 1]))
    start = (int(coords[order[0], 0]), int(coords[order[0], 1]))
    if len(coords) == 1:
        return Contour((start,))
    # Walk (current, backtrack) states until one repeats; the repeated suffix
    # is the boundary cycle (the initial backtrack guess may form a tail).
    state = (start, (start[0] - 1, start[1]))
    seen = {}
    seq = []
    while state not in seen:
        seen[state] = len(seq)
        seq.append(state)
        nxt, prev = _moore_step(comp, *state)
        state = (nxt, prev)
    cycle = seq[seen[state] :]
    pixels = [s[0] for s in cycle]
    j = min(range(len(pixels)), key=lambda t: (pixels[t][1], pixels[t][0]))
    return Contour(tuple(pixels[j:] + pixels[:j]))


def pseudo_huber(residual: np.ndarray, delta: float) -> np.ndarray:
    r = np.asarray(residual, dtype=np.float64)
    return delta * delta * (np.sqrt(1.0 + (r / delta) ** 2) - 1.0)


def boundary_phl(y: np.ndarray, f: np.ndarray, delta: float) -> float:
    """Pseudo-Huber penalty over the predicted map's own boundary pixels.

    The prediction is binarized at 1/2 and the outer contour of its largest
    component selects the penalized pixels; an empty contour contributes 0.
    The point selection is re-derived every call and treated as constant by
    the training gradients (selection is not differentiated).
    """
    y = np.asarray(y, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    if y.shape != f.shape:
        raise ValueError(f"map shapes differ: {y.shape} vs {f.shape}")
    if delta <= 0:
        raise ValueError("delta must be positive")
    points = extract_boundary(f >= 0.5).point_set
    if not points:
        return 0.0
    idx = np.array(sorted(points))
    residuals = y[idx[:, 0], idx[:, 1]] - f[idx[:, 0], idx[:, 1]]
    return float(pseudo_huber(residuals, delta).sum())


@dataclass(frozen=True)
class LossBreakdown:
    """Per-head components of the composite loss for one image.

    ``total`` recomposes exactly as: min over heads of (jaccard + interactive
    context) plus the weight-scaled jaccard sum plus the boundary sum. Head
    indices are 1-based; ties in the min go to the smallest index.
    """

    jaccard_per_head: tuple
    interactive_context_per_head: tuple
    boundary_phl_per_head: tuple
    diversity: tuple
    min_head_index: int
    total: float

    def recompute_total(self) -> float:
        j = np.asarray(self.jaccard_per_head)
        ic = np.asarray(self.interactive_context_per_head)
        lam = np.asarray(self.diversity)
        phl = np.asarray(self.boundary_phl_per_head)
        return float((j + ic).min() + (lam * j).sum() + phl.sum())


def compose_breakdown(jaccards, ics, phls) -> LossBreakdown:
    j = np.asarray(jaccards, dtype=np.float64)
    ic = np.asarray(ics, dtype=np.float64)
    phl = np.asarray(phls, dtype=np.float64)
    lam = diversity_weights(len(j))
    combined = j + ic
    min_idx = int(np.argmin(combined))  # argmin takes the first minimum
    total = float(combined[min_idx] + (lam * j).sum() + phl.sum())
    return LossBreakdown(
        jaccard_per_head=tuple(j.tolist()),
        interactive_context_per_head=tuple(ic.tolist()),
        boundary_phl_per_head=tuple(phl.tolist()),
        diversity=tuple(lam.tolist()),
        min_head_index=min_idx + 1,
        total=total,
    )


def total_loss(y: np.ndarray, soft_maps: np.ndarray, clicks, delta: float) -> LossBreakdown:
    """Composite loss of the M soft maps against ground truth ``y``.

    ``clicks`` provides the positive/negative raster masks (a ClickState or
    any object with ``mask_pos``/``mask_neg``); ``None`` means no clicks.
    """
    soft_maps = np.asarray(soft_maps, dtype=np.float64)
    if soft_maps.ndim != 3:
        raise ValueError("soft_maps must be (M, w, h)")
    w, h = soft_maps.shape[1:]
    if clicks is None:
        sp = np.zeros((w, h))
        sn = np.zeros((w, h))
    else:
        sp, sn = clicks.mask_pos, clicks.mask_neg
    jaccards = [jaccard_loss(y, m) for m in soft_maps]
    ics = [interactive_context_loss(sp, sn, m) for m in soft_maps]
    phls = [boundary_phl(y, m, delta) for m in soft_maps]
    return compose_breakdown(jaccards, ics, phls)


# -- evaluation metrics ----------------------------------------------------

def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Binary IOU; the empty-vs-empty pair counts as perfect agreement (1)."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def dilate3(mask: np.ndarray) -> np.ndarray:
    """Dilation by the 3x3 square structuring element."""
    mask = np.asarray(mask, dtype=bool)
    out = np.zeros_like(mask)
    w, h = mask.shape
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            xs = slice(max(dx, 0), w + min(dx, 0))
            ys = slice(max(dy, 0), h + min(dy, 0))
            xd = slice(max(-dx, 0), w + min(-dx, 0))
            yd = slice(max(-dy, 0), h + min(-dy, 0))
            out[xd, yd] |= mask[xs, ys]
    return out


def boundary_raster(mask: np.ndarray) -> np.ndarray:
    """1-px-dilated raster of the mask's outer boundary contour."""
    mask = np.asarray(mask, dtype=bool)
    return dilate3(extract_boundary(mask).raster(*mask.shape))


def miou(pred_masks, gt_masks) -> float:
    if len(pred_masks) != len(gt_masks):
        raise ValueError("mask lists must pair up")
    return float(np.mean([iou(p, g) for p, g in zip(pred_masks, gt_masks)]))


def mbiou(pred_masks, gt_masks) -> float:
    """Mean IOU between the 1-px-dilated boundary rasters of each pair."""
    if len(pred_masks) != len(gt_masks):
        raise ValueError("mask lists must pair up")
    return float(
        np.mean([iou(boundary_raster(p), boundary_raster(g)) for p, g in zip(pred_masks, gt_masks)])
    )


def metric_report(pred_masks, gt_masks, names=None) -> dict:
    """UTF-8 JSON-ready report: overall means plus per-image entries."""
    if names is None:
        names = [str(i) for i in range(len(pred_masks))]
    per_image = [
        {
            "name": name,
            "iou": iou(p, g),
            "biou": iou(boundary_raster(p), boundary_raster(g)),
        }
        for name, p, g in zip(names, pred_masks, gt_masks)
    ]
    return {
        "n_images": len(per_image),
        "miou": float(np.mean([e["iou"] for e in per_image])) if per_image else 0.0,
        "mbiou": float(np.mean([e["biou"] for e in per_image])) if per_image else 0.0,
        "per_image": per_image,
    }
