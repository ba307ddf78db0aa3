"""User click handling: raster masks, distance-based diffusion maps, and
training-time click simulation.

Coordinates are integer pixel positions (x, y) with x in [0, w) and y in
[0, h); all maps are (w, h) arrays indexed ``map[x, y]``. Diffusion maps hold
the exact Euclidean distance to the nearest click of one polarity, computed
with the two-pass lower-envelope (squared-parabola) transform, which is exact
on the integer grid. Maps fed to the network are normalized by the image
diagonal into [0, 1] (see :func:`normalized_distance_map`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

_FAR = 1e18  # stands in for +inf in the envelope pass; never wins a minimum


def _edt_1d_sq(f: np.ndarray) -> np.ndarray:
    """Felzenszwalb-Huttenlocher 1-D squared distance transform of ``f``."""
    n = f.shape[0]
    d = np.empty(n)
    v = np.zeros(n, dtype=np.int64)
    z = np.empty(n + 1)
    z[0] = -np.inf
    z[1] = np.inf
    k = 0
    for q in range(1, n):
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2 * q - 2 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2 * q - 2 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d[q] = (q - v[k]) ** 2 + f[v[k]]
    return d


def exact_edt(sites: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance from every pixel to the nearest True pixel.

    Empty site masks yield the diagonal sentinel sqrt(w^2 + h^2) everywhere.
    """
    sites = np.asarray(sites, dtype=bool)
    w, h = sites.shape
    diag = float(np.hypot(w, h))
    if not sites.any():
        return np.full((w, h), diag)
    # Pass 1 (vectorized over columns): squared distance along y to the
    # nearest site in the same column.
    steps = np.full((w, h), _FAR)
    run = np.full(w, _FAR)
    for y in range(h):
        run = np.where(sites[:, y], 0.0, np.minimum(run + 1.0, _FAR))
        steps[:, y] = run
    run = np.full(w, _FAR)
    for y in range(h - 1, -1, -1):
        run = np.where(sites[:, y], 0.0, np.minimum(run + 1.0, _FAR))
        steps[:, y] = np.minimum(steps[:, y], run)
    dsq = np.where(steps >= _FAR, _FAR, steps * steps)
    # Pass 2: lower envelope along x per row.
    out = np.empty((w, h))
    for y in range(h):
        out[:, y] = _edt_1d_sq(np.ascontiguousarray(dsq[:, y]))
    return np.sqrt(out)


def rasterize_clicks(clicks, w: int, h: int) -> np.ndarray:
    """Binary (w, h) raster with a 1 at every click pixel."""
    mask = np.zeros((w, h))
    for x, y in clicks:
        if not (0 <= x < w and 0 <= y < h):
            raise ValueError(f"click ({x}, {y}) outside {w}x{h} image")
        mask[x, y] = 1.0
    return mask


def distance_map(clicks, w: int, h: int) -> np.ndarray:
    """Exact Euclidean distance to the nearest click; the empty click set
    yields the diagonal sentinel everywhere."""
    sites = np.zeros((w, h), dtype=bool)
    for x, y in clicks:
        if not (0 <= x < w and 0 <= y < h):
            raise ValueError(f"click ({x}, {y}) outside {w}x{h} image")
        sites[x, y] = True
    return exact_edt(sites)


def normalized_distance_map(clicks, w: int, h: int) -> np.ndarray:
    """Distance map scaled by the image diagonal into [0, 1], the form the
    segmentation network consumes."""
    return distance_map(clicks, w, h) / float(np.hypot(w, h))


@dataclass(frozen=True)
class ClickState:
    """Immutable positive/negative click sets with their rasters and
    (unnormalized) diffusion maps."""

    positive_clicks: tuple
    negative_clicks: tuple
    width: int
    height: int
    mask_pos: np.ndarray
    mask_neg: np.ndarray
    dist_pos: np.ndarray
    dist_neg: np.ndarray

    @classmethod
    def create(cls, positive, negative, w: int, h: int) -> "ClickState":
        pos = tuple((int(x), int(y)) for x, y in positive)
        neg = tuple((int(x), int(y)) for x, y in negative)
        if set(pos) & set(neg):
            raise ValueError("a pixel cannot carry both polarities")
        return cls(
            positive_clicks=pos,
            negative_clicks=neg,
            width=int(w),
            height=int(h),
            mask_pos=rasterize_clicks(pos, w, h),
            mask_neg=rasterize_clicks(neg, w, h),
            dist_pos=distance_map(pos, w, h),
            dist_neg=distance_map(neg, w, h),
        )

    @classmethod
    def empty(cls, w: int, h: int) -> "ClickState":
        return cls.create((), (), w, h)

    def with_click(self, x: int, y: int, polarity: str) -> "ClickState":
        pos, neg = list(self.positive_clicks), list(self.negative_clicks)
        target = pos if polarity == "pos" else neg
        if (x, y) not in target:
            target.append((int(x), int(y)))
        return ClickState.create(pos, neg, self.width, self.height)

    def without_click(self, x: int, y: int) -> "ClickState":
        pos = [p for p in self.positive_clicks if p != (x, y)]
        neg = [p for p in self.negative_clicks if p != (x, y)]
        return ClickState.create(pos, neg, self.width, self.height)


def clicks_to_json(state: ClickState) -> str:
    items = [{"x": x, "y": y, "polarity": "pos"} for x, y in state.positive_clicks]
    items += [{"x": x, "y": y, "polarity": "neg"} for x, y in state.negative_clicks]
    return json.dumps(items)


def clicks_from_json(raw: str, w: int, h: int) -> ClickState:
    items = json.loads(raw)
    pos = [(it["x"], it["y"]) for it in items if it["polarity"] == "pos"]
    neg = [(it["x"], it["y"]) for it in items if it["polarity"] == "neg"]
    return ClickState.create(pos, neg, w, h)


_EDT_CACHE = {}
_EDT_CACHE_MAX = 64


def _gt_margin_edts(gt: np.ndarray):
    """Distance-to-background and distance-to-foreground for a ground-truth
    mask, memoized: click simulation repeatedly queries the same masks during
    training."""
    key = (gt.shape, gt.tobytes())
    hit = _EDT_CACHE.get(key)
    if hit is None:
        if len(_EDT_CACHE) >= _EDT_CACHE_MAX:
            _EDT_CACHE.clear()
        hit = (exact_edt(~gt), exact_edt(gt))
        _EDT_CACHE[key] = hit
    return hit


def _sample_separated(rng, candidates: np.ndarray, count: int, min_sep: float,
                      taken: list) -> list:
    """Draw up to ``count`` points from ``candidates`` keeping every pair of
    chosen points (including ``taken``) at least ``min_sep`` apart."""
    chosen = []
    pool = candidates
    if taken and min_sep > 0:
        t = np.array(taken, dtype=np.float64)
        keep = np.ones(len(pool), dtype=bool)
        for p in t:
            keep &= np.hypot(pool[:, 0] - p[0], pool[:, 1] - p[1]) >= min_sep
        pool = pool[keep]
    while len(chosen) < count and len(pool):
        idx = int(rng.integers(len(pool)))
        pick = pool[idx]
        chosen.append((int(pick[0]), int(pick[1])))
        if min_sep > 0:
            keep = np.hypot(pool[:, 0] - pick[0], pool[:, 1] - pick[1]) >= min_sep
        else:
            keep = np.ones(len(pool), dtype=bool)
            keep[idx] = False
        pool = pool[keep]
    return chosen


def simulate_clicks(gt: np.ndarray, rng_seed: int, n_pos: int, n_neg: int,
                    d_pos: int = 3, d_neg_min: int = 3, d_neg_max: int = 40,
                    d_sep: int = 5) -> ClickState:
    """Training-time click simulation.

    Positive clicks land inside the object at least ``d_pos`` px from its
    boundary; negative clicks land in the background band ``d_neg_min`` to
    ``d_neg_max`` px from the object; chosen clicks stay ``d_sep`` px apart.
    Margins are halved repeatedly (floor 0) whenever the constraints leave too
    few candidate pixels; if the image itself has fewer eligible pixels than
    requested clicks even at zero margins, fewer clicks are returned.
    Deterministic for a fixed seed.
    """
    gt = np.asarray(gt, dtype=bool)
    if not (1 <= n_pos <= 15 and 1 <= n_neg <= 15):
        raise ValueError("n_pos and n_neg must lie in [1, 15]")
    if not gt.any() or gt.all():
        raise ValueError("ground truth must contain foreground and background")
    w, h = gt.shape
    dist_to_bg, dist_to_fg = _gt_margin_edts(gt)
    rng = np.random.default_rng(rng_seed)
    margins = (d_pos, d_neg_min, d_sep)
    while True:
        m_pos, m_neg_min, m_sep = margins
        pos_ok = gt & (dist_to_bg >= m_pos)
        neg_ok = (~gt) & (dist_to_fg >= m_neg_min) & (dist_to_fg <= d_neg_max)
        pos_cands = np.argwhere(pos_ok)
        neg_cands = np.argwhere(neg_ok)
        positives = _sample_separated(rng, pos_cands, n_pos, m_sep, [])
        negatives = _sample_separated(rng, neg_cands, n_neg, m_sep, positives)
        if len(positives) == n_pos and len(negatives) == n_neg:
            break
        if margins == (0, 0, 0):
            break  # image too small for the request; return what fits
        margins = tuple(m // 2 for m in margins)
    return ClickState.create(positives, negatives, w, h)
