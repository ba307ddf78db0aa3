"""Depth-only Tucker compression of convolutional feature tensors.

Each (depth, w, h) feature tensor is truncated along its depth axis only: the
factor matrix holds the leading left singular vectors of the depth-mode
unfolding and the core tensor holds the per-pixel projections onto them. The
spatial axes are never compressed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .tensors import fold, load_tensor, save_tensor, truncated_svd, unfold


@dataclass(frozen=True)
class DepthFactor:
    """Orthonormal depth basis for one source layer."""

    factor: np.ndarray  # (original_depth, rank), orthonormal columns
    rank: int
    source_layer: str
    energy_retained: float

    @property
    def original_depth(self) -> int:
        return self.factor.shape[0]


@dataclass(frozen=True)
class CompressionPlan:
    """Per-layer depth ranks; ``total_compressed_depth`` is their sum."""

    per_layer_ranks: tuple
    total_compressed_depth: int = field(init=False)

    def __post_init__(self):
        ranks = tuple((str(layer), int(rank)) for layer, rank in self.per_layer_ranks)
        object.__setattr__(self, "per_layer_ranks", ranks)
        object.__setattr__(self, "total_compressed_depth", sum(r for _, r in ranks))

    @property
    def plan_id(self) -> str:
        return "+".join(f"{layer}:{rank}" for layer, rank in self.per_layer_ranks)


def halving_plan(layer_depths) -> CompressionPlan:
    """Rank ceil(depth/2) per layer, the default ~2x compression allocation."""
    pairs = []
    for i, entry in enumerate(layer_depths):
        if isinstance(entry, (tuple, list)):
            layer, depth = entry
        else:
            layer, depth = f"layer{i}", entry
        pairs.append((layer, (int(depth) + 1) // 2))
    return CompressionPlan(tuple(pairs))


def full_rank_plan(layer_depths) -> CompressionPlan:
    pairs = []
    for i, entry in enumerate(layer_depths):
        if isinstance(entry, (tuple, list)):
            layer, depth = entry
        else:
            layer, depth = f"layer{i}", entry
        pairs.append((layer, int(depth)))
    return CompressionPlan(tuple(pairs))


@dataclass(frozen=True)
class FeatureStack:
    """Per-pixel feature stack at native resolution (depth-first layout)."""

    features: np.ndarray  # (depth, w, h)
    depth: int
    provenance: tuple  # (backbone id, compression plan id)

    @property
    def width(self) -> int:
        return self.features.shape[1]

    @property
    def height(self) -> int:
        return self.features.shape[2]


def depth_tucker(c: np.ndarray, rank: int, source_layer: str = "layer"):
    """Truncate ``c`` (depth, w, h) to ``rank`` depth channels.

    Returns ``(core, factor)`` with ``core`` of shape (rank, w, h). The
    reconstruction ``factor @ core`` is the best rank-``rank`` depth
    approximation; its squared Frobenius error equals the sum of the discarded
    squared singular values of the depth-mode unfolding. ``rank == depth`` is
    an exact passthrough (identity factor), so a full-rank plan keeps feature
    values unchanged rather than rotating them into an arbitrary basis.
    """
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 3:
        raise ValueError("depth_tucker expects a (depth, w, h) tensor")
    depth = c.shape[0]
    if not 1 <= rank <= depth:
        raise ValueError(f"rank {rank} out of range [1, {depth}]")
    if rank == depth:
        factor = DepthFactor(np.eye(depth), depth, source_layer, 1.0)
        return c.copy(), factor
    mat = unfold(c, 0)
    svd = truncated_svd(mat, min(mat.shape))
    total = float(np.sum(svd.singular_values**2))
    kept = float(np.sum(svd.singular_values[:rank] ** 2))
    energy = 1.0 if total == 0.0 else kept / total
    u = svd.left_vectors[:, :rank]
    core = fold(u.T @ mat, 0, (rank,) + c.shape[1:])
    return core, DepthFactor(np.ascontiguousarray(u), rank, source_layer, energy)


def apply_factor(c: np.ndarray, f: DepthFactor) -> np.ndarray:
    """Project the depth vector of every pixel onto the factor columns."""
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 3 or c.shape[0] != f.original_depth:
        raise ValueError(
            f"tensor depth {c.shape[0] if c.ndim == 3 else c.shape} does not match "
            f"factor depth {f.original_depth}"
        )
    return fold(f.factor.T @ unfold(c, 0), 0, (f.rank,) + c.shape[1:])


def reconstruct(core: np.ndarray, f: DepthFactor) -> np.ndarray:
    """Lift a core tensor back to the original depth: ``factor @ core``."""
    core = np.asarray(core, dtype=np.float64)
    if core.ndim != 3 or core.shape[0] != f.rank:
        raise ValueError("core depth does not match factor rank")
    return fold(f.factor @ unfold(core, 0), 0, (f.original_depth,) + core.shape[1:])


def fit_depth_factor(samples, rank: int, source_layer: str = "layer") -> DepthFactor:
    """Fit a frozen depth factor from one or more sample tensors of one layer.

    The samples' depth-mode unfoldings are concatenated column-wise, so the
    factor captures the depth subspace of the whole sample. Use
    :func:`apply_factor` to reuse it at inference time.
    """
    mats = []
    depth = None
    for s in samples:
        s = np.asarray(s, dtype=np.float64)
        if s.ndim != 3:
            raise ValueError("samples must be (depth, w, h) tensors")
        if depth is None:
            depth = s.shape[0]
        elif s.shape[0] != depth:
            raise ValueError("all samples must share the same depth")
        mats.append(unfold(s, 0))
    if depth is None:
        raise ValueError("at least one sample tensor required")
    if not 1 <= rank <= depth:
        raise ValueError(f"rank {rank} out of range [1, {depth}]")
    mat = np.concatenate(mats, axis=1)
    svd = truncated_svd(mat, min(mat.shape))
    total = float(np.sum(svd.singular_values**2))
    kept = float(np.sum(svd.singular_values[:rank] ** 2))
    energy = 1.0 if total == 0.0 else kept / total
    return DepthFactor(np.ascontiguousarray(svd.left_vectors[:, :rank]), rank, source_layer, energy)


def compress_stack(layers, plan: CompressionPlan, provenance=("", "")):
    """Compress each layer per the plan and concatenate along depth.

    ``layers`` must match the plan one-to-one and share spatial extents
    (upsampling to a common resolution has already happened). Output depth is
    ``plan.total_compressed_depth``.
    """
    layers = [np.asarray(l, dtype=np.float64) for l in layers]
    if len(layers) != len(plan.per_layer_ranks):
        raise ValueError(
            f"plan covers {len(plan.per_layer_ranks)} layers but {len(layers)} were given"
        )
    spatial = None
    for t in layers:
        if t.ndim != 3:
            raise ValueError("each layer must be a (depth, w, h) tensor")
        if spatial is None:
            spatial = t.shape[1:]
        elif t.shape[1:] != spatial:
            raise ValueError(f"spatial extents differ: {t.shape[1:]} vs {spatial}")
    cores = []
    factors = []
    for t, (layer_id, rank) in zip(layers, plan.per_layer_ranks):
        core, f = depth_tucker(t, rank, source_layer=layer_id)
        cores.append(core)
        factors.append(f)
    features = np.concatenate(cores, axis=0)
    backbone_id = provenance[0] if provenance else ""
    stack = FeatureStack(features, plan.total_compressed_depth, (backbone_id, plan.plan_id))
    return stack, factors


def save_factor(path_base, f: DepthFactor) -> None:
    """Persist a factor: tensor container for the matrix, JSON sidecar for metadata."""
    save_tensor(f"{path_base}.hseg", f.factor)
    meta = {"source_layer": f.source_layer, "rank": f.rank, "energy_retained": f.energy_retained}
    with open(f"{path_base}.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)


def load_factor(path_base) -> DepthFactor:
    factor = load_tensor(f"{path_base}.hseg")
    with open(f"{path_base}.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    return DepthFactor(factor, int(meta["rank"]), meta["source_layer"], float(meta["energy_retained"]))
