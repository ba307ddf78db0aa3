"""Full-resolution dilated segmentation network with context-aware skips.

Layer 1 projects the concatenated feature stack and context channels to the
hidden depth with a 1x1 convolution. Every later layer re-concatenates the
raw context channels onto the previous output ("context-aware skip") and
applies a 3x3 convolution; hidden layers use growing dilations followed by
ReLU, the final layer maps to the M head channels through a sigmoid. All 3x3
convolutions use zero padding equal to their dilation, so every layer output
keeps the input spatial extents exactly.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from . import convops
from .clicks import ClickState
from .losses import LossBreakdown, compose_breakdown, diversity_weights, extract_boundary
from .tensors import load_tensor, save_tensor
from .tucker import FeatureStack


@dataclass(frozen=True)
class NetConfig:
    feature_depth: int
    context_depth: int = 10
    hidden_depth: int = 12
    num_layers: int = 6
    dilations: tuple = (1, 1, 2, 4, 8, 1)
    num_heads: int = 3

    def __post_init__(self):
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        if len(self.dilations) != self.num_layers:
            raise ValueError("dilations must list one entry per layer")
        if self.num_layers < 2:
            raise ValueError("need at least an input projection and an output layer")
        if min(self.feature_depth, self.context_depth, self.hidden_depth, self.num_heads) < 1:
            raise ValueError("depths and head count must be positive")

    def layer_input_depths(self) -> tuple:
        first = self.feature_depth + self.context_depth
        rest = self.hidden_depth + self.context_depth
        return (first,) + (rest,) * (self.num_layers - 1)

    def layer_output_depths(self) -> tuple:
        return (self.hidden_depth,) * (self.num_layers - 1) + (self.num_heads,)

    def kernel_sizes(self) -> tuple:
        return (1,) + (3,) * (self.num_layers - 1)

    def receptive_field(self) -> int:
        # 1x1 first layer contributes nothing; each 3x3 layer adds 2*dilation.
        return 1 + 2 * sum(self.dilations[1:])


def desk_config(feature_depth: int = 16, num_heads: int = 3) -> NetConfig:
    return NetConfig(feature_depth=feature_depth, num_heads=num_heads)


def paper_scale_config() -> NetConfig:
    return NetConfig(
        feature_depth=736,
        context_depth=10,
        hidden_depth=70,
        num_layers=10,
        dilations=(1, 1, 2, 4, 8, 16, 32, 64, 128, 1),
        num_heads=6,
    )


@dataclass(frozen=True)
class NetworkParams:
    config: NetConfig
    layers: tuple  # ((weight, bias), ...) per layer

    def __post_init__(self):
        ins = self.config.layer_input_depths()
        outs = self.config.layer_output_depths()
        ks = self.config.kernel_sizes()
        if len(self.layers) != self.config.num_layers:
            raise ValueError("layer count does not match config")
        for i, (w, b) in enumerate(self.layers):
            expect = (outs[i], ins[i], ks[i], ks[i])
            if w.shape != expect or b.shape != (outs[i],):
                raise ValueError(f"layer {i} shapes {w.shape}/{b.shape} do not match {expect}")


def init_params(cfg: NetConfig, seed: int = 0, head_scale: float = 0.05) -> NetworkParams:
    """He-uniform fan-in initialization; biases start at zero.

    The final (head) layer is scaled down by ``head_scale`` so all heads
    start near 0.5 everywhere. Full-strength head init binarizes to speckle,
    whose enormous boundary produces violent early boundary-loss gradients
    that saturate the non-best heads to zero, where the empty contour and the
    flat sigmoid leave them untrainable.
    """
    rng = np.random.default_rng(seed)
    layers = []
    for i, (cin, cout, k) in enumerate(
        zip(cfg.layer_input_depths(), cfg.layer_output_depths(), cfg.kernel_sizes())
    ):
        fan_in = cin * k * k
        limit = math.sqrt(6.0 / fan_in)
        weight = rng.uniform(-limit, limit, size=(cout, cin, k, k))
        if i == cfg.num_layers - 1:
            weight = weight * head_scale
        layers.append((weight, np.zeros(cout)))
    return NetworkParams(cfg, tuple(layers))


def zero_params(cfg: NetConfig) -> NetworkParams:
    layers = [
        (np.zeros((cout, cin, k, k)), np.zeros(cout))
        for cin, cout, k in zip(cfg.layer_input_depths(), cfg.layer_output_depths(), cfg.kernel_sizes())
    ]
    return NetworkParams(cfg, tuple(layers))


@dataclass(frozen=True)
class ContextBundle:
    """The ten context channels: current frame, previous frame, click rasters,
    and diagonal-normalized diffusion maps, all at native resolution."""

    frame_curr: np.ndarray  # (3, w, h) in [0, 1]
    frame_prev: np.ndarray  # (3, w, h) in [0, 1]
    clicks: ClickState

    def __post_init__(self):
        if self.frame_curr.shape != self.frame_prev.shape or self.frame_curr.shape[0] != 3:
            raise ValueError("frames must share a (3, w, h) shape")
        w, h = self.frame_curr.shape[1:]
        if (self.clicks.width, self.clicks.height) != (w, h):
            raise ValueError("click state extents do not match the frames")

    def channels(self) -> np.ndarray:
        w, h = self.frame_curr.shape[1:]
        diag = float(np.hypot(w, h))
        return np.concatenate(
            [
                self.frame_curr,
                self.frame_prev,
                self.clicks.mask_pos[None],
                self.clicks.mask_neg[None],
                (self.clicks.dist_pos / diag)[None],
                (self.clicks.dist_neg / diag)[None],
            ],
            axis=0,
        )


@dataclass(frozen=True)
class SegmentationProposals:
    """M soft maps in [0, 1]; binarization thresholds at 1/2."""

    soft_maps: np.ndarray  # (M, w, h)

    @property
    def num_heads(self) -> int:
        return self.soft_maps.shape[0]

    @property
    def binary_masks(self) -> np.ndarray:
        return self.soft_maps >= 0.5

    def head(self, m: int) -> np.ndarray:
        if not 1 <= m <= self.num_heads:
            raise ValueError(f"head {m} out of [1, {self.num_heads}]")
        return self.soft_maps[m - 1]


def _context_array(ctx) -> np.ndarray:
    return ctx.channels() if isinstance(ctx, ContextBundle) else np.asarray(ctx, dtype=np.float64)


def _feature_array(feats) -> np.ndarray:
    return feats.features if isinstance(feats, FeatureStack) else np.asarray(feats, dtype=np.float64)


def forward(ctx, feats, params: NetworkParams, linear: bool = False,
            return_layers: bool = False):
    """Run the network; returns SegmentationProposals.

    ``linear`` disables ReLU and the sigmoid (the mode used by
    receptive-field analysis) and returns the raw (M, w, h) maps.
    ``return_layers`` additionally returns the list of every layer's output,
    for extent checks."""
    cfg = params.config
    ctx_arr = _context_array(ctx)
    feat_arr = _feature_array(feats)
    if ctx_arr.shape[0] != cfg.context_depth:
        raise ValueError(f"context depth {ctx_arr.shape[0]} != {cfg.context_depth}")
    if feat_arr.shape[0] != cfg.feature_depth:
        raise ValueError(f"feature depth {feat_arr.shape[0]} != {cfg.feature_depth}")
    if ctx_arr.shape[1:] != feat_arr.shape[1:]:
        raise ValueError("context and features must be spatially congruent")
    layer_outputs = []
    w0, b0 = params.layers[0]
    h = convops.conv2d(np.concatenate([feat_arr, ctx_arr], axis=0), w0, b0, 1, 0)
    layer_outputs.append(h)
    for l in range(1, cfg.num_layers - 1):
        wl, bl = params.layers[l]
        d = cfg.dilations[l]
        h = convops.conv2d(np.concatenate([h, ctx_arr], axis=0), wl, bl, d, d)
        if not linear:
            h = convops.relu(h)
        layer_outputs.append(h)
    wl, bl = params.layers[-1]
    d = cfg.dilations[-1]
    logits = convops.conv2d(np.concatenate([h, ctx_arr], axis=0), wl, bl, d, d)
    layer_outputs.append(logits)
    out = logits if linear else SegmentationProposals(convops.sigmoid(logits))
    if return_layers:
        return out, layer_outputs
    return out


def rank_heads(proposals: SegmentationProposals, clicks: ClickState = None,
               by_interactive_context: bool = False):
    """Presentation order of head indices (1-based).

    Training orders heads by accuracy, so the default is plain index order.
    With ``by_interactive_context`` the heads are re-ranked by ascending
    click-agreement penalty against the given clicks (stable on ties).
    """
    m = proposals.num_heads
    order = list(range(1, m + 1))
    if by_interactive_context and clicks is not None:
        from .losses import interactive_context_loss

        scores = [
            interactive_context_loss(clicks.mask_pos, clicks.mask_neg, proposals.soft_maps[i])
            for i in range(m)
        ]
        order = [i + 1 for i in sorted(range(m), key=lambda i: (scores[i], i))]
    return order


# -- training graph --------------------------------------------------------

@dataclass(frozen=True)
class TrainingExample:
    """One supervised item: features + context channels + target + clicks."""

    features: np.ndarray  # (feature_depth, w, h) or FeatureStack
    context: object  # ContextBundle or (context_depth, w, h) array
    target: np.ndarray  # (w, h) map in [0, 1]
    clicks: ClickState = None


def _tape_forward(feat_arr, ctx_arr, wvars, bvars, cfg: NetConfig) -> ad.Var:
    ctx_c = ad.constant(ctx_arr)
    x = ad.constant(np.concatenate([feat_arr, ctx_arr], axis=0))
    h = ad.conv2d(x, wvars[0], bvars[0], 1, 0)
    for l in range(1, cfg.num_layers - 1):
        d = cfg.dilations[l]
        h = ad.relu(ad.conv2d(ad.concat0([h, ctx_c]), wvars[l], bvars[l], d, d))
    d = cfg.dilations[-1]
    logits = ad.conv2d(ad.concat0([h, ctx_c]), wvars[-1], bvars[-1], d, d)
    return ad.sigmoid(logits)


def _tape_jaccard(a: ad.Var, b: np.ndarray) -> ad.Var:
    smax = ad.sum_all(ad.maximum(a, b))
    if float(smax.value) == 0.0:
        return ad.constant(0.0)
    return 1.0 - ad.sum_all(ad.minimum(a, b)) / smax


def _tape_interactive_context(a: ad.Var, clicks: ClickState) -> ad.Var:
    if clicks is None or (not clicks.positive_clicks and not clicks.negative_clicks):
        return ad.constant(0.0)
    term = ad.constant(0.0)
    if clicks.positive_clicks:
        pts = np.array(clicks.positive_clicks)
        term = term + ad.sum_all(1.0 - ad.gather_pixels(a, pts[:, 0], pts[:, 1]))
    if clicks.negative_clicks:
        pts = np.array(clicks.negative_clicks)
        term = term + ad.sum_all(ad.gather_pixels(a, pts[:, 0], pts[:, 1]))
    return term


def _tape_phl(a: ad.Var, y: np.ndarray, delta: float, points: np.ndarray) -> ad.Var:
    if points.size == 0:
        return ad.constant(0.0)
    g = ad.gather_pixels(a, points[:, 0], points[:, 1])
    r = (ad.constant(y[points[:, 0], points[:, 1]]) - g) * (1.0 / delta)
    return ad.sum_all(ad.sqrt(r * r + 1.0) - 1.0) * (delta * delta)


def head_boundary_points(soft_map: np.ndarray) -> np.ndarray:
    """Boundary pixel selection for the penalty: the outer contour point set
    of the map binarized at 1/2, as an (N, 2) index array (stop-gradient)."""
    points = extract_boundary(np.asarray(soft_map) >= 0.5).point_set
    if not points:
        return np.empty((0, 2), dtype=np.int64)
    return np.array(sorted(points), dtype=np.int64)


def derive_boundaries(batch, params: NetworkParams):
    """Per-item, per-head boundary selections at the current parameters.

    Used to freeze the selection when comparing analytic gradients against
    finite differences of the loss (the selection itself is not
    differentiated)."""
    out = []
    for ex in batch:
        prop = forward(ex.context, ex.features, params)
        out.append([head_boundary_points(m) for m in prop.soft_maps])
    return out


def _batch_graph(batch, params: NetworkParams, delta: float, boundaries=None):
    cfg = params.config
    wvars = [ad.param(w) for w, _ in params.layers]
    bvars = [ad.param(b) for _, b in params.layers]
    lam = diversity_weights(cfg.num_heads)
    breakdowns = []
    item_exprs = []
    for i, ex in enumerate(batch):
        feat_arr = _feature_array(ex.features)
        ctx_arr = _context_array(ex.context)
        y = np.asarray(ex.target, dtype=np.float64)
        heads = _tape_forward(feat_arr, ctx_arr, wvars, bvars, cfg)
        jacs, ics, phls = [], [], []
        for m in range(cfg.num_heads):
            a = ad.channel(heads, m)
            jacs.append(_tape_jaccard(a, y))
            ics.append(_tape_interactive_context(a, ex.clicks))
            if boundaries is None:
                pts = head_boundary_points(a.value)
            else:
                pts = boundaries[i][m]
            phls.append(_tape_phl(a, y, delta, pts))
        combined = [j + ic for j, ic in zip(jacs, ics)]
        min_idx = int(np.argmin([c.item() for c in combined]))
        expr = combined[min_idx]
        for m in range(cfg.num_heads):
            expr = expr + float(lam[m]) * jacs[m]
            expr = expr + phls[m]
        item_exprs.append(expr)
        breakdowns.append(
            compose_breakdown(
                [j.item() for j in jacs], [ic.item() for ic in ics], [p.item() for p in phls]
            )
        )
    total = item_exprs[0]
    for expr in item_exprs[1:]:
        total = total + expr
    total = total * (1.0 / len(batch))
    return total, wvars, bvars, breakdowns


def batch_loss(batch, params: NetworkParams, delta: float = 1.0, boundaries=None):
    """Mean composite loss over the batch plus per-item breakdowns
    (forward only)."""
    total, _, _, breakdowns = _batch_graph(batch, params, delta, boundaries)
    return float(total.value), breakdowns


def gradients(batch, params: NetworkParams, delta: float = 1.0, boundaries=None):
    """Exact reverse-mode gradients of the mean composite loss.

    Returns ``(grads, breakdowns, loss)`` where ``grads`` pairs up with
    ``params.layers``. Boundary-pixel selection follows the stop-gradient
    convention: re-derived from the current forward pass (or taken from
    ``boundaries``) and treated as constant.
    """
    total, wvars, bvars, breakdowns = _batch_graph(batch, params, delta, boundaries)
    if not np.isfinite(total.value):
        raise FloatingPointError(
            f"non-finite loss {float(total.value)}; per-item totals: "
            f"{[b.total for b in breakdowns]}"
        )
    ad.backward(total)
    grads = []
    for wv, bv in zip(wvars, bvars):
        gw = wv.grad if wv.grad is not None else np.zeros_like(wv.value)
        gb = bv.grad if bv.grad is not None else np.zeros_like(bv.value)
        grads.append((gw, gb))
    return grads, breakdowns, float(total.value)


# -- checkpoints ------------------------------------------------------------

def save_checkpoint(dirpath, params: NetworkParams, extra: dict = None) -> None:
    """Manifest JSON plus one tensor container per layer tensor; the round
    trip is bit-exact."""
    os.makedirs(dirpath, exist_ok=True)
    manifest = {"net": asdict(params.config)}
    manifest["net"]["dilations"] = list(params.config.dilations)
    if extra:
        manifest.update(extra)
    with open(os.path.join(dirpath, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    for i, (w, b) in enumerate(params.layers):
        save_tensor(os.path.join(dirpath, f"layer{i:02d}_weight.hseg"), w)
        save_tensor(os.path.join(dirpath, f"layer{i:02d}_bias.hseg"), b)


def load_checkpoint(dirpath):
    """Returns ``(params, manifest)``."""
    with open(os.path.join(dirpath, "config.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    net = dict(manifest["net"])
    net["dilations"] = tuple(net["dilations"])
    cfg = NetConfig(**net)
    layers = []
    for i in range(cfg.num_layers):
        w = load_tensor(os.path.join(dirpath, f"layer{i:02d}_weight.hseg"))
        b = load_tensor(os.path.join(dirpath, f"layer{i:02d}_bias.hseg"))
        layers.append((w, b))
    return NetworkParams(cfg, tuple(layers)), manifest
