"""Desk-scale training: synthetic scene generation, the optimization loop
over the composite loss with per-step simulated clicks, checkpointing, and
dataset evaluation.

Every run is fully reproducible from its config: scene content, click
simulation, parameter init, and batch order all derive from the config seed.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .clicks import ClickState, simulate_clicks
from .features import toy_backbone
from .losses import miou as compute_miou
from .losses import mbiou as compute_mbiou
from .network import (
    ContextBundle,
    NetConfig,
    NetworkParams,
    TrainingExample,
    forward,
    gradients,
    init_params,
)
from .pipeline import Pipeline
from .pngio import load_image_png, load_mask_png, save_image_png, save_mask_png
from .tensors import resize2d
from .tucker import halving_plan


@dataclass(frozen=True)
class SyntheticScene:
    """A two-frame scene: a textured object translated over a static
    background; the mask corresponds to the object position in the current
    frame."""

    frame_prev: np.ndarray  # (3, w, h)
    frame_curr: np.ndarray
    gt_mask: np.ndarray  # (w, h) bool, current frame
    gt_mask_prev: np.ndarray  # (w, h) bool, previous frame
    motion: tuple  # (dx, dy)
    seed: int

    @property
    def size(self):
        return self.frame_curr.shape[1:]


def _smooth_noise(rng, w, h, cells=6):
    low = rng.uniform(size=(3, cells, cells))
    return resize2d(low, w, h, method="bilinear")


def _ellipse_mask(w, h, cx, cy, ax, ay, theta):
    xs, ys = np.meshgrid(np.arange(w), np.arange(h), indexing="ij")
    dx = xs - cx
    dy = ys - cy
    u = dx * np.cos(theta) + dy * np.sin(theta)
    v = -dx * np.sin(theta) + dy * np.cos(theta)
    return (u / ax) ** 2 + (v / ay) ** 2 <= 1.0


def generate_scene(seed: int, min_size: int = 32, max_size: int = 64) -> SyntheticScene:
    """Deterministic random scene: a rotated textured ellipse over smooth
    background noise, occupying 5-60% of the frame, translated by a small
    integer motion between the two frames."""
    rng = np.random.default_rng(seed)
    w = int(rng.integers(min_size, max_size + 1))
    h = int(rng.integers(min_size, max_size + 1))
    bg = 0.25 + 0.5 * _smooth_noise(rng, w, h)
    dx = int(rng.integers(-3, 4))
    dy = int(rng.integers(-3, 4))
    while True:
        cx = rng.uniform(0.3 * w, 0.7 * w)
        cy = rng.uniform(0.3 * h, 0.7 * h)
        ax = rng.uniform(0.12 * w, 0.38 * w)
        ay = rng.uniform(0.12 * h, 0.38 * h)
        theta = rng.uniform(0, np.pi)
        mask = _ellipse_mask(w, h, cx, cy, ax, ay, theta)
        mask_prev = _ellipse_mask(w, h, cx - dx, cy - dy, ax, ay, theta)
        frac = mask.mean()
        if 0.05 <= frac <= 0.60 and 0.05 <= mask_prev.mean() <= 0.60:
            break
    color = rng.uniform(0.0, 1.0, size=3)
    xs, ys = np.meshgrid(np.arange(w), np.arange(h), indexing="ij")
    stripes = 0.15 * np.sin(0.7 * xs + 1.3 * ys + rng.uniform(0, 6.28))
    obj = np.clip(color[:, None, None] + stripes[None], 0.0, 1.0)
    frame_curr = bg.copy()
    frame_curr[:, mask] = obj[:, mask]
    frame_prev = bg.copy()
    frame_prev[:, mask_prev] = obj[:, mask_prev]
    return SyntheticScene(
        frame_prev=np.clip(frame_prev, 0.0, 1.0),
        frame_curr=np.clip(frame_curr, 0.0, 1.0),
        gt_mask=mask,
        gt_mask_prev=mask_prev,
        motion=(dx, dy),
        seed=seed,
    )


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 200
    learning_rate: float = 0.05
    optimizer: str = "sgd"  # "sgd" | "adam"
    batch_size: int = 2
    delta: float = 1.0
    num_heads: int = 3
    seed: int = 0
    eval_every: int = 25
    num_scenes: int = 8
    scene_min_size: int = 32
    scene_max_size: int = 64
    hidden_depth: int = 12
    num_layers: int = 6
    dilations: tuple = (1, 1, 2, 4, 8, 1)
    backbone_seed: int = 0
    backbone_input: int = 32
    backbone_depths: tuple = (8, 24)
    backbone_downsamples: tuple = (1, 2)
    clicks_min: int = 1
    clicks_max: int = 15
    grad_clip: float = 10.0  # global-norm cap; 0 disables

    def __post_init__(self):
        if min(self.steps, self.batch_size, self.num_heads, self.num_scenes) < 1:
            raise ValueError("steps, batch size, heads, and scene count must be positive")
        if self.learning_rate <= 0 or self.delta <= 0:
            raise ValueError("learning rate and delta must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not 1 <= self.clicks_min <= self.clicks_max <= 15:
            raise ValueError("click counts must satisfy 1 <= min <= max <= 15")

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        raw = dict(raw)
        for key in ("dilations", "backbone_depths", "backbone_downsamples"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(**raw)


@dataclass
class TrainResult:
    pipeline: Pipeline
    losses: list  # mean batch loss per step
    eval_history: list  # (step, loss) at the eval cadence
    min_head_counts: dict  # head index -> times selected as the min head
    config: TrainConfig


class _Adam:
    def __init__(self, shapes, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [(np.zeros(sw), np.zeros(sb)) for sw, sb in shapes]
        self.v = [(np.zeros(sw), np.zeros(sb)) for sw, sb in shapes]

    def step(self, layers, grads):
        self.t += 1
        b1t = 1.0 - self.b1**self.t
        b2t = 1.0 - self.b2**self.t
        out = []
        for i, ((w, b), (gw, gb)) in enumerate(zip(layers, grads)):
            mw, mb = self.m[i]
            vw, vb = self.v[i]
            mw = self.b1 * mw + (1 - self.b1) * gw
            mb = self.b1 * mb + (1 - self.b1) * gb
            vw = self.b2 * vw + (1 - self.b2) * gw * gw
            vb = self.b2 * vb + (1 - self.b2) * gb * gb
            self.m[i] = (mw, mb)
            self.v[i] = (vw, vb)
            w = w - self.lr * (mw / b1t) / (np.sqrt(vw / b2t) + self.eps)
            b = b - self.lr * (mb / b1t) / (np.sqrt(vb / b2t) + self.eps)
            out.append((w, b))
        return out


def _sgd_step(layers, grads, lr):
    return [(w - lr * gw, b - lr * gb) for (w, b), (gw, gb) in zip(layers, grads)]


def _clip_global_norm(grads, max_norm: float):
    if max_norm <= 0:
        return grads
    total = np.sqrt(sum(float(np.sum(gw * gw) + np.sum(gb * gb)) for gw, gb in grads))
    if total <= max_norm:
        return grads
    scale = max_norm / total
    return [(gw * scale, gb * scale) for gw, gb in grads]


def build_pipeline(config: TrainConfig, seed: int = None) -> Pipeline:
    backbone = toy_backbone(
        seed=config.backbone_seed,
        input_size=config.backbone_input,
        stage_depths=config.backbone_depths,
        downsamples=config.backbone_downsamples,
    )
    plan = halving_plan(list(zip(backbone.tap_layer_ids, backbone.tap_depths)))
    cfg = NetConfig(
        feature_depth=plan.total_compressed_depth,
        hidden_depth=config.hidden_depth,
        num_layers=config.num_layers,
        dilations=config.dilations,
        num_heads=config.num_heads,
    )
    params = init_params(cfg, seed=config.seed if seed is None else seed)
    return Pipeline(params, backbone, plan)


def train(config: TrainConfig, scenes=None, out_dir=None) -> TrainResult:
    """Optimize the composite loss on synthetic scenes with per-step
    simulated clicks. Deterministic per config; aborts on non-finite loss."""
    if scenes is None:
        scenes = [
            generate_scene(config.seed * 100_003 + i, config.scene_min_size, config.scene_max_size)
            for i in range(config.num_scenes)
        ]
    pipeline = build_pipeline(config)
    features = [pipeline.extract(s.frame_curr) for s in scenes]
    layers = list(pipeline.params.layers)
    net_cfg = pipeline.params.config
    rng = np.random.default_rng(config.seed + 1)
    adam = (
        _Adam([(w.shape, b.shape) for w, b in layers], config.learning_rate)
        if config.optimizer == "adam"
        else None
    )
    losses = []
    eval_history = []
    min_head_counts = {}
    for step in range(config.steps):
        idxs = rng.integers(0, len(scenes), size=config.batch_size)
        batch = []
        for i in idxs:
            s = scenes[int(i)]
            n_pos = int(rng.integers(config.clicks_min, config.clicks_max + 1))
            n_neg = int(rng.integers(config.clicks_min, config.clicks_max + 1))
            clicks = simulate_clicks(s.gt_mask, int(rng.integers(2**31)), n_pos, n_neg)
            ctx = ContextBundle(s.frame_curr, s.frame_prev, clicks)
            batch.append(TrainingExample(features[int(i)], ctx, s.gt_mask.astype(float), clicks))
        params = NetworkParams(net_cfg, tuple(layers))
        try:
            grads, breakdowns, loss = gradients(batch, params, delta=config.delta)
        except FloatingPointError as exc:
            raise FloatingPointError(f"training diverged at step {step}: {exc}") from exc
        grads = _clip_global_norm(grads, config.grad_clip)
        losses.append(loss)
        for b in breakdowns:
            min_head_counts[b.min_head_index] = min_head_counts.get(b.min_head_index, 0) + 1
        if adam is not None:
            layers = adam.step(layers, grads)
        else:
            layers = _sgd_step(layers, grads, config.learning_rate)
        if (step + 1) % config.eval_every == 0 or step == config.steps - 1:
            eval_history.append((step + 1, loss))
    final = Pipeline(NetworkParams(net_cfg, tuple(layers)), pipeline.backbone, pipeline.plan)
    result = TrainResult(final, losses, eval_history, min_head_counts, config)
    if out_dir is not None:
        save_run(out_dir, result)
    return result


def save_run(out_dir, result: TrainResult) -> None:
    os.makedirs(out_dir, exist_ok=True)
    result.pipeline.save(out_dir)
    payload = {
        "config": asdict(result.config),
        "losses": result.losses,
        "eval_history": result.eval_history,
        "min_head_counts": {str(k): v for k, v in result.min_head_counts.items()},
    }
    with open(os.path.join(out_dir, "training.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)


# -- dataset layout ----------------------------------------------------------

def write_scene_dataset(root, seeds, clip_prefix: str = "scene",
                        min_size: int = 32, max_size: int = 64):
    """Write synthetic scenes in the ingestion layout:
    ``<root>/<clip>/frames/NNNNN.png`` + ``<root>/<clip>/masks/NNNNN.png``
    (two frames per clip: previous then current)."""
    scenes = []
    for i, seed in enumerate(seeds):
        scene = generate_scene(seed, min_size, max_size)
        clip = os.path.join(root, f"{clip_prefix}{i:03d}")
        os.makedirs(os.path.join(clip, "frames"), exist_ok=True)
        os.makedirs(os.path.join(clip, "masks"), exist_ok=True)
        save_image_png(os.path.join(clip, "frames", "00000.png"), scene.frame_prev)
        save_image_png(os.path.join(clip, "frames", "00001.png"), scene.frame_curr)
        save_mask_png(os.path.join(clip, "masks", "00000.png"), scene.gt_mask_prev)
        save_mask_png(os.path.join(clip, "masks", "00001.png"), scene.gt_mask)
        scenes.append(scene)
    return scenes


@dataclass(frozen=True)
class EvalItem:
    clip: str
    frame: str
    frame_path: str
    prev_path: str  # equals frame_path at sequence start
    mask_path: str


def list_eval_items(data_root) -> list:
    items = []
    for clip in sorted(os.listdir(data_root)):
        frames_dir = os.path.join(data_root, clip, "frames")
        if not os.path.isdir(frames_dir):
            continue
        names = sorted(os.listdir(frames_dir))
        for i, name in enumerate(names):
            prev = names[i - 1] if i > 0 else name
            items.append(
                EvalItem(
                    clip=clip,
                    frame=name,
                    frame_path=os.path.join(frames_dir, name),
                    prev_path=os.path.join(frames_dir, prev),
                    mask_path=os.path.join(data_root, clip, "masks", name),
                )
            )
    return items


def evaluate(pipeline, data_root, clicks_per_image: int = 10, seed: int = 0,
             head: int = 1, predict_fn=None) -> dict:
    """Run the evaluation protocol over a dataset directory.

    Each frame gets half positive, half negative simulated clicks from its
    ground truth; head ``head`` is scored with mean IOU and mean boundary
    IOU. Items with unreadable frames or missing masks become error entries
    and the run continues. ``pipeline`` may be a Pipeline or a checkpoint
    directory path; ``predict_fn(frame, prev, clicks, item)`` overrides the
    model (it must return (M, w, h) soft maps).
    """
    if predict_fn is None:
        if not isinstance(pipeline, Pipeline):
            pipeline = Pipeline.from_checkpoint(pipeline)

        def predict_fn(frame, prev, clicks, item):
            return pipeline.segment(frame, prev, clicks).soft_maps

    items = list_eval_items(data_root)
    if not items:
        raise ValueError(f"no evaluation items under {data_root!r}")
    n_pos = clicks_per_image // 2
    n_neg = clicks_per_image - n_pos
    per_image = []
    preds, gts = [], []
    for idx, item in enumerate(items):
        try:
            frame = load_image_png(item.frame_path)
            prev = load_image_png(item.prev_path)
            gt = load_mask_png(item.mask_path)
            clicks = simulate_clicks(gt, seed + idx, n_pos, n_neg)
            soft = predict_fn(frame, prev, clicks, item)
            pred = np.asarray(soft)[head - 1] >= 0.5
        except (OSError, ValueError) as exc:
            per_image.append({"clip": item.clip, "frame": item.frame, "error": str(exc)})
            continue
        pair_iou = compute_miou([pred], [gt])
        pair_biou = compute_mbiou([pred], [gt])
        preds.append(pred)
        gts.append(gt)
        per_image.append(
            {"clip": item.clip, "frame": item.frame, "iou": pair_iou, "biou": pair_biou}
        )
    scored = [e for e in per_image if "iou" in e]
    return {
        "n_images": len(scored),
        "miou": compute_miou(preds, gts) if preds else 0.0,
        "mbiou": compute_mbiou(preds, gts) if preds else 0.0,
        "per_image": per_image,
    }


def overfit_miou(result: TrainResult, scene: SyntheticScene, seed: int = 0,
                 clicks_per_image: int = 10, head: int = 1) -> float:
    """Head-``head`` mIOU of a trained pipeline on one scene under the
    evaluation click protocol."""
    n_pos = clicks_per_image // 2
    clicks = simulate_clicks(scene.gt_mask, seed, n_pos, clicks_per_image - n_pos)
    prop = result.pipeline.segment(scene.frame_curr, scene.frame_prev, clicks)
    return compute_miou([prop.binary_masks[head - 1]], [scene.gt_mask])
