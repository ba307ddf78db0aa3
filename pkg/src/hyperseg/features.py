"""Backbone feature extraction and convolutional tessellation.

A pluggable convolutional backbone produces hypercolumn features for tiles of
the backbone's fixed input size. Arbitrarily sized images are handled by the
tessellation pipeline: resize the image to an integer multiple of the tile
size, stack the tiles as a minibatch, extract and depth-compress features per
tile, reassemble the tiles in place, and resize back to the native extents.
Tiles are processed independently with no overlap or seam blending.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .convops import avgpool2, conv2d, relu
from .tensors import load_tensor, resize2d, save_tensor
from .tucker import CompressionPlan, FeatureStack, compress_stack

__all__ = [
    "Backbone",
    "BackboneStage",
    "FeatureStack",
    "TileGrid",
    "backbone_hypercolumn",
    "backbone_tap_features",
    "identity_backbone",
    "load_backbone",
    "reassemble_tiles",
    "save_backbone",
    "stack_tiles",
    "tessellate_extract",
    "tile_grid",
    "toy_backbone",
]


@dataclass(frozen=True)
class BackboneStage:
    weight: np.ndarray  # (Cout, Cin, k, k)
    bias: np.ndarray  # (Cout,)
    activation: str  # "relu" | "identity"
    downsample: int  # 1 = keep extents, 2 = 2x average pool after the conv


@dataclass(frozen=True)
class Backbone:
    backbone_id: str
    input_width: int
    input_height: int
    stages: tuple
    tap_points: tuple  # stage indices whose outputs form the hypercolumn

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        object.__setattr__(self, "tap_points", tuple(int(t) for t in self.tap_points))
        factor = 1
        factors = []
        for stage in self.stages:
            factor *= stage.downsample
            factors.append(factor)
        for t in self.tap_points:
            if not 0 <= t < len(self.stages):
                raise ValueError(f"tap point {t} out of range")
            if self.input_width % factors[t] or self.input_height % factors[t]:
                raise ValueError(
                    f"tap {t} downsample {factors[t]} does not divide input "
                    f"{self.input_width}x{self.input_height}"
                )

    @property
    def tap_depths(self) -> tuple:
        return tuple(self.stages[t].weight.shape[0] for t in self.tap_points)

    @property
    def hypercolumn_depth(self) -> int:
        return sum(self.tap_depths)

    @property
    def tap_layer_ids(self) -> tuple:
        return tuple(f"stage{t}" for t in self.tap_points)


def toy_backbone(seed: int = 0, input_size: int = 32, stage_depths=(8, 16, 32),
                 downsamples=(1, 2, 2), taps=None, in_channels: int = 3) -> Backbone:
    """Deterministic small backbone: seeded 3x3 convs, ReLU, optional 2x pools.

    Stands in for a large pretrained classifier at desk scale; every weight is
    fixed by ``seed``, so extraction is exactly reproducible.
    """
    if len(stage_depths) != len(downsamples):
        raise ValueError("stage_depths and downsamples must align")
    rng = np.random.default_rng(seed)
    stages = []
    cin = in_channels
    for depth, down in zip(stage_depths, downsamples):
        fan_in = cin * 9
        scale = math.sqrt(2.0 / fan_in)
        weight = rng.normal(0.0, scale, size=(depth, cin, 3, 3))
        bias = np.zeros(depth)
        stages.append(BackboneStage(weight, bias, "relu", int(down)))
        cin = depth
    if taps is None:
        taps = tuple(range(len(stages)))
    bid = f"toy-s{seed}-i{input_size}-d{'x'.join(map(str, stage_depths))}"
    return Backbone(bid, input_size, input_size, tuple(stages), tuple(taps))


def identity_backbone(input_size: int = 32, channels: int = 3) -> Backbone:
    """Single 1x1 identity stage with no downsampling: output equals input."""
    weight = np.eye(channels).reshape(channels, channels, 1, 1)
    stage = BackboneStage(weight, np.zeros(channels), "identity", 1)
    return Backbone(f"identity-{channels}", input_size, input_size, (stage,), (0,))


@dataclass(frozen=True)
class TileGrid:
    cols: int
    rows: int
    padded_w: int
    padded_h: int
    tile_count: int


def tile_grid(w: int, h: int, w_m: int, h_m: int) -> TileGrid:
    """Ceiling tiling of a w-by-h image into w_m-by-h_m tiles."""
    if min(w, h, w_m, h_m) < 1:
        raise ValueError("all extents must be positive")
    cols = -(-w // w_m)
    rows = -(-h // h_m)
    return TileGrid(cols, rows, w_m * cols, h_m * rows, cols * rows)


def stack_tiles(img: np.ndarray, grid: TileGrid) -> np.ndarray:
    """Cut a (C, padded_w, padded_h) image into a (T, C, w_m, h_m) tile stack.

    Tile index is row-major over (row, col): t = row * cols + col.
    """
    img = np.asarray(img)
    c, w, h = img.shape
    if (w, h) != (grid.padded_w, grid.padded_h):
        raise ValueError(f"image extents {(w, h)} do not match grid {(grid.padded_w, grid.padded_h)}")
    w_m = grid.padded_w // grid.cols
    h_m = grid.padded_h // grid.rows
    tiles = np.empty((grid.tile_count, c, w_m, h_m), dtype=img.dtype)
    for row in range(grid.rows):
        for col in range(grid.cols):
            tiles[row * grid.cols + col] = img[
                :, col * w_m : (col + 1) * w_m, row * h_m : (row + 1) * h_m
            ]
    return tiles


def reassemble_tiles(tiles: np.ndarray, grid: TileGrid) -> np.ndarray:
    """Exact inverse of :func:`stack_tiles` for any tile depth."""
    tiles = np.asarray(tiles)
    if tiles.shape[0] != grid.tile_count:
        raise ValueError(f"{tiles.shape[0]} tiles given, grid expects {grid.tile_count}")
    _, d, w_m, h_m = tiles.shape
    out = np.empty((d, w_m * grid.cols, h_m * grid.rows), dtype=tiles.dtype)
    for row in range(grid.rows):
        for col in range(grid.cols):
            out[:, col * w_m : (col + 1) * w_m, row * h_m : (row + 1) * h_m] = tiles[
                row * grid.cols + col
            ]
    return out


def _run_stage(x: np.ndarray, stage: BackboneStage) -> np.ndarray:
    k = stage.weight.shape[2]
    out = conv2d(x, stage.weight, stage.bias, dilation=1, pad=k // 2)
    if stage.activation == "relu":
        out = relu(out)
    for _ in range(stage.downsample.bit_length() - 1):
        out = avgpool2(out)
    return out


def backbone_tap_features(tile: np.ndarray, b: Backbone):
    """Run the backbone on one tile; return each tap output upsampled
    (nearest-neighbor) to the tile extents, one tensor per tap in tap order."""
    tile = np.asarray(tile, dtype=np.float64)
    if tile.shape[1:] != (b.input_width, b.input_height):
        raise ValueError(
            f"tile extents {tile.shape[1:]} do not match backbone input "
            f"{(b.input_width, b.input_height)}"
        )
    taps = []
    x = tile
    for idx, stage in enumerate(b.stages):
        x = _run_stage(x, stage)
        if idx in b.tap_points:
            taps.append(resize2d(x, b.input_width, b.input_height, method="nearest"))
    return taps


def backbone_hypercolumn(tile: np.ndarray, b: Backbone) -> np.ndarray:
    """Per-pixel hypercolumn: tap outputs upsampled and concatenated along depth."""
    return np.concatenate(backbone_tap_features(tile, b), axis=0)


def tessellate_extract(img: np.ndarray, b: Backbone, plan: CompressionPlan) -> FeatureStack:
    """Full native-resolution feature extraction for an arbitrary-size image.

    Resizes to the padded tile multiple (bilinear), stacks tiles, extracts and
    compresses per tile, reassembles, and resizes back. Both resizes are exact
    no-ops when the extents already match, so an exact-fit image reduces to
    hypercolumn extraction plus compression. Deterministic: tiles are
    independent and reassembled by index.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or min(img.shape) < 1:
        raise ValueError("expected a nonempty (C, w, h) image")
    c, w, h = img.shape
    grid = tile_grid(w, h, b.input_width, b.input_height)
    padded = resize2d(img, grid.padded_w, grid.padded_h, method="bilinear")
    tiles = stack_tiles(padded, grid)
    cores = np.empty(
        (grid.tile_count, plan.total_compressed_depth, b.input_width, b.input_height)
    )
    for t in range(grid.tile_count):
        taps = backbone_tap_features(tiles[t], b)
        stack, _ = compress_stack(taps, plan, provenance=(b.backbone_id, plan.plan_id))
        cores[t] = stack.features
    assembled = reassemble_tiles(cores, grid)
    native = resize2d(assembled, w, h, method="bilinear")
    return FeatureStack(native, plan.total_compressed_depth, (b.backbone_id, plan.plan_id))


def save_backbone(dirpath, b: Backbone) -> None:
    """Persist weights in tensor containers plus a JSON manifest."""
    os.makedirs(dirpath, exist_ok=True)
    manifest = {
        "backbone_id": b.backbone_id,
        "input_width": b.input_width,
        "input_height": b.input_height,
        "tap_points": list(b.tap_points),
        "stages": [],
    }
    for i, stage in enumerate(b.stages):
        save_tensor(os.path.join(dirpath, f"stage{i}_weight.hseg"), stage.weight)
        save_tensor(os.path.join(dirpath, f"stage{i}_bias.hseg"), stage.bias)
        manifest["stages"].append({"activation": stage.activation, "downsample": stage.downsample})
    with open(os.path.join(dirpath, "backbone.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)


def load_backbone(dirpath) -> Backbone:
    with open(os.path.join(dirpath, "backbone.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    stages = []
    for i, meta in enumerate(manifest["stages"]):
        weight = load_tensor(os.path.join(dirpath, f"stage{i}_weight.hseg"))
        bias = load_tensor(os.path.join(dirpath, f"stage{i}_bias.hseg"))
        stages.append(BackboneStage(weight, bias, meta["activation"], int(meta["downsample"])))
    return Backbone(
        manifest["backbone_id"],
        int(manifest["input_width"]),
        int(manifest["input_height"]),
        tuple(stages),
        tuple(manifest["tap_points"]),
    )
