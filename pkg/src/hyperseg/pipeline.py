"""End-to-end segmentation bundle: backbone + compression plan + network.

A Pipeline owns everything needed to turn (current frame, previous frame,
clicks) into ranked segmentation proposals, and round-trips through a
checkpoint directory: network manifest and layer tensors, backbone weights,
and the compression plan.
"""

from __future__ import annotations

from dataclasses import dataclass
import os

import numpy as np

from .clicks import ClickState
from .features import Backbone, load_backbone, save_backbone, tessellate_extract
from .network import (
    ContextBundle,
    NetworkParams,
    SegmentationProposals,
    forward,
    load_checkpoint,
    save_checkpoint,
)
from .tucker import CompressionPlan, FeatureStack


@dataclass(frozen=True)
class Pipeline:
    params: NetworkParams
    backbone: Backbone
    plan: CompressionPlan

    def __post_init__(self):
        if self.plan.total_compressed_depth != self.params.config.feature_depth:
            raise ValueError(
                f"plan depth {self.plan.total_compressed_depth} does not match "
                f"network feature depth {self.params.config.feature_depth}"
            )

    @property
    def num_heads(self) -> int:
        return self.params.config.num_heads

    def extract(self, frame: np.ndarray) -> FeatureStack:
        """Native-resolution compressed features for one frame (the expensive
        step; cache the result per frame)."""
        return tessellate_extract(frame, self.backbone, self.plan)

    def segment(self, frame_curr: np.ndarray, frame_prev: np.ndarray,
                clicks: ClickState, features: FeatureStack = None) -> SegmentationProposals:
        if features is None:
            features = self.extract(frame_curr)
        ctx = ContextBundle(frame_curr=frame_curr, frame_prev=frame_prev, clicks=clicks)
        return forward(ctx, features, self.params)

    def save(self, dirpath) -> None:
        extra = {"plan": [list(p) for p in self.plan.per_layer_ranks]}
        save_checkpoint(dirpath, self.params, extra=extra)
        save_backbone(os.path.join(dirpath, "backbone"), self.backbone)

    @classmethod
    def from_checkpoint(cls, dirpath) -> "Pipeline":
        params, manifest = load_checkpoint(dirpath)
        backbone = load_backbone(os.path.join(dirpath, "backbone"))
        plan = CompressionPlan(tuple((layer, rank) for layer, rank in manifest["plan"]))
        return cls(params, backbone, plan)
