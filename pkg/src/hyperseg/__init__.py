"""hyperseg: interactive video segmentation at native resolution.

Depth-compressed hypercolumn features, convolutional tessellation for
arbitrary image sizes, a full-resolution dilated segmentation network with
context-aware skip connections, the composite training loss, desk-scale
training utilities, and an interactive click-driven session service.
"""

from .clicks import (
    ClickState,
    distance_map,
    exact_edt,
    normalized_distance_map,
    rasterize_clicks,
    simulate_clicks,
)
from .features import (
    Backbone,
    TileGrid,
    backbone_hypercolumn,
    identity_backbone,
    load_backbone,
    reassemble_tiles,
    save_backbone,
    stack_tiles,
    tessellate_extract,
    tile_grid,
    toy_backbone,
)
from .losses import (
    Contour,
    LossBreakdown,
    boundary_phl,
    diversity_weights,
    extract_boundary,
    interactive_context_loss,
    jaccard_loss,
    mbiou,
    metric_report,
    miou,
    total_loss,
)
from .network import (
    ContextBundle,
    NetConfig,
    NetworkParams,
    SegmentationProposals,
    TrainingExample,
    batch_loss,
    desk_config,
    forward,
    gradients,
    init_params,
    load_checkpoint,
    paper_scale_config,
    rank_heads,
    save_checkpoint,
)
from .tensors import (
    SvdResult,
    fold,
    load_tensor,
    resize2d,
    save_tensor,
    truncated_svd,
    unfold,
)
from .tucker import (
    CompressionPlan,
    DepthFactor,
    FeatureStack,
    apply_factor,
    compress_stack,
    depth_tucker,
    fit_depth_factor,
    halving_plan,
    reconstruct,
)

__version__ = "0.1.0"
