"""Dual-backbone fusion detector blocks and detection evaluation tooling."""

from ._core import (
    Annotation,
    BBox,
    CBAMParams,
    ChannelAttentionParams,
    Detection,
    Model,
    NetworkConfig,
    SizeCategory,
    SpatialAttentionParams,
    alarm_curve,
    broadcast_mul,
    categorize,
    cbam_forward,
    channel_attention,
    channel_pool,
    compensate,
    compensate_all,
    concat_channels,
    confidence_filter,
    conv2d,
    decode_head,
    default_categories,
    default_window_sizes,
    evaluate,
    fused_concat_attention,
    full_forward,
    global_pool,
    iou,
    containment,
    nms,
    parse_labels,
    parse_predictions,
    pool2d,
    seg_branch_forward,
    sigmoid,
    silu,
    spatial_attention,
    square_crop,
    upsample_nearest,
    window_fnr,
    write_labels,
    write_predictions,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
