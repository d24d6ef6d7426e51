"""Selective-scan, SS2D and QuarterMap kernels with numpy interfaces."""

from quartermap._core import (
    cross_merge,
    cross_scan,
    forward_features,
    prune,
    quartermap_ss2d,
    retained_indices,
    run_validation,
    selective_scan,
    should_prune,
    softplus,
    ss2d_forward,
    upsample,
    zoh_discretize,
)

__all__ = [
    "cross_merge",
    "cross_scan",
    "forward_features",
    "prune",
    "quartermap_ss2d",
    "retained_indices",
    "run_validation",
    "selective_scan",
    "should_prune",
    "softplus",
    "ss2d_forward",
    "upsample",
    "zoh_discretize",
]
