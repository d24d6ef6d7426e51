#pragma once

#include <vector>

#include "qm/ss2d.hpp"
#include "qm/tensor.hpp"

namespace qm {

enum class UpsampleMode : int { Nearest = 0, Bilinear = 1, Bicubic = 2 };

enum class SkipPolicy : int {
  ExcludeFirstLayer = 0,      // stage-1 blocks are never pruned
  ExcludeFirstTwoBlocks = 1,  // first two blocks in network order are never pruned
};

struct QuarterMapConfig {
  int k = 3;  // prune every k-th eligible block
  int m = 2;  // pruning interval along each spatial axis
  int n = 1;  // retained count per interval, 1 <= n <= m
  UpsampleMode upsample = UpsampleMode::Nearest;
  SkipPolicy skip_policy = SkipPolicy::ExcludeFirstLayer;

  void validate() const;
};

// Ascending kept indices along one axis: partition [0, extent) into
// consecutive m-blocks (last may be partial) and keep the first
// min(n, block size) of each. For n=1 the count is exactly
// ceil(extent / m).
std::vector<int> retained_indices(int extent, int m, int n);

// Restrict x to the Cartesian product of retained row and column indices.
// Pure gather; channels untouched.
FeatureMap prune(const FeatureMap& x, int m, int n);

// out(i,j,c) = y(floor(i*y.h/target_h), floor(j*y.w/target_w), c).
// Exact integer floor map, no arithmetic on values.
FeatureMap upsample_nearest(const FeatureMap& y, int target_h, int target_w);

// Half-pixel convention: src = (dst + 0.5) * src/dst - 0.5, clamped.
// Bilinear over the 2x2 neighborhood.
FeatureMap upsample_bilinear(const FeatureMap& y, int target_h, int target_w);

// Same coordinates, Keys cubic kernel (a = -0.5) over the 4x4 neighborhood.
FeatureMap upsample_bicubic(const FeatureMap& y, int target_h, int target_w);

FeatureMap upsample(const FeatureMap& y, int target_h, int target_w,
                    UpsampleMode mode);

// Whether the block at (layer_idx, block_in_layer) with 0-based global
// index gets pruned. layer_idx is 1-based. first_layer_depth is the block
// count of layer 1, needed to rank eligible blocks under ExcludeFirstLayer.
bool should_prune(int global_block_idx, int layer_idx, int block_in_layer,
                  int first_layer_depth, const QuarterMapConfig& cfg);

// prune -> ss2d_forward on the smaller map -> upsample back to (x.h, x.w).
// Output shape equals input shape. Prune and upsample time goes to
// prof->prune_upsample_ms.
FeatureMap quartermap_ss2d(const FeatureMap& x, const Ss2dParams& p,
                           const QuarterMapConfig& cfg,
                           BlockProfile* prof = nullptr);

}  // namespace qm
