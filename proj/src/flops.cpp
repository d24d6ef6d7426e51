#include "qm/flops.hpp"

namespace qm {

FlopCounts scan_direction_flops(std::uint64_t len, std::uint64_t d,
                                std::uint64_t n_state) {
  FlopCounts f;
  f.scan = len * d * n_state * kScanFlopsPerElement;
  f.projections = len * d * n_state * kProjFlopsPerElement;
  f.delta_path = len * d * kDeltaFlopsPerChannelStep;
  return f;
}

FlopCounts ss2d_block_flops(std::uint64_t h, std::uint64_t w, std::uint64_t d,
                            std::uint64_t n_state) {
  FlopCounts f;
  const FlopCounts one = scan_direction_flops(h * w, d, n_state);
  for (int k = 0; k < 4; ++k) f += one;
  f.merge = h * w * d * kMergeFlopsPerElement;
  return f;
}

std::uint64_t linear_flops(std::uint64_t positions, std::uint64_t in_dim,
                           std::uint64_t out_dim) {
  return positions * 2 * in_dim * out_dim;
}

}  // namespace qm
