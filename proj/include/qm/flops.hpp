#pragma once

#include <cstdint>

namespace qm {

// Analytic flop model. Every term is linear in the number of positions
// fed through it, so halving a sequence halves its cost exactly in
// integer arithmetic.
//
// Per-element constants (documented, used consistently everywhere):
//   scan        9 flops per (step, channel, state): discretize + state
//               update + output accumulation
//   projections 4 flops per (step, channel, state): b and c matvecs,
//               multiply + add each
//   delta path  4 flops per (step, channel): w_delta matvec + bias +
//               softplus
//   merge       3 adds per (position, channel): pairwise 4-way sum
//   residual    1 add per (position, channel)
//   linear      2 flops per (in, out) pair per position
//   upsample    nearest 0 (gather), bilinear 8, bicubic 32 per output
//               element
inline constexpr std::uint64_t kScanFlopsPerElement = 9;
inline constexpr std::uint64_t kProjFlopsPerElement = 4;
inline constexpr std::uint64_t kDeltaFlopsPerChannelStep = 4;
inline constexpr std::uint64_t kMergeFlopsPerElement = 3;
inline constexpr std::uint64_t kBilinearFlopsPerElement = 8;
inline constexpr std::uint64_t kBicubicFlopsPerElement = 32;

struct FlopCounts {
  std::uint64_t scan = 0;
  std::uint64_t projections = 0;
  std::uint64_t delta_path = 0;
  std::uint64_t merge = 0;
  std::uint64_t residual = 0;
  std::uint64_t linear = 0;
  std::uint64_t upsample = 0;

  std::uint64_t total() const {
    return scan + projections + delta_path + merge + residual + linear +
           upsample;
  }
  // Everything whose cost scales with scanned sequence length.
  std::uint64_t scan_path() const { return scan + projections + delta_path; }

  FlopCounts& operator+=(const FlopCounts& o) {
    scan += o.scan;
    projections += o.projections;
    delta_path += o.delta_path;
    merge += o.merge;
    residual += o.residual;
    linear += o.linear;
    upsample += o.upsample;
    return *this;
  }
};

// One scan direction over a length-L sequence of D channels, N states.
FlopCounts scan_direction_flops(std::uint64_t len, std::uint64_t d,
                                std::uint64_t n_state);

// Four directions plus the 4-way merge over an h x w x d map.
FlopCounts ss2d_block_flops(std::uint64_t h, std::uint64_t w, std::uint64_t d,
                            std::uint64_t n_state);

// Dense layer applied at `positions` sites: positions * 2 * in * out.
std::uint64_t linear_flops(std::uint64_t positions, std::uint64_t in_dim,
                           std::uint64_t out_dim);

}  // namespace qm
