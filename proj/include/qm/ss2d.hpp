#pragma once

#include <array>
#include <cstdint>

#include "qm/ssm.hpp"
#include "qm/tensor.hpp"

namespace qm {

// Traversal orders for unfolding an H x W map into 1D sequences.
enum class ScanDirection : int {
  RowForward = 0,   // row-major, top-left to bottom-right
  RowBackward = 1,  // reverse of RowForward
  ColForward = 2,   // column-major, top-left to bottom-right
  ColBackward = 3,  // reverse of ColForward
};

inline constexpr int kNumDirections = 4;

// Unfold x into the four directional sequences, each of length h*w with d
// channels. Pure index permutation, no arithmetic.
std::array<Sequence, kNumDirections> cross_scan(const FeatureMap& x);

// Fold four directional sequences back onto the grid and sum the four
// contributions per element as (s0 + s1) + (s2 + s3). With equal inputs the
// sum is exactly 4x in float.
FeatureMap cross_merge(const std::array<Sequence, kNumDirections>& seqs,
                       int h, int w);

// Four independent per-direction scan parameter sets over the same channel
// width.
struct Ss2dParams {
  int d = 0;
  int n_state = 0;
  std::array<SsmBlockParams, kNumDirections> dir;

  void validate() const;
};

Ss2dParams make_seeded_ss2d(int d, int n_state, std::uint64_t seed);

// Wall-clock attribution for one block application, milliseconds.
struct BlockProfile {
  double scan_ms = 0.0;
  double crossscan_merge_ms = 0.0;
  double prune_upsample_ms = 0.0;
};

// Unfold, run one selective scan per direction, fold and sum. Output shape
// equals input shape. When prof is non-null the kernel and permutation
// times are accumulated into it.
FeatureMap ss2d_forward(const FeatureMap& x, const Ss2dParams& p,
                        BlockProfile* prof = nullptr);

}  // namespace qm
