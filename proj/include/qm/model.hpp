#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "qm/flops.hpp"
#include "qm/quartermap.hpp"
#include "qm/ss2d.hpp"
#include "qm/tensor.hpp"

namespace qm {

inline constexpr int kNumStages = 4;

struct ModelConfig {
  std::array<int, kNumStages> depths{2, 2, 8, 2};
  int base_dim = 96;   // channel dim of stage 1, doubles per stage
  int patch = 4;       // patch edge for the stem
  int input_hw = 128;  // square input resolution, divisible by patch*8
  int n_state = 16;
  std::uint64_t seed = 0;

  void validate() const;
  // Stage index is 1-based to match layer numbering everywhere else.
  int stage_extent(int stage) const { return input_hw / (patch << (stage - 1)); }
  int stage_dim(int stage) const { return base_dim << (stage - 1); }
  int total_blocks() const {
    return depths[0] + depths[1] + depths[2] + depths[3];
  }
};

// tiny [2,2,8,2] dim 96, small [2,2,15,2] dim 96, base [2,2,15,2] dim 128,
// micro [1,1,1,1] dim 8 for fast property tests.
ModelConfig preset(const std::string& name);

// Dense projection, weight row-major (out x in), no bias.
struct LinearLayer {
  int in = 0;
  int out = 0;
  std::vector<float> weight;
};

struct Model {
  ModelConfig cfg;
  LinearLayer patch_embed;                          // patch^2*3 -> D1
  std::array<LinearLayer, kNumStages - 1> downsample;  // 4*D_s -> 2*D_s
  std::vector<Ss2dParams> blocks;                   // network order
};

Model build_model(const ModelConfig& cfg);

struct StageStats {
  double scan_kernel_ms = 0.0;
  double prune_upsample_ms = 0.0;
  double crossscan_merge_ms = 0.0;
  FlopCounts flops;
  std::vector<int> block_seq_len;  // scanned length per block in this stage
};

struct StageReport {
  std::array<StageStats, kNumStages> stages;
  double total_ms = 0.0;
  double images_per_second = 0.0;

  double scan_kernel_ms() const;
  double prune_upsample_ms() const;
  double crossscan_merge_ms() const;
  // Unattributed remainder of total_ms, clamped at zero.
  double other_ms() const;
  FlopCounts total_flops() const;
};

struct ForwardOptions {
  // 0 = prune wherever should_prune says; 1..4 = restrict pruning to that
  // stage (per-layer ablation).
  int prune_only_layer = 0;
  // Batch items processed in parallel when > 1; outputs are identical to
  // the single-threaded run.
  int threads = 1;
};

// Full pipeline: patch embed, 4 stages of residual SS2D blocks with
// QuarterMap applied to selected blocks, downsample between stages.
// qm == nullptr disables pruning entirely. report may be null.
std::vector<FeatureMap> forward(const Model& model,
                                const std::vector<FeatureMap>& batch,
                                const QuarterMapConfig* qm,
                                StageReport* report = nullptr,
                                const ForwardOptions& opts = {});

// Analytic per-stage flop table for one image. Patch embed counts toward
// stage 1; the downsample after stage s counts toward stage s. Mirrors
// exactly the per-block accounting forward() reports.
std::array<FlopCounts, kNumStages> flop_count(const ModelConfig& cfg,
                                              const QuarterMapConfig* qm,
                                              int prune_only_layer = 0);

// One .qmap fixture per parameter array plus manifest.json listing names
// and shapes, written into dir (created if missing).
void export_weights(const Model& model, const std::string& dir);

}  // namespace qm
