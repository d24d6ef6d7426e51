#include "qm/model.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace qm {

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t tag) {
  SeededRng r(seed + 0x9E3779B97F4A7C15ULL * (tag + 1));
  return r.next_u64();
}

LinearLayer make_linear(int in, int out, std::uint64_t seed) {
  LinearLayer l;
  l.in = in;
  l.out = out;
  l.weight.resize(static_cast<std::size_t>(in) * out);
  SeededRng rng(seed);
  const float scale = 1.0f / std::sqrt(static_cast<float>(in));
  for (float& v : l.weight) v = scale * rng.next_symmetric();
  return l;
}

// matvec y = W u with W row-major (out x in), double accumulation.
void apply_linear(const LinearLayer& l, const float* u, float* y) {
  for (int o = 0; o < l.out; ++o) {
    const float* w = l.weight.data() + static_cast<std::size_t>(o) * l.in;
    double acc = 0.0;
    for (int i = 0; i < l.in; ++i) acc += static_cast<double>(w[i]) * u[i];
    y[o] = static_cast<float>(acc);
  }
}

FeatureMap patch_embed_apply(const Model& model, const FeatureMap& x) {
  const int patch = model.cfg.patch;
  const int ext = model.cfg.input_hw / patch;
  const int d1 = model.cfg.base_dim;
  FeatureMap out(ext, ext, d1);
  std::vector<float> cell(static_cast<std::size_t>(patch) * patch * 3);
  for (int i = 0; i < ext; ++i) {
    for (int j = 0; j < ext; ++j) {
      std::size_t k = 0;
      for (int pi = 0; pi < patch; ++pi) {
        const float* row = x.channel_ptr(i * patch + pi, j * patch);
        for (int pj = 0; pj < patch * 3; ++pj) cell[k++] = row[pj];
      }
      apply_linear(model.patch_embed, cell.data(), out.channel_ptr(i, j));
    }
  }
  return out;
}

FeatureMap downsample_apply(const LinearLayer& l, const FeatureMap& x) {
  const int ext = x.h / 2;
  const int d = x.d;
  FeatureMap out(ext, ext, 2 * d);
  std::vector<float> cell(static_cast<std::size_t>(4) * d);
  for (int i = 0; i < ext; ++i) {
    for (int j = 0; j < ext; ++j) {
      std::memcpy(cell.data(), x.channel_ptr(2 * i, 2 * j),
                  sizeof(float) * d);
      std::memcpy(cell.data() + d, x.channel_ptr(2 * i, 2 * j + 1),
                  sizeof(float) * d);
      std::memcpy(cell.data() + 2 * d, x.channel_ptr(2 * i + 1, 2 * j),
                  sizeof(float) * d);
      std::memcpy(cell.data() + 3 * d, x.channel_ptr(2 * i + 1, 2 * j + 1),
                  sizeof(float) * d);
      apply_linear(l, cell.data(), out.channel_ptr(i, j));
    }
  }
  return out;
}

void residual_add(FeatureMap& x, const FeatureMap& y) {
  for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += y.data[i];
}

// Static per-block execution plan shared by forward() and flop_count().
struct BlockPlan {
  int stage = 1;  // 1-based
  int extent = 0;
  int dim = 0;
  bool pruned = false;
  int scan_h = 0;
  int scan_w = 0;
};

std::vector<BlockPlan> plan_blocks(const ModelConfig& cfg,
                                   const QuarterMapConfig* qm,
                                   int prune_only_layer) {
  std::vector<BlockPlan> plan;
  plan.reserve(cfg.total_blocks());
  int g = 0;
  for (int stage = 1; stage <= kNumStages; ++stage) {
    const int ext = cfg.stage_extent(stage);
    const int dim = cfg.stage_dim(stage);
    for (int b = 0; b < cfg.depths[stage - 1]; ++b, ++g) {
      BlockPlan bp;
      bp.stage = stage;
      bp.extent = ext;
      bp.dim = dim;
      bp.pruned = qm != nullptr &&
                  (prune_only_layer == 0 || prune_only_layer == stage) &&
                  should_prune(g, stage, b, cfg.depths[0], *qm);
      if (bp.pruned) {
        const int kept =
            static_cast<int>(retained_indices(ext, qm->m, qm->n).size());
        bp.scan_h = kept;
        bp.scan_w = kept;  // square grid
      } else {
        bp.scan_h = ext;
        bp.scan_w = ext;
      }
      plan.push_back(bp);
    }
  }
  return plan;
}

FlopCounts block_flops(const BlockPlan& bp, const QuarterMapConfig* qm,
                       int n_state) {
  FlopCounts f = ss2d_block_flops(bp.scan_h, bp.scan_w, bp.dim, n_state);
  const std::uint64_t full =
      static_cast<std::uint64_t>(bp.extent) * bp.extent * bp.dim;
  if (bp.pruned) {
    switch (qm->upsample) {
      case UpsampleMode::Nearest:
        break;  // gather only
      case UpsampleMode::Bilinear:
        f.upsample += full * kBilinearFlopsPerElement;
        break;
      case UpsampleMode::Bicubic:
        f.upsample += full * kBicubicFlopsPerElement;
        break;
    }
  }
  f.residual += full;
  return f;
}

FeatureMap forward_one(const Model& model, const FeatureMap& x,
                       const std::vector<BlockPlan>& plan,
                       const QuarterMapConfig* qm,
                       std::array<StageStats, kNumStages>& stats) {
  FeatureMap cur = patch_embed_apply(model, x);
  int g = 0;
  for (int stage = 1; stage <= kNumStages; ++stage) {
    StageStats& st = stats[stage - 1];
    for (int b = 0; b < model.cfg.depths[stage - 1]; ++b, ++g) {
      BlockProfile prof;
      FeatureMap y =
          plan[g].pruned
              ? quartermap_ss2d(cur, model.blocks[g], *qm, &prof)
              : ss2d_forward(cur, model.blocks[g], &prof);
      residual_add(cur, y);
      st.scan_kernel_ms += prof.scan_ms;
      st.prune_upsample_ms += prof.prune_upsample_ms;
      st.crossscan_merge_ms += prof.crossscan_merge_ms;
    }
    if (stage < kNumStages) {
      cur = downsample_apply(model.downsample[stage - 1], cur);
    }
  }
  return cur;
}

}  // namespace

void ModelConfig::validate() const {
  for (int d : depths) {
    if (d < 1) {
      throw std::invalid_argument("ModelConfig: all depths must be >= 1");
    }
  }
  if (base_dim < 1 || patch < 1 || input_hw < 1 || n_state < 1) {
    throw std::invalid_argument(
        "ModelConfig: base_dim, patch, input_hw, n_state must be >= 1");
  }
  const int factor = patch * 8;
  if (input_hw % factor != 0) {
    throw std::invalid_argument(
        "ModelConfig: input_hw=" + std::to_string(input_hw) +
        " must be divisible by patch*8=" + std::to_string(factor) +
        " (three 2x downsamples after the " + std::to_string(patch) +
        "px patch stem)");
  }
}

ModelConfig preset(const std::string& name) {
  ModelConfig cfg;
  if (name == "tiny") {
    cfg.depths = {2, 2, 8, 2};
    cfg.base_dim = 96;
  } else if (name == "small") {
    cfg.depths = {2, 2, 15, 2};
    cfg.base_dim = 96;
  } else if (name == "base") {
    cfg.depths = {2, 2, 15, 2};
    cfg.base_dim = 128;
  } else if (name == "micro") {
    cfg.depths = {1, 1, 1, 1};
    cfg.base_dim = 8;
    cfg.input_hw = 64;
    cfg.n_state = 8;
  } else {
    throw std::invalid_argument("preset: unknown model '" + name +
                                "' (expected tiny, small, base, micro)");
  }
  return cfg;
}

Model build_model(const ModelConfig& cfg) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  m.patch_embed =
      make_linear(cfg.patch * cfg.patch * 3, cfg.base_dim, sub_seed(cfg.seed, 1));
  for (int s = 1; s < kNumStages; ++s) {
    const int d = cfg.stage_dim(s);
    m.downsample[s - 1] = make_linear(4 * d, 2 * d, sub_seed(cfg.seed, 1 + s));
  }
  m.blocks.reserve(cfg.total_blocks());
  int g = 0;
  for (int stage = 1; stage <= kNumStages; ++stage) {
    for (int b = 0; b < cfg.depths[stage - 1]; ++b, ++g) {
      m.blocks.push_back(make_seeded_ss2d(cfg.stage_dim(stage), cfg.n_state,
                                          sub_seed(cfg.seed, 16 + g)));
    }
  }
  return m;
}

double StageReport::scan_kernel_ms() const {
  double s = 0.0;
  for (const auto& st : stages) s += st.scan_kernel_ms;
  return s;
}

double StageReport::prune_upsample_ms() const {
  double s = 0.0;
  for (const auto& st : stages) s += st.prune_upsample_ms;
  return s;
}

double StageReport::crossscan_merge_ms() const {
  double s = 0.0;
  for (const auto& st : stages) s += st.crossscan_merge_ms;
  return s;
}

double StageReport::other_ms() const {
  const double rest =
      total_ms - scan_kernel_ms() - prune_upsample_ms() - crossscan_merge_ms();
  return rest > 0.0 ? rest : 0.0;
}

FlopCounts StageReport::total_flops() const {
  FlopCounts f;
  for (const auto& st : stages) f += st.flops;
  return f;
}

std::vector<FeatureMap> forward(const Model& model,
                                const std::vector<FeatureMap>& batch,
                                const QuarterMapConfig* qm,
                                StageReport* report,
                                const ForwardOptions& opts) {
  const ModelConfig& cfg = model.cfg;
  cfg.validate();
  if (qm != nullptr) qm->validate();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const FeatureMap& x = batch[i];
    if (x.h != cfg.input_hw || x.w != cfg.input_hw || x.d != 3) {
      throw std::invalid_argument(
          "forward: batch item " + std::to_string(i) + " has shape " +
          std::to_string(x.h) + "x" + std::to_string(x.w) + "x" +
          std::to_string(x.d) + ", expected " + std::to_string(cfg.input_hw) +
          "x" + std::to_string(cfg.input_hw) + "x3");
    }
  }
  const std::vector<BlockPlan> plan =
      plan_blocks(cfg, qm, opts.prune_only_layer);

  StageReport local;
  for (const BlockPlan& bp : plan) {
    StageStats& st = local.stages[bp.stage - 1];
    st.flops += block_flops(bp, qm, cfg.n_state);
    st.block_seq_len.push_back(bp.scan_h * bp.scan_w);
  }
  {
    const int ext1 = cfg.stage_extent(1);
    local.stages[0].flops.linear += linear_flops(
        static_cast<std::uint64_t>(ext1) * ext1, cfg.patch * cfg.patch * 3,
        cfg.base_dim);
    for (int s = 1; s < kNumStages; ++s) {
      const int ext = cfg.stage_extent(s + 1);
      local.stages[s - 1].flops.linear +=
          linear_flops(static_cast<std::uint64_t>(ext) * ext,
                       4 * cfg.stage_dim(s), 2 * cfg.stage_dim(s));
    }
  }

  std::vector<FeatureMap> outs(batch.size());
  const int threads =
      std::max(1, std::min<int>(opts.threads, static_cast<int>(batch.size())));
  const auto t0 = Clock::now();
  if (threads <= 1) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      outs[i] = forward_one(model, batch[i], plan, qm, local.stages);
    }
  } else {
    std::vector<std::array<StageStats, kNumStages>> per_thread(
        threads, std::array<StageStats, kNumStages>{});
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = next.fetch_add(1); i < batch.size();
             i = next.fetch_add(1)) {
          outs[i] = forward_one(model, batch[i], plan, qm, per_thread[t]);
        }
      });
    }
    for (auto& th : pool) th.join();
    for (const auto& stats : per_thread) {
      for (int s = 0; s < kNumStages; ++s) {
        local.stages[s].scan_kernel_ms += stats[s].scan_kernel_ms;
        local.stages[s].prune_upsample_ms += stats[s].prune_upsample_ms;
        local.stages[s].crossscan_merge_ms += stats[s].crossscan_merge_ms;
      }
    }
  }
  local.total_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0)
                       .count();
  local.images_per_second =
      local.total_ms > 0.0
          ? static_cast<double>(batch.size()) / (local.total_ms / 1000.0)
          : 0.0;
  if (report != nullptr) *report = std::move(local);
  return outs;
}

std::array<FlopCounts, kNumStages> flop_count(const ModelConfig& cfg,
                                              const QuarterMapConfig* qm,
                                              int prune_only_layer) {
  cfg.validate();
  if (qm != nullptr) qm->validate();
  std::array<FlopCounts, kNumStages> table{};
  for (const BlockPlan& bp : plan_blocks(cfg, qm, prune_only_layer)) {
    table[bp.stage - 1] += block_flops(bp, qm, cfg.n_state);
  }
  const int ext1 = cfg.stage_extent(1);
  table[0].linear += linear_flops(static_cast<std::uint64_t>(ext1) * ext1,
                                  cfg.patch * cfg.patch * 3, cfg.base_dim);
  for (int s = 1; s < kNumStages; ++s) {
    const int ext = cfg.stage_extent(s + 1);
    table[s - 1].linear +=
        linear_flops(static_cast<std::uint64_t>(ext) * ext,
                     4 * cfg.stage_dim(s), 2 * cfg.stage_dim(s));
  }
  return table;
}

namespace {

FeatureMap as_map(const std::vector<float>& v, int h, int w) {
  FeatureMap m(h, w, 1);
  m.data = v;
  return m;
}

}  // namespace

void export_weights(const Model& model, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest = nlohmann::json::object();
  auto emit = [&](const std::string& name, const std::vector<float>& v, int h,
                  int w) {
    const std::string file = name + ".qmap";
    write_qmap((fs::path(dir) / file).string(), as_map(v, h, w));
    manifest[name] = {{"file", file}, {"shape", {h, w}}};
  };
  emit("patch_embed.weight", model.patch_embed.weight, model.patch_embed.out,
       model.patch_embed.in);
  for (int s = 0; s < kNumStages - 1; ++s) {
    emit("downsample." + std::to_string(s) + ".weight",
         model.downsample[s].weight, model.downsample[s].out,
         model.downsample[s].in);
  }
  for (std::size_t g = 0; g < model.blocks.size(); ++g) {
    const Ss2dParams& blk = model.blocks[g];
    for (int k = 0; k < kNumDirections; ++k) {
      const SsmBlockParams& p = blk.dir[k];
      const std::string base =
          "blocks." + std::to_string(g) + ".dir." + std::to_string(k) + ".";
      emit(base + "a_log", p.a_log, p.d, p.n_state);
      emit(base + "w_b", p.w_b, p.n_state, p.d);
      emit(base + "w_c", p.w_c, p.n_state, p.d);
      emit(base + "w_delta", p.w_delta, p.d, 1);
      emit(base + "delta_bias", p.delta_bias, p.d, 1);
      emit(base + "d_skip", p.d_skip, p.d, 1);
    }
  }
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) {
    throw std::runtime_error("export_weights: cannot write manifest in " +
                             dir);
  }
  out << manifest.dump(2) << "\n";
}

}  // namespace qm
