#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "qm/flops.hpp"
#include "qm/model.hpp"
#include "qm/quartermap.hpp"
#include "qm/tensor.hpp"

using qm::FeatureMap;
using qm::FlopCounts;
using qm::Model;
using qm::ModelConfig;
using qm::QuarterMapConfig;

namespace {

std::vector<FeatureMap> make_batch(int count, int hw, std::uint64_t seed) {
  std::vector<FeatureMap> batch;
  for (int i = 0; i < count; ++i) {
    batch.push_back(qm::fill_seeded(hw, hw, 3, seed + i));
  }
  return batch;
}

}  // namespace

TEST_CASE("preset configurations") {
  const ModelConfig tiny = qm::preset("tiny");
  CHECK(tiny.depths == std::array<int, 4>{2, 2, 8, 2});
  CHECK(tiny.base_dim == 96);
  const ModelConfig small = qm::preset("small");
  CHECK(small.depths == std::array<int, 4>{2, 2, 15, 2});
  CHECK(small.base_dim == 96);
  const ModelConfig base = qm::preset("base");
  CHECK(base.depths == std::array<int, 4>{2, 2, 15, 2});
  CHECK(base.base_dim == 128);
  const ModelConfig micro = qm::preset("micro");
  CHECK(micro.depths == std::array<int, 4>{1, 1, 1, 1});
  CHECK(micro.base_dim == 8);
  CHECK(micro.input_hw == 64);
  CHECK_THROWS_AS((void)qm::preset("huge"), std::invalid_argument);
}

TEST_CASE("stage extents and dims follow the L/4, 2D law") {
  ModelConfig cfg = qm::preset("tiny");  // input 128, patch 4
  CHECK(cfg.stage_extent(1) == 32);
  CHECK(cfg.stage_extent(2) == 16);
  CHECK(cfg.stage_extent(3) == 8);
  CHECK(cfg.stage_extent(4) == 4);
  CHECK(cfg.stage_dim(1) == 96);
  CHECK(cfg.stage_dim(2) == 192);
  CHECK(cfg.stage_dim(3) == 384);
  CHECK(cfg.stage_dim(4) == 768);
  for (int s = 1; s < 4; ++s) {
    CHECK(cfg.stage_extent(s) * cfg.stage_extent(s) ==
          4 * cfg.stage_extent(s + 1) * cfg.stage_extent(s + 1));
    CHECK(cfg.stage_dim(s + 1) == 2 * cfg.stage_dim(s));
  }
}

TEST_CASE("config validation rejects bad geometry") {
  ModelConfig cfg = qm::preset("micro");
  cfg.input_hw = 60;  // not divisible by patch * 8 = 32
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = qm::preset("micro");
  cfg.depths[2] = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = qm::preset("micro");
  cfg.n_state = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("micro forward produces the expected final grid") {
  const Model model = qm::build_model(qm::preset("micro"));
  const auto out = qm::forward(model, make_batch(2, 64, 3), nullptr);
  REQUIRE(out.size() == 2);
  for (const FeatureMap& y : out) {
    CHECK(y.h == 2);  // 64 / (4 * 8)
    CHECK(y.w == 2);
    CHECK(y.d == 64);  // 8 * 2^3
    CHECK(y.all_finite());
  }
}

TEST_CASE("tiny forward final shape at 128") {
  const Model model = qm::build_model(qm::preset("tiny"));
  const auto out = qm::forward(model, make_batch(1, 128, 5), nullptr);
  REQUIRE(out.size() == 1);
  CHECK(out[0].h == 4);
  CHECK(out[0].w == 4);
  CHECK(out[0].d == 768);
  CHECK(out[0].all_finite());
}

TEST_CASE("forward rejects wrong input shapes") {
  const Model model = qm::build_model(qm::preset("micro"));
  CHECK_THROWS_AS((void)qm::forward(model, make_batch(1, 32, 1), nullptr),
                  std::invalid_argument);
  std::vector<FeatureMap> bad_depth;
  bad_depth.push_back(qm::fill_seeded(64, 64, 4, 1));
  CHECK_THROWS_AS((void)qm::forward(model, bad_depth, nullptr),
                  std::invalid_argument);
}

TEST_CASE("forward is deterministic bit for bit") {
  const Model model = qm::build_model(qm::preset("micro"));
  const auto batch = make_batch(2, 64, 17);
  QuarterMapConfig cfg;
  cfg.k = 1;
  cfg.m = 2;
  cfg.n = 1;
  cfg.skip_policy = qm::SkipPolicy::ExcludeFirstTwoBlocks;
  const auto a = qm::forward(model, batch, &cfg);
  const auto b = qm::forward(model, batch, &cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].data == b[i].data);
  }
}

TEST_CASE("same seed same weights, different seed different weights") {
  ModelConfig cfg = qm::preset("micro");
  cfg.seed = 9;
  const Model m1 = qm::build_model(cfg);
  const Model m2 = qm::build_model(cfg);
  CHECK(m1.patch_embed.weight == m2.patch_embed.weight);
  CHECK(m1.blocks[0].dir[0].w_b == m2.blocks[0].dir[0].w_b);
  cfg.seed = 10;
  const Model m3 = qm::build_model(cfg);
  CHECK(m1.patch_embed.weight != m3.patch_embed.weight);
}

TEST_CASE("disabled quartermap equals no quartermap bit for bit") {
  const Model model = qm::build_model(qm::preset("micro"));
  const auto batch = make_batch(1, 64, 23);
  QuarterMapConfig cfg;
  cfg.m = 1;  // retains everything
  cfg.n = 1;
  const auto with = qm::forward(model, batch, &cfg);
  const auto without = qm::forward(model, batch, nullptr);
  CHECK(with[0].data == without[0].data);
}

TEST_CASE("threaded forward matches single-threaded bit for bit") {
  const Model model = qm::build_model(qm::preset("micro"));
  const auto batch = make_batch(4, 64, 29);
  QuarterMapConfig cfg;
  cfg.k = 1;
  cfg.m = 2;
  cfg.skip_policy = qm::SkipPolicy::ExcludeFirstTwoBlocks;
  qm::ForwardOptions one, four;
  one.threads = 1;
  four.threads = 4;
  const auto a = qm::forward(model, batch, &cfg, nullptr, one);
  const auto b = qm::forward(model, batch, &cfg, nullptr, four);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].data == b[i].data);
  }
}

TEST_CASE("report flops match the analytic table") {
  const ModelConfig cfg = qm::preset("micro");
  const Model model = qm::build_model(cfg);
  const auto batch = make_batch(1, 64, 31);

  SUBCASE("without pruning") {
    qm::StageReport report;
    (void)qm::forward(model, batch, nullptr, &report);
    const auto table = qm::flop_count(cfg, nullptr);
    for (int s = 0; s < 4; ++s) {
      CHECK(report.stages[s].flops.total() == table[s].total());
      CHECK(report.stages[s].flops.scan == table[s].scan);
    }
  }
  SUBCASE("with pruning") {
    QuarterMapConfig qmc;
    qmc.k = 1;
    qmc.m = 2;
    qmc.n = 1;
    qmc.skip_policy = qm::SkipPolicy::ExcludeFirstTwoBlocks;
    qm::StageReport report;
    (void)qm::forward(model, batch, &qmc, &report);
    const auto table = qm::flop_count(cfg, &qmc);
    for (int s = 0; s < 4; ++s) {
      CHECK(report.stages[s].flops.total() == table[s].total());
      CHECK(report.stages[s].flops.upsample == table[s].upsample);
    }
  }
}

TEST_CASE("pruning shortens the recorded scan lengths") {
  const ModelConfig cfg = qm::preset("micro");  // extents 16, 8, 4, 2
  const Model model = qm::build_model(cfg);
  const auto batch = make_batch(1, 64, 37);
  QuarterMapConfig qmc;
  qmc.k = 1;
  qmc.m = 2;
  qmc.n = 1;
  qmc.skip_policy = qm::SkipPolicy::ExcludeFirstTwoBlocks;
  qm::StageReport plain, pruned;
  (void)qm::forward(model, batch, nullptr, &plain);
  (void)qm::forward(model, batch, &qmc, &pruned);
  // Stages 1-2 hold the first two (excluded) blocks; stages 3-4 get pruned
  // from 4x4=16 to 2x2=4 and 2x2=4 to 1x1=1.
  CHECK(plain.stages[0].block_seq_len == std::vector<int>{256});
  CHECK(plain.stages[1].block_seq_len == std::vector<int>{64});
  CHECK(plain.stages[2].block_seq_len == std::vector<int>{16});
  CHECK(plain.stages[3].block_seq_len == std::vector<int>{4});
  CHECK(pruned.stages[0].block_seq_len == std::vector<int>{256});
  CHECK(pruned.stages[1].block_seq_len == std::vector<int>{64});
  CHECK(pruned.stages[2].block_seq_len == std::vector<int>{4});
  CHECK(pruned.stages[3].block_seq_len == std::vector<int>{1});
}

TEST_CASE("prune_only_layer restricts pruning to one stage") {
  const ModelConfig cfg = qm::preset("micro");
  QuarterMapConfig qmc;
  qmc.k = 1;
  qmc.m = 2;
  qmc.n = 1;
  qmc.skip_policy = qm::SkipPolicy::ExcludeFirstTwoBlocks;
  const auto all = qm::flop_count(cfg, &qmc);
  const auto only3 = qm::flop_count(cfg, &qmc, 3);
  const auto none = qm::flop_count(cfg, nullptr);
  CHECK(only3[2].scan == all[2].scan);      // stage 3 still pruned
  CHECK(only3[3].scan == none[3].scan);     // stage 4 back to full work
  CHECK(only3[2].scan < none[2].scan);
}

TEST_CASE("quarter law: scan flops shrink by ~4x for m=2, n=1") {
  const ModelConfig cfg = qm::preset("micro");
  QuarterMapConfig qmc;
  qmc.k = 1;
  qmc.m = 2;
  qmc.n = 1;
  qmc.skip_policy = qm::SkipPolicy::ExcludeFirstTwoBlocks;
  const auto pruned = qm::flop_count(cfg, &qmc);
  const auto full = qm::flop_count(cfg, nullptr);
  for (int s = 2; s < 4; ++s) {  // pruned stages
    CHECK(4 * (pruned[s].scan + pruned[s].projections + pruned[s].delta_path) ==
          full[s].scan + full[s].projections + full[s].delta_path);
  }
}

TEST_CASE("report totals aggregate the stage buckets") {
  const Model model = qm::build_model(qm::preset("micro"));
  const auto batch = make_batch(2, 64, 41);
  qm::StageReport report;
  (void)qm::forward(model, batch, nullptr, &report);
  CHECK(report.total_ms > 0.0);
  CHECK(report.images_per_second > 0.0);
  CHECK(report.scan_kernel_ms() > 0.0);
  CHECK(report.other_ms() >= 0.0);
  double stage_scan = 0.0;
  for (const auto& s : report.stages) stage_scan += s.scan_kernel_ms;
  CHECK(report.scan_kernel_ms() == doctest::Approx(stage_scan));
  CHECK(report.total_flops().total() > 0);
}

TEST_CASE("export_weights writes manifest and loadable fixtures") {
  namespace fs = std::filesystem;
  const fs::path dir =
      fs::temp_directory_path() / "qm_export_test_weights";
  fs::remove_all(dir);
  const Model model = qm::build_model(qm::preset("micro"));
  qm::export_weights(model, dir.string());

  REQUIRE(fs::exists(dir / "manifest.json"));
  std::ifstream manifest(dir / "manifest.json");
  const std::string text((std::istreambuf_iterator<char>(manifest)),
                         std::istreambuf_iterator<char>());
  CHECK(text.find("patch_embed.weight") != std::string::npos);
  CHECK(text.find("blocks.0.dir.0.a_log") != std::string::npos);
  CHECK(text.find("downsample.0.weight") != std::string::npos);

  const FeatureMap a_log = qm::read_qmap((dir / "blocks.0.dir.0.a_log.qmap").string());
  CHECK(a_log.h == 8);   // micro stage-1 dim
  CHECK(a_log.w == 8);   // micro n_state
  CHECK(a_log.d == 1);
  fs::remove_all(dir);
}
