#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qm/model.hpp"
#include "qm/quartermap.hpp"

namespace qm {

struct BenchConfig {
  std::string model_name = "tiny";
  ModelConfig model;
  bool use_qm = false;
  QuarterMapConfig qm;
  int prune_only_layer = 0;  // 0 = all stages eligible
  int batch = 8;
  int repeats = 5;
  int warmup = 2;
  int threads = 1;
  std::uint64_t data_seed = 1234;  // input batch generator

  BenchConfig() : model(preset("tiny")) {}
  void validate() const;
};

struct BenchResult {
  // Per-stage ms components are medians across timed repeats; flops and
  // sequence lengths are repeat-invariant.
  StageReport report;
  double throughput_ips = 0.0;    // batch * repeats / summed repeat wall
  double total_ms_median = 0.0;   // median single-repeat wall
  std::vector<FeatureMap> outputs;  // final features (identical every repeat)
};

// Deterministic inputs shaped for the model, one seed stream per item.
std::vector<FeatureMap> make_input_batch(const ModelConfig& cfg, int batch,
                                         std::uint64_t seed);

BenchResult run_benchmark(const BenchConfig& cfg);

// ||candidate - baseline||_2 / ||baseline||_2 over all items and elements.
double relative_l2(const std::vector<FeatureMap>& candidate,
                   const std::vector<FeatureMap>& baseline);

// Canonical CLI/CSV names for the enums.
std::string upsample_name(UpsampleMode mode);
UpsampleMode upsample_from_name(const std::string& name);
std::string skip_policy_name(SkipPolicy policy);
SkipPolicy skip_policy_from_name(const std::string& name);

enum class SweepAxis { K, MN, Upsample, Layer };

SweepAxis sweep_axis_from_name(const std::string& name);
std::vector<std::string> default_sweep_values(SweepAxis axis);

struct SweepSpec {
  SweepAxis axis = SweepAxis::K;
  std::vector<std::string> values;
  int repeats = 5;
  int warmup = 2;
};

// One result row; column set is frozen, see csv_header().
struct SweepRow {
  std::string axis;
  BenchConfig cfg;
  double throughput_ips = 0.0;
  double total_ms = 0.0;
  double scan_kernel_ms = 0.0;
  double prune_upsample_ms = 0.0;
  double crossscan_merge_ms = 0.0;
  double other_ms = 0.0;
  std::uint64_t flops_total = 0;
  std::uint64_t flops_scan_path = 0;
  double deviation_l2 = 0.0;  // vs unpruned baseline on the same batch
};

SweepRow make_row(const std::string& axis, const BenchConfig& cfg,
                  const BenchResult& res, double deviation);

// One row per value; deviation measured against the unpruned baseline
// forward on the same seeded batch.
std::vector<SweepRow> run_sweep(const SweepSpec& spec,
                                const BenchConfig& base);

std::string csv_header();
std::string csv_row(const SweepRow& row);
std::string rows_to_csv(const std::vector<SweepRow>& rows);
std::string rows_to_json(const std::vector<SweepRow>& rows);

}  // namespace qm
