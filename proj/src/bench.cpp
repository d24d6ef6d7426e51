#include "qm/bench.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace qm {

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

int parse_int(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string(what) + ": cannot parse '" + s +
                                "' as an integer");
  }
}

}  // namespace

void BenchConfig::validate() const {
  model.validate();
  if (use_qm) qm.validate();
  if (batch < 1 || repeats < 1 || warmup < 0 || threads < 1) {
    throw std::invalid_argument(
        "BenchConfig: need batch >= 1, repeats >= 1, warmup >= 0, threads >= 1");
  }
  if (prune_only_layer < 0 || prune_only_layer > kNumStages) {
    throw std::invalid_argument("BenchConfig: prune_only_layer must be 0.." +
                                std::to_string(kNumStages));
  }
}

std::vector<FeatureMap> make_input_batch(const ModelConfig& cfg, int batch,
                                         std::uint64_t seed) {
  std::vector<FeatureMap> out;
  out.reserve(batch);
  for (int i = 0; i < batch; ++i) {
    out.push_back(fill_seeded(cfg.input_hw, cfg.input_hw, 3, seed + i));
  }
  return out;
}

BenchResult run_benchmark(const BenchConfig& cfg) {
  cfg.validate();
  const Model model = build_model(cfg.model);
  const std::vector<FeatureMap> batch =
      make_input_batch(cfg.model, cfg.batch, cfg.data_seed);
  const QuarterMapConfig* qmp = cfg.use_qm ? &cfg.qm : nullptr;
  ForwardOptions opts;
  opts.prune_only_layer = cfg.prune_only_layer;
  opts.threads = cfg.threads;

  for (int r = 0; r < cfg.warmup; ++r) {
    forward(model, batch, qmp, nullptr, opts);
  }

  std::vector<StageReport> reports(cfg.repeats);
  BenchResult res;
  for (int r = 0; r < cfg.repeats; ++r) {
    std::vector<FeatureMap> outs =
        forward(model, batch, qmp, &reports[r], opts);
    if (r == cfg.repeats - 1) res.outputs = std::move(outs);
  }

  // Medians per stage and component; flops and lengths are repeat-invariant.
  StageReport agg = reports[0];
  double wall_sum = 0.0;
  std::vector<double> tmp(cfg.repeats);
  for (int s = 0; s < kNumStages; ++s) {
    auto component = [&](auto getter) {
      for (int r = 0; r < cfg.repeats; ++r) tmp[r] = getter(reports[r].stages[s]);
      return median(tmp);
    };
    agg.stages[s].scan_kernel_ms =
        component([](const StageStats& st) { return st.scan_kernel_ms; });
    agg.stages[s].prune_upsample_ms =
        component([](const StageStats& st) { return st.prune_upsample_ms; });
    agg.stages[s].crossscan_merge_ms =
        component([](const StageStats& st) { return st.crossscan_merge_ms; });
  }
  for (int r = 0; r < cfg.repeats; ++r) {
    tmp[r] = reports[r].total_ms;
    wall_sum += reports[r].total_ms;
  }
  agg.total_ms = median(tmp);
  res.throughput_ips =
      wall_sum > 0.0
          ? static_cast<double>(cfg.batch) * cfg.repeats / (wall_sum / 1000.0)
          : 0.0;
  agg.images_per_second = res.throughput_ips;
  res.total_ms_median = agg.total_ms;
  res.report = std::move(agg);
  return res;
}

double relative_l2(const std::vector<FeatureMap>& candidate,
                   const std::vector<FeatureMap>& baseline) {
  if (candidate.size() != baseline.size()) {
    throw std::invalid_argument("relative_l2: batch sizes differ");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    const FeatureMap& a = candidate[i];
    const FeatureMap& b = baseline[i];
    if (a.h != b.h || a.w != b.w || a.d != b.d) {
      throw std::invalid_argument("relative_l2: item " + std::to_string(i) +
                                  " shapes differ");
    }
    for (std::size_t e = 0; e < a.data.size(); ++e) {
      const double diff = static_cast<double>(a.data[e]) - b.data[e];
      num += diff * diff;
      den += static_cast<double>(b.data[e]) * b.data[e];
    }
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(num / den);
}

std::string upsample_name(UpsampleMode mode) {
  switch (mode) {
    case UpsampleMode::Nearest: return "nearest";
    case UpsampleMode::Bilinear: return "bilinear";
    case UpsampleMode::Bicubic: return "bicubic";
  }
  return "unknown";
}

UpsampleMode upsample_from_name(const std::string& name) {
  if (name == "nearest") return UpsampleMode::Nearest;
  if (name == "bilinear") return UpsampleMode::Bilinear;
  if (name == "bicubic") return UpsampleMode::Bicubic;
  throw std::invalid_argument("unknown upsample mode '" + name +
                              "' (expected nearest, bilinear, bicubic)");
}

std::string skip_policy_name(SkipPolicy policy) {
  return policy == SkipPolicy::ExcludeFirstLayer ? "first-layer" : "first-two";
}

SkipPolicy skip_policy_from_name(const std::string& name) {
  if (name == "first-layer") return SkipPolicy::ExcludeFirstLayer;
  if (name == "first-two") return SkipPolicy::ExcludeFirstTwoBlocks;
  throw std::invalid_argument("unknown skip policy '" + name +
                              "' (expected first-layer, first-two)");
}

SweepAxis sweep_axis_from_name(const std::string& name) {
  if (name == "k") return SweepAxis::K;
  if (name == "mn") return SweepAxis::MN;
  if (name == "upsample") return SweepAxis::Upsample;
  if (name == "layer") return SweepAxis::Layer;
  throw std::invalid_argument("unknown sweep axis '" + name +
                              "' (expected k, mn, upsample, layer)");
}

std::vector<std::string> default_sweep_values(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::K: return {"1", "2", "3", "4", "6"};
    case SweepAxis::MN: return {"1:1", "2:1", "4:1", "8:1"};
    case SweepAxis::Upsample: return {"nearest", "bilinear", "bicubic"};
    case SweepAxis::Layer: return {"1", "2", "3", "4"};
  }
  return {};
}

namespace {

const char* axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::K: return "k";
    case SweepAxis::MN: return "mn";
    case SweepAxis::Upsample: return "upsample";
    case SweepAxis::Layer: return "layer";
  }
  return "unknown";
}

BenchConfig apply_axis_value(const BenchConfig& base, SweepAxis axis,
                             const std::string& value) {
  BenchConfig cfg = base;
  cfg.use_qm = true;
  switch (axis) {
    case SweepAxis::K:
      cfg.qm.k = parse_int(value, "sweep k value");
      break;
    case SweepAxis::MN: {
      const auto colon = value.find(':');
      if (colon == std::string::npos) {
        throw std::invalid_argument("sweep mn value '" + value +
                                    "' must look like m:n");
      }
      cfg.qm.m = parse_int(value.substr(0, colon), "sweep m value");
      cfg.qm.n = parse_int(value.substr(colon + 1), "sweep n value");
      break;
    }
    case SweepAxis::Upsample:
      cfg.qm.upsample = upsample_from_name(value);
      break;
    case SweepAxis::Layer:
      cfg.prune_only_layer = parse_int(value, "sweep layer value");
      if (cfg.prune_only_layer < 1 || cfg.prune_only_layer > kNumStages) {
        throw std::invalid_argument("sweep layer value must be 1.." +
                                    std::to_string(kNumStages));
      }
      break;
  }
  cfg.validate();
  return cfg;
}

}  // namespace

SweepRow make_row(const std::string& axis, const BenchConfig& cfg,
                  const BenchResult& res, double deviation) {
  SweepRow row;
  row.axis = axis;
  row.cfg = cfg;
  row.throughput_ips = res.throughput_ips;
  row.total_ms = res.total_ms_median;
  row.scan_kernel_ms = res.report.scan_kernel_ms();
  row.prune_upsample_ms = res.report.prune_upsample_ms();
  row.crossscan_merge_ms = res.report.crossscan_merge_ms();
  row.other_ms = res.report.other_ms();
  const FlopCounts f = res.report.total_flops();
  row.flops_total = f.total();
  row.flops_scan_path = f.scan_path();
  row.deviation_l2 = deviation;
  return row;
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec,
                                const BenchConfig& base) {
  if (spec.values.empty()) {
    throw std::invalid_argument("run_sweep: no values given");
  }
  // Unpruned reference outputs for the deviation proxy, one quiet forward.
  BenchConfig ref = base;
  ref.use_qm = false;
  ref.repeats = 1;
  ref.warmup = 0;
  const std::vector<FeatureMap> baseline = run_benchmark(ref).outputs;

  std::vector<SweepRow> rows;
  rows.reserve(spec.values.size());
  for (const std::string& value : spec.values) {
    BenchConfig cfg = apply_axis_value(base, spec.axis, value);
    cfg.repeats = spec.repeats;
    cfg.warmup = spec.warmup;
    const BenchResult res = run_benchmark(cfg);
    rows.push_back(make_row(axis_name(spec.axis), cfg, res,
                            relative_l2(res.outputs, baseline)));
  }
  return rows;
}

std::string csv_header() {
  return "axis,model,input_hw,batch,repeats,warmup,k,m,n,upsample,"
         "skip_policy,layer,throughput_ips,total_ms,scan_kernel_ms,"
         "prune_upsample_ms,crossscan_merge_ms,other_ms,flops_total,"
         "flops_scan_path,deviation_l2";
}

std::string csv_row(const SweepRow& row) {
  std::ostringstream os;
  const BenchConfig& c = row.cfg;
  os << row.axis << ',' << c.model_name << ',' << c.model.input_hw << ','
     << c.batch << ',' << c.repeats << ',' << c.warmup << ',';
  if (c.use_qm) {
    os << c.qm.k << ',' << c.qm.m << ',' << c.qm.n << ','
       << upsample_name(c.qm.upsample) << ','
       << skip_policy_name(c.qm.skip_policy) << ',';
  } else {
    os << "0,0,0,none,none,";
  }
  os << c.prune_only_layer << ',' << fmt(row.throughput_ips) << ','
     << fmt(row.total_ms) << ',' << fmt(row.scan_kernel_ms) << ','
     << fmt(row.prune_upsample_ms) << ',' << fmt(row.crossscan_merge_ms) << ','
     << fmt(row.other_ms) << ',' << row.flops_total << ','
     << row.flops_scan_path << ',' << fmt(row.deviation_l2);
  return os.str();
}

std::string rows_to_csv(const std::vector<SweepRow>& rows) {
  std::string out = csv_header();
  out += '\n';
  for (const SweepRow& row : rows) {
    out += csv_row(row);
    out += '\n';
  }
  return out;
}

std::string rows_to_json(const std::vector<SweepRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const SweepRow& row : rows) {
    const BenchConfig& c = row.cfg;
    nlohmann::json o;
    o["axis"] = row.axis;
    o["model"] = c.model_name;
    o["input_hw"] = c.model.input_hw;
    o["batch"] = c.batch;
    o["repeats"] = c.repeats;
    o["warmup"] = c.warmup;
    o["k"] = c.use_qm ? c.qm.k : 0;
    o["m"] = c.use_qm ? c.qm.m : 0;
    o["n"] = c.use_qm ? c.qm.n : 0;
    o["upsample"] = c.use_qm ? upsample_name(c.qm.upsample) : "none";
    o["skip_policy"] = c.use_qm ? skip_policy_name(c.qm.skip_policy) : "none";
    o["layer"] = c.prune_only_layer;
    o["throughput_ips"] = row.throughput_ips;
    o["total_ms"] = row.total_ms;
    o["scan_kernel_ms"] = row.scan_kernel_ms;
    o["prune_upsample_ms"] = row.prune_upsample_ms;
    o["crossscan_merge_ms"] = row.crossscan_merge_ms;
    o["other_ms"] = row.other_ms;
    o["flops_total"] = row.flops_total;
    o["flops_scan_path"] = row.flops_scan_path;
    o["deviation_l2"] = row.deviation_l2;
    arr.push_back(std::move(o));
  }
  return arr.dump(2) + "\n";
}

}  // namespace qm
