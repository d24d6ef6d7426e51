#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qm/bench.hpp"
#include "qm/validation.hpp"

namespace {

struct Options {
  std::string model = "tiny";
  int input_size = 0;  // 0 = preset default
  int batch = 8;
  int k = 3;
  int m = 2;
  int n = 1;
  std::string upsample = "nearest";
  std::string skip_policy = "first-layer";
  std::uint64_t seed = 0;
  int repeats = 5;
  int warmup = 2;
  int threads = 1;
  std::string out = "csv";  // csv | json
  std::string out_path;     // empty = stdout
  bool qm = false;
  std::string axis = "k";
  std::vector<std::string> values;
  std::string inject;
  std::string config_path;
};

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int parse_int_value(const std::string& v, const std::string& key) {
  std::size_t pos = 0;
  int r = 0;
  try {
    r = std::stoi(v, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != v.size()) {
    throw std::invalid_argument("config: value '" + v + "' for key '" + key +
                                "' is not an integer");
  }
  return r;
}

bool parse_bool_value(const std::string& v, const std::string& key) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config: value '" + v + "' for key '" + key +
                              "' is not a boolean");
}

void apply_kv(Options& o, const std::string& key, const std::string& val) {
  if (key == "model") {
    o.model = val;
  } else if (key == "input-size") {
    o.input_size = parse_int_value(val, key);
  } else if (key == "batch") {
    o.batch = parse_int_value(val, key);
  } else if (key == "k") {
    o.k = parse_int_value(val, key);
  } else if (key == "m") {
    o.m = parse_int_value(val, key);
  } else if (key == "n") {
    o.n = parse_int_value(val, key);
  } else if (key == "upsample") {
    o.upsample = val;
  } else if (key == "skip-policy") {
    o.skip_policy = val;
  } else if (key == "seed") {
    try {
      o.seed = std::stoull(val);
    } catch (const std::exception&) {
      throw std::invalid_argument("config: value '" + val +
                                  "' for key 'seed' is not an integer");
    }
  } else if (key == "repeats") {
    o.repeats = parse_int_value(val, key);
  } else if (key == "warmup") {
    o.warmup = parse_int_value(val, key);
  } else if (key == "threads") {
    o.threads = parse_int_value(val, key);
  } else if (key == "out") {
    o.out = val;
  } else if (key == "out-path") {
    o.out_path = val;
  } else if (key == "qm") {
    o.qm = parse_bool_value(val, key);
  } else if (key == "axis") {
    o.axis = val;
  } else if (key == "values") {
    o.values = split_csv(val);
  } else if (key == "inject") {
    o.inject = val;
  } else {
    throw std::invalid_argument("config: unknown key '" + key + "'");
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Flat key=value file mirroring the long flag names; # starts a comment.
void load_config_file(const std::string& path, Options& o) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("config: cannot open '" + path + "'");
  }
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " of '" + path + "' is not key=value");
    }
    apply_kv(o, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

qm::BenchConfig to_bench_config(const Options& o) {
  qm::BenchConfig b;
  b.model_name = o.model;
  b.model = qm::preset(o.model);
  if (o.input_size > 0) b.model.input_hw = o.input_size;
  b.model.seed = o.seed;
  b.use_qm = o.qm;
  b.qm.k = o.k;
  b.qm.m = o.m;
  b.qm.n = o.n;
  b.qm.upsample = qm::upsample_from_name(o.upsample);
  b.qm.skip_policy = qm::skip_policy_from_name(o.skip_policy);
  b.batch = o.batch;
  b.repeats = o.repeats;
  b.warmup = o.warmup;
  b.threads = o.threads;
  b.data_seed = o.seed + 1000003;
  return b;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out_path);
  if (!f) {
    throw std::invalid_argument("cannot write output file '" + out_path + "'");
  }
  f << text;
}

void check_out_format(const std::string& out) {
  if (out != "csv" && out != "json") {
    throw std::invalid_argument("unknown --out format '" + out +
                                "' (expected csv, json)");
  }
}

int cmd_run(const Options& o) {
  check_out_format(o.out);
  qm::BenchConfig cfg = to_bench_config(o);
  cfg.validate();
  const qm::BenchResult res = qm::run_benchmark(cfg);
  double deviation = 0.0;
  if (cfg.use_qm) {
    qm::BenchConfig ref = cfg;
    ref.use_qm = false;
    ref.repeats = 1;
    ref.warmup = 0;
    deviation = qm::relative_l2(res.outputs, qm::run_benchmark(ref).outputs);
  }
  const std::vector<qm::SweepRow> rows = {
      qm::make_row("run", cfg, res, deviation)};
  emit(o.out == "csv" ? qm::rows_to_csv(rows) : qm::rows_to_json(rows),
       o.out_path);
  return 0;
}

int cmd_sweep(const Options& o) {
  check_out_format(o.out);
  qm::SweepSpec spec;
  spec.axis = qm::sweep_axis_from_name(o.axis);
  spec.values = o.values.empty() ? qm::default_sweep_values(spec.axis)
                                 : o.values;
  spec.repeats = o.repeats;
  spec.warmup = o.warmup;
  const qm::BenchConfig base = to_bench_config(o);
  const std::vector<qm::SweepRow> rows = qm::run_sweep(spec, base);
  emit(o.out == "csv" ? qm::rows_to_csv(rows) : qm::rows_to_json(rows),
       o.out_path);
  return 0;
}

int cmd_validate(const Options& o) {
  check_out_format(o.out);
  const qm::Fault fault =
      o.inject.empty() ? qm::Fault::None : qm::fault_from_name(o.inject);
  const qm::ValidationReport rep = qm::run_validation(o.seed, fault);
  if (o.out == "json") {
    nlohmann::json arr = nlohmann::json::array();
    for (const qm::CheckResult& c : rep.checks) {
      arr.push_back({{"suite", c.suite},
                     {"module", c.module},
                     {"passed", c.passed},
                     {"detail", c.detail}});
    }
    emit(arr.dump(2) + "\n", o.out_path);
  } else {
    std::ostringstream os;
    os << "validation seed=" << o.seed << " inject="
       << (o.inject.empty() ? "none" : o.inject) << "\n";
    for (const qm::CheckResult& c : rep.checks) {
      os << (c.passed ? "[PASS] " : "[FAIL] ") << c.suite << " (" << c.module
         << ")";
      if (!c.passed) os << ": " << c.detail;
      os << "\n";
    }
    os << "result: " << (rep.all_passed() ? "PASS" : "FAIL") << "\n";
    emit(os.str(), o.out_path);
  }
  return rep.all_passed() ? 0 : 1;
}

int cmd_flops(const Options& o) {
  check_out_format(o.out);
  const qm::BenchConfig cfg = to_bench_config(o);
  cfg.model.validate();
  const qm::QuarterMapConfig* qmp = cfg.use_qm ? &cfg.qm : nullptr;
  if (qmp != nullptr) qmp->validate();
  const auto table = qm::flop_count(cfg.model, qmp);
  qm::FlopCounts total;
  for (const auto& f : table) total += f;
  if (o.out == "json") {
    nlohmann::json arr = nlohmann::json::array();
    auto push = [&](const std::string& name, const qm::FlopCounts& f) {
      arr.push_back({{"stage", name},
                     {"scan", f.scan},
                     {"projections", f.projections},
                     {"delta_path", f.delta_path},
                     {"merge", f.merge},
                     {"residual", f.residual},
                     {"linear", f.linear},
                     {"upsample", f.upsample},
                     {"total", f.total()},
                     {"scan_path", f.scan_path()}});
    };
    for (int s = 0; s < qm::kNumStages; ++s) {
      push(std::to_string(s + 1), table[s]);
    }
    push("total", total);
    emit(arr.dump(2) + "\n", o.out_path);
  } else {
    std::ostringstream os;
    os << "stage,scan,projections,delta_path,merge,residual,linear,upsample,"
          "total,scan_path\n";
    auto push = [&](const std::string& name, const qm::FlopCounts& f) {
      os << name << ',' << f.scan << ',' << f.projections << ','
         << f.delta_path << ',' << f.merge << ',' << f.residual << ','
         << f.linear << ',' << f.upsample << ',' << f.total() << ','
         << f.scan_path() << "\n";
    };
    for (int s = 0; s < qm::kNumStages; ++s) {
      push(std::to_string(s + 1), table[s]);
    }
    push("total", total);
    emit(os.str(), o.out_path);
  }
  return 0;
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--model", o.model,
                  "Model preset: tiny, small, base, micro");
  cmd->add_option("--input-size", o.input_size,
                  "Square input resolution (0 = preset default)");
  cmd->add_option("--batch", o.batch, "Images per forward pass");
  cmd->add_option("--k", o.k, "Block selection interval");
  cmd->add_option("--m", o.m, "Pruning interval per axis");
  cmd->add_option("--n", o.n, "Retained count per interval");
  cmd->add_option("--upsample", o.upsample,
                  "Upsample mode: nearest, bilinear, bicubic");
  cmd->add_option("--skip-policy", o.skip_policy,
                  "Blocks never pruned: first-layer, first-two");
  cmd->add_option("--seed", o.seed, "Seed for weights and data");
  cmd->add_option("--repeats", o.repeats, "Timed repeats (median reported)");
  cmd->add_option("--warmup", o.warmup, "Discarded warmup repeats");
  cmd->add_option("--threads", o.threads, "Batch-parallel worker threads");
  cmd->add_option("--out", o.out, "Output format: csv, json");
  cmd->add_option("--out-path", o.out_path, "Write output here (default stdout)");
  cmd->add_option("--config", o.config_path,
                  "Flat key=value file mirroring these flags; flags override");
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  // The config file provides defaults, so load it before flag parsing.
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    std::string path;
    if (a == "--config" && i + 1 < argc) {
      path = argv[i + 1];
    } else if (a.rfind("--config=", 0) == 0) {
      path = a.substr(9);
    }
    if (!path.empty()) {
      try {
        load_config_file(path, o);
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
      }
    }
  }

  CLI::App app{"quartermap benchmark harness"};
  app.require_subcommand(1);
  CLI::App* run = app.add_subcommand("run", "Single timed configuration");
  add_common(run, o);
  run->add_flag("--qm", o.qm, "Enable activation pruning");
  CLI::App* sweep = app.add_subcommand("sweep", "Ablation sweep over one axis");
  add_common(sweep, o);
  sweep->add_option("--axis", o.axis, "Sweep axis: k, mn, upsample, layer");
  sweep
      ->add_option("--values", o.values,
                   "Axis values (defaults per axis when omitted)")
      ->delimiter(',');
  CLI::App* validate = app.add_subcommand("validate", "Run invariant suites");
  add_common(validate, o);
  validate->add_option(
      "--inject", o.inject,
      "Scripted mutation: scan-combine, cross-merge-index, prune-phase, "
      "shape-off-by-one, flop-table");
  CLI::App* flops = app.add_subcommand("flops", "Analytic per-stage flop table");
  add_common(flops, o);
  flops->add_flag("--qm", o.qm, "Account for activation pruning");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (run->parsed()) return cmd_run(o);
    if (sweep->parsed()) return cmd_sweep(o);
    if (validate->parsed()) return cmd_validate(o);
    if (flops->parsed()) return cmd_flops(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
