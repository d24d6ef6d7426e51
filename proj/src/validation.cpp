#include "qm/validation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qm/flops.hpp"
#include "qm/model.hpp"
#include "qm/quartermap.hpp"
#include "qm/ss2d.hpp"
#include "qm/ssm.hpp"
#include "qm/tensor.hpp"

namespace qm {

namespace {

// Relative error with an absolute floor so near-cancellations do not blow
// up the ratio.
double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(b), 1e-6);
}

Sequence seeded_sequence(int len, int d, std::uint64_t seed) {
  Sequence s(len, d);
  SeededRng rng(seed);
  for (float& v : s.data) v = rng.next_symmetric();
  return s;
}

// Step-by-step evaluator over the public scalar pieces. With
// swapped_combine the prefix is composed in the wrong operand order,
// emulating a combine-order bug in a parallel scan.
Sequence stepwise_scan(const Sequence& seq, const SsmBlockParams& p,
                       bool swapped_combine) {
  const int L = seq.len, D = p.d, N = p.n_state;
  std::vector<SelectedParams> sel(L);
  for (int t = 0; t < L; ++t) {
    sel[t] = select_params(std::span<const float>(seq.step_ptr(t), D), p);
  }
  Sequence out(L, D);
  std::vector<double> yacc(static_cast<std::size_t>(L) * D, 0.0);
  for (int c = 0; c < D; ++c) {
    for (int s = 0; s < N; ++s) {
      const float a =
          -std::exp(p.a_log[static_cast<std::size_t>(c) * N + s]);
      ScanElement prefix;  // identity
      for (int t = 0; t < L; ++t) {
        const Discretized dz = zoh_discretize(sel[t].delta[c], a, sel[t].b[s]);
        const ScanElement e{dz.a_bar, dz.b_bar * seq.get(t, c)};
        prefix = swapped_combine ? scan_combine(e, prefix)
                                 : scan_combine(prefix, e);
        yacc[static_cast<std::size_t>(t) * D + c] +=
            static_cast<double>(sel[t].c[s]) * prefix.bx;
      }
    }
  }
  for (int t = 0; t < L; ++t) {
    for (int c = 0; c < D; ++c) {
      out.set(t, c,
              static_cast<float>(yacc[static_cast<std::size_t>(t) * D + c] +
                                 static_cast<double>(p.d_skip[c]) *
                                     seq.get(t, c)));
    }
  }
  return out;
}

CheckResult scan_equivalence_suite(std::uint64_t seed, Fault fault) {
  CheckResult r{"scan_equivalence", "ssm_core", true, ""};
  const int lens[] = {1, 2, 3, 17, 64};
  const int dims[] = {1, 3};
  const int states[] = {1, 4};
  double worst = 0.0;
  std::string worst_at;
  for (int L : lens) {
    for (int D : dims) {
      for (int N : states) {
        const SsmBlockParams p = make_seeded_params(D, N, seed + L + 10 * D);
        const Sequence u = seeded_sequence(L, D, seed + 1000 + L);
        const Sequence ref = selective_scan_sequential(u, p);
        const Sequence got = fault == Fault::ScanCombine
                                 ? stepwise_scan(u, p, true)
                                 : selective_scan_parallel(u, p);
        for (int t = 0; t < L; ++t) {
          for (int c = 0; c < D; ++c) {
            const double e = rel_err(got.get(t, c), ref.get(t, c));
            if (e > worst) {
              worst = e;
              std::ostringstream os;
              os << "L=" << L << " D=" << D << " N=" << N
                 << " seed=" << seed << " t=" << t << " c=" << c;
              worst_at = os.str();
            }
          }
        }
      }
    }
  }
  if (worst > 1e-5) {
    r.passed = false;
    std::ostringstream os;
    os << "parallel scan deviates from sequential oracle: rel err " << worst
       << " at " << worst_at << " (tolerance 1e-5); check scan_combine order";
    r.detail = os.str();
  }
  return r;
}

CheckResult round_trip_suite(std::uint64_t seed, Fault fault) {
  CheckResult r{"round_trip", "ss2d", true, ""};
  const int shapes[][2] = {{1, 1}, {1, 5}, {5, 1}, {2, 2},
                           {3, 7}, {8, 8}, {13, 4}};
  for (const auto& hw : shapes) {
    const int h = hw[0], w = hw[1];
    for (int d : {1, 3}) {
      const FeatureMap x = fill_seeded(h, w, d, seed + 7 * h + w + d);
      auto seqs = cross_scan(x);
      if (fault == Fault::CrossMergeIndex && h * w >= 2) {
        // Emulate a flipped index in the fold: two steps of one
        // directional sequence exchanged.
        auto& s = seqs[static_cast<int>(ScanDirection::ColForward)];
        for (int c = 0; c < d; ++c) {
          std::swap(s.data[c], s.data[static_cast<std::size_t>(d) + c]);
        }
      }
      const FeatureMap y = cross_merge(seqs, h, w);
      for (std::size_t e = 0; e < x.data.size(); ++e) {
        if (y.data[e] != 4.0f * x.data[e]) {
          r.passed = false;
          std::ostringstream os;
          os << "cross_merge(cross_scan(x)) != 4*x at flat index " << e
             << " for shape " << h << "x" << w << "x" << d << " seed "
             << seed + 7 * h + w + d << "; check cross_merge index maps";
          r.detail = os.str();
          return r;
        }
      }
    }
  }
  return r;
}

std::vector<int> mutant_retained_phase1(int extent, int m, int n) {
  std::vector<int> out;
  for (int base = 0; base < extent; base += m) {
    const int block = std::min(m, extent - base);
    const int keep = std::min(n, block);
    for (int i = 0; i < keep; ++i) {
      out.push_back(std::min(base + 1 + i, extent - 1));
    }
  }
  return out;
}

CheckResult idempotence_suite(std::uint64_t seed, Fault fault) {
  CheckResult r{"idempotence", "quartermap", true, ""};
  // Golden phase anchors.
  struct Golden {
    int extent, m, n;
    std::vector<int> want;
  };
  const Golden goldens[] = {
      {8, 2, 1, {0, 2, 4, 6}},
      {7, 2, 1, {0, 2, 4, 6}},
      {8, 4, 1, {0, 4}},
      {6, 3, 2, {0, 1, 3, 4}},
  };
  for (const Golden& g : goldens) {
    const std::vector<int> got = fault == Fault::PrunePhase
                                     ? mutant_retained_phase1(g.extent, g.m, g.n)
                                     : retained_indices(g.extent, g.m, g.n);
    if (got != g.want) {
      r.passed = false;
      std::ostringstream os;
      os << "retained_indices(" << g.extent << ", " << g.m << ", " << g.n
         << ") lost its phase-0 anchor; got [";
      for (std::size_t i = 0; i < got.size(); ++i) {
        os << (i ? "," : "") << got[i];
      }
      os << "]";
      r.detail = os.str();
      return r;
    }
  }
  // Projection law on even extents: prune o upsample_nearest o prune is
  // exactly prune.
  for (int ext : {4, 8, 12}) {
    const FeatureMap x = fill_seeded(ext, ext, 3, seed + ext);
    const FeatureMap y = prune(x, 2, 1);
    const FeatureMap up = upsample_nearest(y, ext, ext);
    const FeatureMap z = prune(up, 2, 1);
    if (z.data != y.data) {
      r.passed = false;
      r.detail = "prune(upsample_nearest(prune(x))) != prune(x) at extent " +
                 std::to_string(ext) + ", m=2, n=1, seed " +
                 std::to_string(seed + ext);
      return r;
    }
  }
  return r;
}

CheckResult shape_law_suite(std::uint64_t seed, Fault fault) {
  CheckResult r{"shape_law", "quartermap", true, ""};
  for (int h = 1; h <= 17; ++h) {
    for (int w = 1; w <= 17; w += 3) {
      for (int m = 1; m <= 8; ++m) {
        const int want_h = (h + m - 1) / m;
        const int want_w = (w + m - 1) / m;
        int got_h, got_w;
        if (fault == Fault::ShapeOffByOne) {
          // Emulate dropping the trailing partial block.
          got_h = h / m;
          got_w = w / m;
        } else {
          const FeatureMap x = fill_seeded(h, w, 2, seed + h * 37 + w);
          const FeatureMap p = prune(x, m, 1);
          got_h = p.h;
          got_w = p.w;
        }
        if (got_h != want_h || got_w != want_w) {
          r.passed = false;
          std::ostringstream os;
          os << "prune shape (" << got_h << "," << got_w << ") != ceiling ("
             << want_h << "," << want_w << ") for H=" << h << " W=" << w
             << " m=" << m << " n=1";
          r.detail = os.str();
          return r;
        }
      }
    }
  }
  return r;
}

CheckResult flop_consistency_suite(std::uint64_t seed, Fault fault) {
  (void)seed;  // analytic suite, no randomness
  CheckResult r{"flop_consistency", "model", true, ""};
  ModelConfig cfg = preset("micro");
  QuarterMapConfig qm;
  qm.k = 1;
  qm.m = 2;
  qm.n = 1;
  const auto table = flop_count(cfg, &qm);
  const auto baseline = flop_count(cfg, nullptr);

  // Independent recomputation of the pruned table from the documented
  // per-element constants.
  const std::uint64_t c_scan =
      fault == Fault::FlopTable ? kScanFlopsPerElement - 1
                                : kScanFlopsPerElement;
  for (int stage = 1; stage <= kNumStages; ++stage) {
    const std::uint64_t ext = cfg.stage_extent(stage);
    const std::uint64_t dim = cfg.stage_dim(stage);
    const std::uint64_t scan_ext = stage == 1 ? ext : ext / 2;  // k=1, m=2
    const std::uint64_t len = scan_ext * scan_ext;
    const std::uint64_t want_scan =
        4 * len * dim * cfg.n_state * c_scan * cfg.depths[stage - 1];
    const std::uint64_t got_scan = table[stage - 1].scan;
    if (got_scan != want_scan) {
      r.passed = false;
      std::ostringstream os;
      os << "stage " << stage << " scan flops " << got_scan
         << " != independent recomputation " << want_scan
         << " (micro, k=1, m=2, n=1)";
      r.detail = os.str();
      return r;
    }
  }
  // Quarter law on the scan path for pruned stages (stage 1 excluded by
  // the skip policy).
  for (int stage = 2; stage <= kNumStages; ++stage) {
    if (4 * table[stage - 1].scan_path() != baseline[stage - 1].scan_path()) {
      r.passed = false;
      r.detail = "stage " + std::to_string(stage) +
                 " pruned scan-path flops are not exactly 25% of baseline";
      return r;
    }
  }
  return r;
}

}  // namespace

Fault fault_from_name(const std::string& name) {
  if (name.empty() || name == "none") return Fault::None;
  if (name == "scan-combine") return Fault::ScanCombine;
  if (name == "cross-merge-index") return Fault::CrossMergeIndex;
  if (name == "prune-phase") return Fault::PrunePhase;
  if (name == "shape-off-by-one") return Fault::ShapeOffByOne;
  if (name == "flop-table") return Fault::FlopTable;
  throw std::invalid_argument(
      "unknown fault '" + name +
      "' (expected none, scan-combine, cross-merge-index, prune-phase, "
      "shape-off-by-one, flop-table)");
}

const std::vector<std::string>& fault_names() {
  static const std::vector<std::string> names = {
      "scan-combine", "cross-merge-index", "prune-phase", "shape-off-by-one",
      "flop-table"};
  return names;
}

bool ValidationReport::all_passed() const {
  for (const CheckResult& c : checks) {
    if (!c.passed) return false;
  }
  return true;
}

ValidationReport run_validation(std::uint64_t seed, Fault fault) {
  ValidationReport rep;
  rep.checks.push_back(scan_equivalence_suite(seed, fault));
  rep.checks.push_back(round_trip_suite(seed, fault));
  rep.checks.push_back(idempotence_suite(seed, fault));
  rep.checks.push_back(shape_law_suite(seed, fault));
  rep.checks.push_back(flop_consistency_suite(seed, fault));
  return rep;
}

const std::vector<InvariantCoverage>& validation_invariant_checklist() {
  static const std::vector<InvariantCoverage> table = {
      {"tensor.get_set_roundtrip", "unit:test_tensor"},
      {"tensor.layout_order", "unit:test_tensor"},
      {"ssm.combine_associativity", "unit:test_ssm"},
      {"ssm.stability_decay", "unit:test_ssm"},
      {"ssm.delta_positivity", "unit:test_ssm"},
      {"ssm.parallel_sequential_equivalence", "validation:scan_equivalence"},
      {"ssm.linearity_frozen_selection", "unit:test_ssm"},
      {"ss2d.roundtrip_4x", "validation:round_trip"},
      {"ss2d.direction_inverse_pairs", "unit:test_ss2d"},
      {"ss2d.shape_preservation", "unit:test_ss2d"},
      {"ss2d.permutation_multiset", "unit:test_ss2d"},
      {"qm.ceiling_shape_law", "validation:shape_law"},
      {"qm.idempotent_projection", "validation:idempotence"},
      {"qm.e2e_shape_preservation", "unit:test_quartermap"},
      {"qm.disabled_config_identity", "unit:test_quartermap"},
      {"qm.work_reduction", "unit:test_quartermap"},
      {"model.extent_dim_laws", "unit:test_model"},
      {"model.determinism", "unit:test_model"},
      {"model.flop_sum_consistency", "validation:flop_consistency"},
      {"model.pruned_seq_len_counter", "unit:test_model"},
      {"bench.throughput_reproducibility", "unit:test_bench"},
      {"bench.csv_schema_stable", "unit:test_bench"},
      {"bench.validation_coverage", "unit:test_bench"},
  };
  return table;
}

}  // namespace qm
