#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <stdexcept>

#include "qm/bench.hpp"
#include "qm/model.hpp"
#include "qm/quartermap.hpp"
#include "qm/ss2d.hpp"
#include "qm/ssm.hpp"
#include "qm/tensor.hpp"
#include "qm/validation.hpp"

namespace py = pybind11;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

qm::FeatureMap map_from_array(const FloatArray& a) {
  if (a.ndim() != 3) {
    throw std::invalid_argument("expected a (H, W, D) float32 array");
  }
  qm::FeatureMap m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                   static_cast<int>(a.shape(2)));
  std::memcpy(m.data.data(), a.data(), m.data.size() * sizeof(float));
  return m;
}

py::array_t<float> array_from_map(const qm::FeatureMap& m) {
  py::array_t<float> a({m.h, m.w, m.d});
  std::memcpy(a.mutable_data(), m.data.data(), m.data.size() * sizeof(float));
  return a;
}

qm::Sequence sequence_from_array(const FloatArray& a) {
  if (a.ndim() != 2) {
    throw std::invalid_argument("expected a (L, D) float32 array");
  }
  qm::Sequence s(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::memcpy(s.data.data(), a.data(), s.data.size() * sizeof(float));
  return s;
}

py::array_t<float> array_from_sequence(const qm::Sequence& s) {
  py::array_t<float> a({s.len, s.d});
  std::memcpy(a.mutable_data(), s.data.data(), s.data.size() * sizeof(float));
  return a;
}

qm::QuarterMapConfig qm_config(int k, int m, int n, const std::string& upsample,
                               const std::string& skip_policy) {
  qm::QuarterMapConfig cfg;
  cfg.k = k;
  cfg.m = m;
  cfg.n = n;
  cfg.upsample = qm::upsample_from_name(upsample);
  cfg.skip_policy = qm::skip_policy_from_name(skip_policy);
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
  mod.doc() = "Selective-scan, SS2D and QuarterMap kernels";

  mod.def("softplus", &qm::softplus, py::arg("x"));

  mod.def(
      "zoh_discretize",
      [](float delta, float a, float b) {
        const qm::Discretized d = qm::zoh_discretize(delta, a, b);
        return py::make_tuple(d.a_bar, d.b_bar);
      },
      py::arg("delta"), py::arg("a"), py::arg("b"),
      "Zero-order-hold (a_bar, b_bar) for one scalar channel/state pair");

  mod.def(
      "selective_scan",
      [](const FloatArray& u, int n_state, std::uint64_t seed, bool parallel) {
        const qm::Sequence seq = sequence_from_array(u);
        const qm::SsmBlockParams p =
            qm::make_seeded_params(seq.d, n_state, seed);
        return array_from_sequence(parallel
                                       ? qm::selective_scan_parallel(seq, p)
                                       : qm::selective_scan_sequential(seq, p));
      },
      py::arg("u"), py::arg("n_state") = 8, py::arg("seed") = 0,
      py::arg("parallel") = true,
      "Run an (L, D) sequence through a seeded selective-scan block");

  mod.def(
      "cross_scan",
      [](const FloatArray& x) {
        const auto seqs = qm::cross_scan(map_from_array(x));
        py::list out;
        for (const qm::Sequence& s : seqs) out.append(array_from_sequence(s));
        return out;
      },
      py::arg("x"), "Unfold (H, W, D) into the four directional sequences");

  mod.def(
      "cross_merge",
      [](const std::vector<FloatArray>& seqs, int h, int w) {
        if (seqs.size() != qm::kNumDirections) {
          throw std::invalid_argument("cross_merge expects 4 sequences");
        }
        std::array<qm::Sequence, qm::kNumDirections> arr;
        for (int i = 0; i < qm::kNumDirections; ++i) {
          arr[i] = sequence_from_array(seqs[i]);
        }
        return array_from_map(qm::cross_merge(arr, h, w));
      },
      py::arg("seqs"), py::arg("h"), py::arg("w"),
      "Fold four directional sequences back onto the grid and sum");

  mod.def(
      "ss2d_forward",
      [](const FloatArray& x, int n_state, std::uint64_t seed) {
        const qm::FeatureMap m = map_from_array(x);
        return array_from_map(
            qm::ss2d_forward(m, qm::make_seeded_ss2d(m.d, n_state, seed)));
      },
      py::arg("x"), py::arg("n_state") = 8, py::arg("seed") = 0,
      "Four-direction selective scan block with seeded parameters");

  mod.def("retained_indices", &qm::retained_indices, py::arg("extent"),
          py::arg("m"), py::arg("n"));

  mod.def(
      "prune",
      [](const FloatArray& x, int m, int n) {
        return array_from_map(qm::prune(map_from_array(x), m, n));
      },
      py::arg("x"), py::arg("m"), py::arg("n"));

  mod.def(
      "upsample",
      [](const FloatArray& x, int target_h, int target_w,
         const std::string& mode) {
        return array_from_map(qm::upsample(map_from_array(x), target_h,
                                           target_w,
                                           qm::upsample_from_name(mode)));
      },
      py::arg("x"), py::arg("target_h"), py::arg("target_w"),
      py::arg("mode") = "nearest");

  mod.def(
      "quartermap_ss2d",
      [](const FloatArray& x, int m, int n, const std::string& upsample,
         int n_state, std::uint64_t seed) {
        const qm::FeatureMap in = map_from_array(x);
        const qm::QuarterMapConfig cfg =
            qm_config(1, m, n, upsample, "first-layer");
        return array_from_map(qm::quartermap_ss2d(
            in, qm::make_seeded_ss2d(in.d, n_state, seed), cfg));
      },
      py::arg("x"), py::arg("m") = 2, py::arg("n") = 1,
      py::arg("upsample") = "nearest", py::arg("n_state") = 8,
      py::arg("seed") = 0, "prune -> SS2D -> upsample back to input shape");

  mod.def(
      "should_prune",
      [](int global_block_idx, int layer_idx, int block_in_layer,
         int first_layer_depth, int k, const std::string& skip_policy) {
        qm::QuarterMapConfig cfg;
        cfg.k = k;
        cfg.skip_policy = qm::skip_policy_from_name(skip_policy);
        return qm::should_prune(global_block_idx, layer_idx, block_in_layer,
                                first_layer_depth, cfg);
      },
      py::arg("global_block_idx"), py::arg("layer_idx"),
      py::arg("block_in_layer"), py::arg("first_layer_depth"), py::arg("k") = 3,
      py::arg("skip_policy") = "first-layer");

  mod.def(
      "forward_features",
      [](const std::string& model, const std::vector<FloatArray>& batch,
         std::uint64_t seed, int input_size, bool use_qm, int k, int m, int n,
         const std::string& upsample, const std::string& skip_policy) {
        qm::ModelConfig cfg = qm::preset(model);
        if (input_size > 0) cfg.input_hw = input_size;
        cfg.seed = seed;
        const qm::Model net = qm::build_model(cfg);
        std::vector<qm::FeatureMap> maps;
        maps.reserve(batch.size());
        for (const FloatArray& a : batch) maps.push_back(map_from_array(a));
        const qm::QuarterMapConfig qcfg =
            qm_config(k, m, n, upsample, skip_policy);
        const auto outs =
            qm::forward(net, maps, use_qm ? &qcfg : nullptr);
        py::list out;
        for (const qm::FeatureMap& o : outs) out.append(array_from_map(o));
        return out;
      },
      py::arg("model"), py::arg("batch"), py::arg("seed") = 0,
      py::arg("input_size") = 0, py::arg("use_qm") = false, py::arg("k") = 3,
      py::arg("m") = 2, py::arg("n") = 1, py::arg("upsample") = "nearest",
      py::arg("skip_policy") = "first-layer",
      "Final-stage feature maps for a batch of (H, W, 3) inputs");

  mod.def(
      "run_validation",
      [](std::uint64_t seed, const std::string& inject) {
        const qm::Fault fault = inject.empty()
                                    ? qm::Fault::None
                                    : qm::fault_from_name(inject);
        const qm::ValidationReport rep = qm::run_validation(seed, fault);
        py::list out;
        for (const qm::CheckResult& c : rep.checks) {
          py::dict d;
          d["suite"] = c.suite;
          d["module"] = c.module;
          d["passed"] = c.passed;
          d["detail"] = c.detail;
          out.append(d);
        }
        return out;
      },
      py::arg("seed") = 0, py::arg("inject") = "");
}
