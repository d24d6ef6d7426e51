#include "qm/ss2d.hpp"

#include <chrono>
#include <cstring>
#include <stdexcept>
#include <string>

namespace qm {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void check_grid(int h, int w, const char* where) {
  if (h < 1 || w < 1) {
    throw std::invalid_argument(std::string(where) + ": grid " +
                                std::to_string(h) + "x" + std::to_string(w) +
                                " must be at least 1x1");
  }
}

}  // namespace

std::array<Sequence, kNumDirections> cross_scan(const FeatureMap& x) {
  check_grid(x.h, x.w, "cross_scan");
  const int h = x.h, w = x.w, d = x.d;
  const int L = h * w;
  std::array<Sequence, kNumDirections> out;
  for (auto& s : out) s = Sequence(L, d);

  auto& rf = out[static_cast<int>(ScanDirection::RowForward)];
  auto& rb = out[static_cast<int>(ScanDirection::RowBackward)];
  auto& cf = out[static_cast<int>(ScanDirection::ColForward)];
  auto& cb = out[static_cast<int>(ScanDirection::ColBackward)];

  // Row-major unfold: t == flat grid index.
  std::memcpy(rf.data.data(), x.data.data(), x.size() * sizeof(float));
  for (int t = 0; t < L; ++t) {
    std::memcpy(rb.step_ptr(L - 1 - t), x.data.data() +
                    static_cast<std::size_t>(t) * d,
                static_cast<std::size_t>(d) * sizeof(float));
  }
  // Column-major unfold: t = j * h + i.
  for (int j = 0; j < w; ++j) {
    for (int i = 0; i < h; ++i) {
      const int t = j * h + i;
      std::memcpy(cf.step_ptr(t), x.channel_ptr(i, j),
                  static_cast<std::size_t>(d) * sizeof(float));
      std::memcpy(cb.step_ptr(L - 1 - t), x.channel_ptr(i, j),
                  static_cast<std::size_t>(d) * sizeof(float));
    }
  }
  return out;
}

FeatureMap cross_merge(const std::array<Sequence, kNumDirections>& seqs,
                       int h, int w) {
  check_grid(h, w, "cross_merge");
  const int L = h * w;
  const int d = seqs[0].d;
  for (int k = 0; k < kNumDirections; ++k) {
    if (seqs[k].len != L) {
      throw std::invalid_argument(
          "cross_merge: sequence " + std::to_string(k) + " has length " +
          std::to_string(seqs[k].len) + ", expected h*w=" + std::to_string(L));
    }
    if (seqs[k].d != d) {
      throw std::invalid_argument("cross_merge: channel dims disagree");
    }
  }
  const Sequence& rf = seqs[static_cast<int>(ScanDirection::RowForward)];
  const Sequence& rb = seqs[static_cast<int>(ScanDirection::RowBackward)];
  const Sequence& cf = seqs[static_cast<int>(ScanDirection::ColForward)];
  const Sequence& cb = seqs[static_cast<int>(ScanDirection::ColBackward)];

  FeatureMap out(h, w, d);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const int g = i * w + j;        // row-major step
      const int tc = j * h + i;       // column-major step
      const float* s0 = rf.step_ptr(g);
      const float* s1 = rb.step_ptr(L - 1 - g);
      const float* s2 = cf.step_ptr(tc);
      const float* s3 = cb.step_ptr(L - 1 - tc);
      float* o = out.channel_ptr(i, j);
      for (int c = 0; c < d; ++c) {
        o[c] = (s0[c] + s1[c]) + (s2[c] + s3[c]);
      }
    }
  }
  return out;
}

void Ss2dParams::validate() const {
  if (d < 1 || n_state < 1) {
    throw std::invalid_argument("Ss2dParams: d and n_state must be >= 1");
  }
  for (int k = 0; k < kNumDirections; ++k) {
    if (dir[k].d != d || dir[k].n_state != n_state) {
      throw std::invalid_argument("Ss2dParams: direction " +
                                  std::to_string(k) +
                                  " disagrees with block d/n_state");
    }
    dir[k].validate();
  }
}

Ss2dParams make_seeded_ss2d(int d, int n_state, std::uint64_t seed) {
  Ss2dParams p;
  p.d = d;
  p.n_state = n_state;
  for (int k = 0; k < kNumDirections; ++k) {
    p.dir[k] = make_seeded_params(d, n_state, seed * 4 + k);
  }
  return p;
}

FeatureMap ss2d_forward(const FeatureMap& x, const Ss2dParams& p,
                        BlockProfile* prof) {
  p.validate();
  if (x.d != p.d) {
    throw std::invalid_argument("ss2d_forward: input channel dim " +
                                std::to_string(x.d) +
                                " does not match block d=" +
                                std::to_string(p.d));
  }
  auto t0 = Clock::now();
  std::array<Sequence, kNumDirections> seqs = cross_scan(x);
  double perm_ms = ms_since(t0);

  t0 = Clock::now();
  for (int k = 0; k < kNumDirections; ++k) {
    seqs[k] = selective_scan_sequential(seqs[k], p.dir[k]);
  }
  const double scan_ms = ms_since(t0);

  t0 = Clock::now();
  FeatureMap out = cross_merge(seqs, x.h, x.w);
  perm_ms += ms_since(t0);

  if (prof != nullptr) {
    prof->scan_ms += scan_ms;
    prof->crossscan_merge_ms += perm_ms;
  }
  return out;
}

}  // namespace qm
