#include "qm/quartermap.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace qm {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void check_upsample_target(const FeatureMap& y, int target_h, int target_w,
                           const char* where) {
  if (y.h < 1 || y.w < 1 || y.d < 1) {
    throw std::invalid_argument(std::string(where) + ": empty source map");
  }
  if (target_h < y.h || target_w < y.w) {
    throw std::invalid_argument(
        std::string(where) + ": target " + std::to_string(target_h) + "x" +
        std::to_string(target_w) + " would shrink source " +
        std::to_string(y.h) + "x" + std::to_string(y.w));
  }
}

// Source coordinate under the half-pixel convention, clamped to the valid
// range so border taps replicate.
double half_pixel_coord(int dst, int src_extent, int dst_extent) {
  const double scale = static_cast<double>(src_extent) / dst_extent;
  double s = (dst + 0.5) * scale - 0.5;
  if (s < 0.0) s = 0.0;
  const double hi = static_cast<double>(src_extent - 1);
  if (s > hi) s = hi;
  return s;
}

// Keys cubic kernel, a = -0.5, support |x| < 2.
double keys_weight(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

}  // namespace

void QuarterMapConfig::validate() const {
  if (k < 1) {
    throw std::invalid_argument("QuarterMapConfig: k must be >= 1, got " +
                                std::to_string(k));
  }
  if (m < 1) {
    throw std::invalid_argument("QuarterMapConfig: m must be >= 1, got " +
                                std::to_string(m));
  }
  if (n < 1 || n > m) {
    throw std::invalid_argument("QuarterMapConfig: need 1 <= n <= m, got n=" +
                                std::to_string(n) +
                                ", m=" + std::to_string(m));
  }
}

std::vector<int> retained_indices(int extent, int m, int n) {
  if (extent < 1) {
    throw std::invalid_argument("retained_indices: extent must be >= 1, got " +
                                std::to_string(extent));
  }
  if (m < 1 || n < 1 || n > m) {
    throw std::invalid_argument(
        "retained_indices: need 1 <= n <= m, got n=" + std::to_string(n) +
        ", m=" + std::to_string(m));
  }
  std::vector<int> out;
  out.reserve((static_cast<std::size_t>(extent) * n + m - 1) / m);
  for (int base = 0; base < extent; base += m) {
    const int block = std::min(m, extent - base);
    const int keep = std::min(n, block);
    for (int i = 0; i < keep; ++i) out.push_back(base + i);
  }
  return out;
}

FeatureMap prune(const FeatureMap& x, int m, int n) {
  const std::vector<int> rows = retained_indices(x.h, m, n);
  const std::vector<int> cols = retained_indices(x.w, m, n);
  FeatureMap out(static_cast<int>(rows.size()), static_cast<int>(cols.size()),
                 x.d);
  const std::size_t row_bytes = static_cast<std::size_t>(x.d) * sizeof(float);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      std::memcpy(out.channel_ptr(static_cast<int>(i), static_cast<int>(j)),
                  x.channel_ptr(rows[i], cols[j]), row_bytes);
    }
  }
  return out;
}

FeatureMap upsample_nearest(const FeatureMap& y, int target_h, int target_w) {
  check_upsample_target(y, target_h, target_w, "upsample_nearest");
  FeatureMap out(target_h, target_w, y.d);
  const std::size_t row_bytes = static_cast<std::size_t>(y.d) * sizeof(float);
  for (int i = 0; i < target_h; ++i) {
    const int si = static_cast<int>(static_cast<std::int64_t>(i) * y.h /
                                    target_h);
    for (int j = 0; j < target_w; ++j) {
      const int sj = static_cast<int>(static_cast<std::int64_t>(j) * y.w /
                                      target_w);
      std::memcpy(out.channel_ptr(i, j), y.channel_ptr(si, sj), row_bytes);
    }
  }
  return out;
}

FeatureMap upsample_bilinear(const FeatureMap& y, int target_h, int target_w) {
  check_upsample_target(y, target_h, target_w, "upsample_bilinear");
  FeatureMap out(target_h, target_w, y.d);
  for (int i = 0; i < target_h; ++i) {
    const double sy = half_pixel_coord(i, y.h, target_h);
    const int i0 = static_cast<int>(std::floor(sy));
    const int i1 = std::min(i0 + 1, y.h - 1);
    const double fy = sy - i0;
    for (int j = 0; j < target_w; ++j) {
      const double sx = half_pixel_coord(j, y.w, target_w);
      const int j0 = static_cast<int>(std::floor(sx));
      const int j1 = std::min(j0 + 1, y.w - 1);
      const double fx = sx - j0;
      const float* v00 = y.channel_ptr(i0, j0);
      const float* v01 = y.channel_ptr(i0, j1);
      const float* v10 = y.channel_ptr(i1, j0);
      const float* v11 = y.channel_ptr(i1, j1);
      float* o = out.channel_ptr(i, j);
      for (int c = 0; c < y.d; ++c) {
        const double top = (1.0 - fx) * v00[c] + fx * v01[c];
        const double bot = (1.0 - fx) * v10[c] + fx * v11[c];
        o[c] = static_cast<float>((1.0 - fy) * top + fy * bot);
      }
    }
  }
  return out;
}

FeatureMap upsample_bicubic(const FeatureMap& y, int target_h, int target_w) {
  check_upsample_target(y, target_h, target_w, "upsample_bicubic");
  FeatureMap out(target_h, target_w, y.d);
  for (int i = 0; i < target_h; ++i) {
    const double sy = half_pixel_coord(i, y.h, target_h);
    const int i0 = static_cast<int>(std::floor(sy));
    const double fy = sy - i0;
    double wy[4];
    int ri[4];
    for (int r = 0; r < 4; ++r) {
      wy[r] = keys_weight(fy - (r - 1));
      ri[r] = std::clamp(i0 + r - 1, 0, y.h - 1);
    }
    for (int j = 0; j < target_w; ++j) {
      const double sx = half_pixel_coord(j, y.w, target_w);
      const int j0 = static_cast<int>(std::floor(sx));
      const double fx = sx - j0;
      double wx[4];
      int ci[4];
      for (int c = 0; c < 4; ++c) {
        wx[c] = keys_weight(fx - (c - 1));
        ci[c] = std::clamp(j0 + c - 1, 0, y.w - 1);
      }
      float* o = out.channel_ptr(i, j);
      for (int ch = 0; ch < y.d; ++ch) {
        double acc = 0.0;
        for (int r = 0; r < 4; ++r) {
          const double wr = wy[r];
          if (wr == 0.0) continue;
          double row = 0.0;
          for (int c = 0; c < 4; ++c) {
            row += wx[c] * y.channel_ptr(ri[r], ci[c])[ch];
          }
          acc += wr * row;
        }
        o[ch] = static_cast<float>(acc);
      }
    }
  }
  return out;
}

FeatureMap upsample(const FeatureMap& y, int target_h, int target_w,
                    UpsampleMode mode) {
  switch (mode) {
    case UpsampleMode::Nearest:
      return upsample_nearest(y, target_h, target_w);
    case UpsampleMode::Bilinear:
      return upsample_bilinear(y, target_h, target_w);
    case UpsampleMode::Bicubic:
      return upsample_bicubic(y, target_h, target_w);
  }
  throw std::invalid_argument("upsample: unknown mode");
}

bool should_prune(int global_block_idx, int layer_idx, int block_in_layer,
                  int first_layer_depth, const QuarterMapConfig& cfg) {
  cfg.validate();
  (void)block_in_layer;
  if (cfg.skip_policy == SkipPolicy::ExcludeFirstLayer) {
    if (layer_idx == 1) return false;
    const int e = global_block_idx - first_layer_depth;
    return e % cfg.k == cfg.k - 1;
  }
  // ExcludeFirstTwoBlocks
  if (global_block_idx < 2) return false;
  const int e = global_block_idx - 2;
  return e % cfg.k == cfg.k - 1;
}

FeatureMap quartermap_ss2d(const FeatureMap& x, const Ss2dParams& p,
                           const QuarterMapConfig& cfg, BlockProfile* prof) {
  cfg.validate();
  auto t0 = Clock::now();
  FeatureMap small = prune(x, cfg.m, cfg.n);
  double pu_ms = ms_since(t0);

  FeatureMap y = ss2d_forward(small, p, prof);

  t0 = Clock::now();
  FeatureMap out = upsample(y, x.h, x.w, cfg.upsample);
  pu_ms += ms_since(t0);

  if (prof != nullptr) prof->prune_upsample_ms += pu_ms;
  return out;
}

}  // namespace qm
