#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace qm {

/// Dense H x W x D activation map. Row-major with the channel axis fastest:
/// data[(i * w + j) * d + c]. Treated as immutable once built; mutation is
/// confined to construction helpers and set().
struct FeatureMap {
  int h = 0;
  int w = 0;
  int d = 0;
  std::vector<float> data;

  FeatureMap() = default;
  FeatureMap(int h, int w, int d);

  std::size_t flat_index(int i, int j, int c) const {
    return (static_cast<std::size_t>(i) * w + j) * d + c;
  }

  float get(int i, int j, int c) const;
  void set(int i, int j, int c, float v);

  // Unchecked pointer to the d channel values at spatial position (i, j).
  const float* channel_ptr(int i, int j) const {
    return data.data() + (static_cast<std::size_t>(i) * w + j) * d;
  }
  float* channel_ptr(int i, int j) {
    return data.data() + (static_cast<std::size_t>(i) * w + j) * d;
  }

  std::size_t size() const { return data.size(); }
  bool all_finite() const;
};

/// Time-major sequence of L channel vectors: data[t * d + c].
struct Sequence {
  int len = 0;
  int d = 0;
  std::vector<float> data;

  Sequence() = default;
  Sequence(int len, int d);

  float get(int t, int c) const;
  void set(int t, int c, float v);

  const float* step_ptr(int t) const {
    return data.data() + static_cast<std::size_t>(t) * d;
  }
  float* step_ptr(int t) {
    return data.data() + static_cast<std::size_t>(t) * d;
  }

  bool all_finite() const;
};

/// SplitMix64 stream with a fixed 24-bit mantissa recipe for floats, so the
/// same seed yields bit-identical values on every platform. See README for
/// the exact recipe.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  // Uniform in [0, 1), exactly representable (top 24 bits / 2^24).
  float next_unit();

  // Uniform in [-1, 1).
  float next_symmetric();

 private:
  std::uint64_t state_;
};

/// Deterministic pseudo-random map with entries in [-1, 1).
FeatureMap fill_seeded(int h, int w, int d, std::uint64_t seed);

// Binary fixture format: 16-byte header (magic "QMAP", u32 h, u32 w, u32 d,
// little-endian) followed by h*w*d little-endian 32-bit floats.
void write_qmap(const std::string& path, const FeatureMap& map);
FeatureMap read_qmap(const std::string& path);

}  // namespace qm
