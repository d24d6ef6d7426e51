#include "qm/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace qm {

namespace {

void check_positive(int v, const char* axis, const char* where) {
  if (v < 1) {
    throw std::invalid_argument(std::string(where) + ": " + axis +
                                " must be >= 1, got " + std::to_string(v));
  }
}

[[noreturn]] void throw_axis(const char* where, const char* axis, int idx,
                             int extent) {
  throw std::out_of_range(std::string(where) + ": " + axis + " index " +
                          std::to_string(idx) + " outside [0, " +
                          std::to_string(extent) + ")");
}

}  // namespace

FeatureMap::FeatureMap(int h_, int w_, int d_) : h(h_), w(w_), d(d_) {
  check_positive(h, "h", "FeatureMap");
  check_positive(w, "w", "FeatureMap");
  check_positive(d, "d", "FeatureMap");
  data.assign(static_cast<std::size_t>(h) * w * d, 0.0f);
}

float FeatureMap::get(int i, int j, int c) const {
  if (i < 0 || i >= h) throw_axis("FeatureMap::get", "row", i, h);
  if (j < 0 || j >= w) throw_axis("FeatureMap::get", "col", j, w);
  if (c < 0 || c >= d) throw_axis("FeatureMap::get", "channel", c, d);
  return data[flat_index(i, j, c)];
}

void FeatureMap::set(int i, int j, int c, float v) {
  if (i < 0 || i >= h) throw_axis("FeatureMap::set", "row", i, h);
  if (j < 0 || j >= w) throw_axis("FeatureMap::set", "col", j, w);
  if (c < 0 || c >= d) throw_axis("FeatureMap::set", "channel", c, d);
  data[flat_index(i, j, c)] = v;
}

bool FeatureMap::all_finite() const {
  for (float v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Sequence::Sequence(int len_, int d_) : len(len_), d(d_) {
  check_positive(len, "len", "Sequence");
  check_positive(d, "d", "Sequence");
  data.assign(static_cast<std::size_t>(len) * d, 0.0f);
}

float Sequence::get(int t, int c) const {
  if (t < 0 || t >= len) throw_axis("Sequence::get", "time", t, len);
  if (c < 0 || c >= d) throw_axis("Sequence::get", "channel", c, d);
  return data[static_cast<std::size_t>(t) * d + c];
}

void Sequence::set(int t, int c, float v) {
  if (t < 0 || t >= len) throw_axis("Sequence::set", "time", t, len);
  if (c < 0 || c >= d) throw_axis("Sequence::set", "channel", c, d);
  data[static_cast<std::size_t>(t) * d + c] = v;
}

bool Sequence::all_finite() const {
  for (float v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::uint64_t SeededRng::next_u64() {
  state_ += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

float SeededRng::next_unit() {
  return static_cast<float>(next_u64() >> 40) * (1.0f / 16777216.0f);
}

float SeededRng::next_symmetric() { return 2.0f * next_unit() - 1.0f; }

FeatureMap fill_seeded(int h, int w, int d, std::uint64_t seed) {
  FeatureMap out(h, w, d);
  SeededRng rng(seed);
  for (float& v : out.data) v = rng.next_symmetric();
  return out;
}

namespace {

constexpr char kMagic[4] = {'Q', 'M', 'A', 'P'};

void put_u32le(std::FILE* f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  if (std::fwrite(b, 1, 4, f) != 4) {
    throw std::runtime_error("qmap: short write");
  }
}

std::uint32_t get_u32le(std::FILE* f, const std::string& path) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4) {
    throw std::runtime_error("qmap: truncated header in " + path);
  }
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_qmap(const std::string& path, const FeatureMap& map) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("qmap: cannot open " + path + " for write");
  if (std::fwrite(kMagic, 1, 4, f.get()) != 4) {
    throw std::runtime_error("qmap: short write");
  }
  put_u32le(f.get(), static_cast<std::uint32_t>(map.h));
  put_u32le(f.get(), static_cast<std::uint32_t>(map.w));
  put_u32le(f.get(), static_cast<std::uint32_t>(map.d));
  for (float v : map.data) {
    put_u32le(f.get(), std::bit_cast<std::uint32_t>(v));
  }
}

FeatureMap read_qmap(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("qmap: cannot open " + path);
  char magic[4];
  if (std::fread(magic, 1, 4, f.get()) != 4 ||
      std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("qmap: bad magic in " + path);
  }
  const auto h = get_u32le(f.get(), path);
  const auto w = get_u32le(f.get(), path);
  const auto d = get_u32le(f.get(), path);
  FeatureMap out(static_cast<int>(h), static_cast<int>(w),
                 static_cast<int>(d));
  for (float& v : out.data) {
    v = std::bit_cast<float>(get_u32le(f.get(), path));
  }
  return out;
}

}  // namespace qm
