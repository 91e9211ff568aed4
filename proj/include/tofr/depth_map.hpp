#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tofr/errors.hpp"

namespace tofr {

/// Per-pixel boolean grid (object masks).
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int w, int h, bool value = false)
      : width(w), height(h), bits(static_cast<std::size_t>(w) * h, value ? 1 : 0) {}

  bool operator()(int x, int y) const noexcept { return bits[index(x, y)] != 0; }
  void set(int x, int y, bool v) noexcept { bits[index(x, y)] = v ? 1 : 0; }
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * width + x;
  }
  std::size_t count() const noexcept;
  friend bool operator==(const Mask&, const Mask&) = default;
};

/// Depth image in millimetres with a validity flag per pixel. Valid pixels
/// hold depth > 0; invalid pixels hold 0.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> depth;
  std::vector<std::uint8_t> valid;

  DepthMap() = default;
  DepthMap(int w, int h)
      : width(w), height(h), depth(static_cast<std::size_t>(w) * h, 0.0f),
        valid(static_cast<std::size_t>(w) * h, 0) {}

  static DepthMap filled(int w, int h, float value);

  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * width + x;
  }
  float at(int x, int y) const noexcept { return depth[index(x, y)]; }
  bool is_valid(int x, int y) const noexcept { return valid[index(x, y)] != 0; }
  /// Stores a measurement; depth <= 0 marks the pixel invalid.
  void set(int x, int y, float d) noexcept {
    const std::size_t i = index(x, y);
    valid[i] = d > 0.0f ? 1 : 0;
    depth[i] = d > 0.0f ? d : 0.0f;
  }
  void invalidate(int x, int y) noexcept { set(x, y, 0.0f); }
  bool same_size(int w, int h) const noexcept { return width == w && height == h; }
  friend bool operator==(const DepthMap&, const DepthMap&) = default;
};

/// Binary P5, maxval 65535, big-endian samples, value = mm, 0 = invalid.
/// Valid depths are rounded to the nearest millimetre (minimum 1).
void write_depth_pgm(const DepthMap& map, const std::filesystem::path& path);
DepthMap read_depth_pgm(const std::filesystem::path& path);

/// Binary P5, maxval 255, 0 / 255.
void write_mask_pgm(const Mask& mask, const std::filesystem::path& path);
Mask read_mask_pgm(const std::filesystem::path& path);

}  // namespace tofr
