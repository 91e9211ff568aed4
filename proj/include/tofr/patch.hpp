#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tofr/depth_map.hpp"
#include "tofr/tensor.hpp"

namespace tofr {

inline constexpr int kPatchSize = 15;
inline constexpr int kPatchRadius = kPatchSize / 2;
inline constexpr int kQuarterStride = 4;
/// Half-width of the quarter-resolution window: 4 * 7 = 28, i.e. a 57x57 span.
inline constexpr int kQuarterRadius = kQuarterStride * kPatchRadius;
/// Depth channels and targets enter the network in metres.
inline constexpr float kDepthScale = 1e-3f;

/// Channel layouts:
///   multi-scale:  [A full, A quarter, B full, B quarter]
///   single-scale: [A full, B full]
/// A = raw - background, B = raw inside the object mask and 0 elsewhere.
enum class PatchLayout { kMultiScale, kSingleScale };

int channel_count(PatchLayout layout) noexcept;
PatchLayout layout_for_channels(int channels);

/// One registered capture: raw ToF depth, background-only depth, ground
/// truth and the object mask. All grids share one size.
struct SceneSample {
  std::string name;
  DepthMap raw;
  DepthMap background;
  DepthMap ground_truth;  // may be empty (0x0) for inference-only scenes
  Mask mask;
  nlohmann::json meta = nlohmann::json::object();

  bool has_ground_truth() const noexcept { return ground_truth.width > 0; }
  /// Throws ErrorKind::kData on mismatched sizes or GT holes under the mask.
  void validate(bool require_ground_truth) const;
};

struct PatchTensor {
  Tensor values;
  int center_x = 0;
  int center_y = 0;
  float target_mm = 0.0f;
  bool has_target = false;

  float normalized_target() const noexcept { return target_mm * kDepthScale; }
};

/// Precomputed, normalised A and B images for one scene.
class PatchSource {
 public:
  PatchSource(const DepthMap& raw, const DepthMap& background, const Mask& mask);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  /// Out-of-image taps clamp to the nearest edge pixel.
  PatchTensor extract(int cx, int cy, PatchLayout layout) const;

 private:
  int width_;
  int height_;
  std::vector<float> diff_;    // A, normalised
  std::vector<float> masked_;  // B, normalised
};

PatchTensor extract_patch(const SceneSample& sample, int cx, int cy,
                          PatchLayout layout = PatchLayout::kMultiScale);

/// Mirrors every channel about the vertical axis; target and centre stay.
PatchTensor flip_horizontal(const PatchTensor& patch);

struct TrainingSetOptions {
  bool flip = true;
  /// Keep masked pixels with x % stride == 0 and y % stride == 0. 1 = every
  /// masked pixel.
  int pixel_stride = 1;
  std::uint64_t seed = 0;
  PatchLayout layout = PatchLayout::kMultiScale;
};

/// Lazily extracted, seed-shuffled patch stream over a set of scenes.
class TrainingSet {
 public:
  struct Entry {
    std::uint32_t scene;
    std::uint16_t x;
    std::uint16_t y;
    bool flipped;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  TrainingSet(std::span<const SceneSample> samples, const TrainingSetOptions& options);

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  PatchLayout layout() const noexcept { return options_.layout; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  PatchTensor patch(std::size_t i) const;

  /// Number of patches the options would produce, without building sources.
  static std::size_t count(std::span<const SceneSample> samples, const TrainingSetOptions& options);

 private:
  TrainingSetOptions options_;
  std::vector<PatchSource> sources_;
  std::vector<DepthMap> targets_;
  std::vector<Entry> entries_;
};

/// Adds i.i.d. N(0, sigma^2) to every valid pixel; invalid pixels are left
/// alone. Depth is floored at 1 mm so valid pixels stay valid.
DepthMap add_gaussian_noise(const DepthMap& map, double sigma_mm, std::uint64_t seed);

}  // namespace tofr
