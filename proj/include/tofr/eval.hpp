#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tofr/depth_map.hpp"
#include "tofr/network.hpp"
#include "tofr/patch.hpp"

namespace tofr {

enum class InferenceBatching {
  kArbitrary,     // masked pixels in raster order, `batch_size` at a time
  kVerticalLine,  // one batch per image column
  kPixelAtATime,
};

const char* to_string(InferenceBatching b);
InferenceBatching inference_batching_from_string(const std::string& name);

struct InferenceOptions {
  InferenceBatching batching = InferenceBatching::kArbitrary;
  int batch_size = 256;
};

/// Restores every masked pixel from its patch; unmasked pixels are copied from
/// raw unchanged. Throws ErrorKind::kData when the three grids disagree in size.
DepthMap infer_depth_map(const Network<float>& network, const DepthMap& raw, const DepthMap& background,
                         const Mask& mask, const InferenceOptions& options = {});

/// Where the 3x3 window gets its values at the mask border.
enum class MedianBorder {
  kComposite,   // any valid pixel of the map (restored inside, raw outside)
  kMaskedOnly,  // only valid pixels inside the mask
};

const char* to_string(MedianBorder b);
MedianBorder median_border_from_string(const std::string& name);

/// Each masked pixel becomes the median of the valid values in its
/// edge-clamped 3x3 window (lower median for even counts); other pixels are
/// copied.
DepthMap median_filter_3x3(const DepthMap& map, const Mask& mask,
                           MedianBorder border = MedianBorder::kMaskedOnly);

struct MetricsReport {
  double rms = 0.0;    // mm
  double rel = 0.0;
  double log10 = 0.0;
  std::size_t pixel_count = 0;
  nlohmann::json config = nlohmann::json::object();

  nlohmann::json to_json() const;
};

/// Pools pixels over several maps before reducing, so multi-scene reports
/// weight every pixel equally.
class MetricsAccumulator {
 public:
  /// Adds T = mask & valid(raw) & valid(gt). Throws ErrorKind::kData on size
  /// mismatch and ErrorKind::kNumeric naming the pixel when pred or gt is not
  /// positive inside T.
  void add(const DepthMap& pred, const DepthMap& gt, const DepthMap& raw, const Mask& mask);
  std::size_t count() const noexcept { return count_; }
  /// Throws ErrorKind::kData when no pixel was added.
  MetricsReport report() const;

 private:
  double sq_ = 0.0;
  double rel_ = 0.0;
  double log_ = 0.0;
  std::size_t count_ = 0;
};

MetricsReport compute_metrics(const DepthMap& pred, const DepthMap& gt, const DepthMap& raw,
                              const Mask& mask);

/// "planar", "round" or "unknown", from the scene metadata.
std::string scene_class_of(const SceneSample& scene);

struct EvalOptions {
  InferenceOptions inference;
  bool median_filter = false;
  MedianBorder median_border = MedianBorder::kMaskedOnly;
};

/// Restores and scores a set of scenes, pooling all pixels.
MetricsReport evaluate_scenes(const Network<float>& network, std::span<const SceneSample> scenes,
                              const EvalOptions& options = {});
/// Metrics of raw against ground truth.
MetricsReport evaluate_raw(std::span<const SceneSample> scenes);

struct NoiseSweepRow {
  double sigma_mm = 0.0;
  MetricsReport metrics;
};

/// For each sigma, adds N(0, sigma^2) to every raw map, restores without any
/// post-filter and scores against the clean ground truth. The perturbation of
/// scene j at sigma i is seeded by (seed, i, j).
std::vector<NoiseSweepRow> noise_sweep(const Network<float>& network, std::span<const SceneSample> scenes,
                                       std::span<const double> sigmas, std::uint64_t seed,
                                       const InferenceOptions& inference = {});
/// Columns: sigma,rms,rel,log10,pixels
std::string noise_sweep_csv(std::span<const NoiseSweepRow> rows);

struct NamedModel {
  std::string name;
  const Network<float>* network = nullptr;
};

struct ComparisonRow {
  std::string model;        // "raw" for the uncorrected input
  std::string scene_class;  // planar / round
  bool filtered = false;
  MetricsReport metrics;
};

/// Per scene class: one raw row, then an unfiltered and a filtered row per model.
std::vector<ComparisonRow> compare_variants(std::span<const SceneSample> scenes, std::span<const NamedModel> models,
                                            const EvalOptions& options = {});
/// Columns: model,class,postfilter,rms,rel,log10,pixels
std::string comparison_csv(std::span<const ComparisonRow> rows);

}  // namespace tofr
