#include "tofr/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "tofr/errors.hpp"
#include "tofr/random.hpp"

namespace tofr {

using nlohmann::json;

const char* to_string(InferenceBatching b) {
  switch (b) {
    case InferenceBatching::kArbitrary: return "arbitrary";
    case InferenceBatching::kVerticalLine: return "vertical_line";
    case InferenceBatching::kPixelAtATime: return "pixel";
  }
  return "arbitrary";
}

InferenceBatching inference_batching_from_string(const std::string& name) {
  if (name == "arbitrary") return InferenceBatching::kArbitrary;
  if (name == "vertical_line") return InferenceBatching::kVerticalLine;
  if (name == "pixel") return InferenceBatching::kPixelAtATime;
  throw Error(ErrorKind::kConfig, "unknown inference batching '" + name + "'");
}

const char* to_string(MedianBorder b) {
  return b == MedianBorder::kComposite ? "composite" : "masked_only";
}

MedianBorder median_border_from_string(const std::string& name) {
  if (name == "composite") return MedianBorder::kComposite;
  if (name == "masked_only") return MedianBorder::kMaskedOnly;
  throw Error(ErrorKind::kConfig, "unknown median border policy '" + name + "'");
}

namespace {

void require_same_size(const DepthMap& a, const char* an, int w, int h, const char* what) {
  if (!a.same_size(w, h)) {
    throw Error(ErrorKind::kData, std::string(what) + ": " + an + " is " + std::to_string(a.width) + "x" +
                                      std::to_string(a.height) + " but expected " + std::to_string(w) + "x" +
                                      std::to_string(h));
  }
}

}  // namespace

DepthMap infer_depth_map(const Network<float>& network, const DepthMap& raw, const DepthMap& background,
                         const Mask& mask, const InferenceOptions& options) {
  const int w = raw.width, h = raw.height;
  require_same_size(background, "background", w, h, "infer");
  if (mask.width != w || mask.height != h) {
    throw Error(ErrorKind::kData, "infer: mask is " + std::to_string(mask.width) + "x" +
                                      std::to_string(mask.height) + " but raw is " + std::to_string(w) + "x" +
                                      std::to_string(h));
  }
  if (options.batch_size <= 0) throw Error(ErrorKind::kConfig, "infer: batch_size must be positive");
  const PatchLayout layout = layout_for_channels(network.config().input_channels);

  DepthMap out = raw;
  if (mask.count() == 0) return out;
  const PatchSource source(raw, background, mask);

  std::vector<std::vector<std::array<int, 2>>> batches;
  switch (options.batching) {
    case InferenceBatching::kArbitrary:
    case InferenceBatching::kPixelAtATime: {
      const std::size_t cap = options.batching == InferenceBatching::kPixelAtATime
                                  ? 1
                                  : static_cast<std::size_t>(options.batch_size);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          if (!mask(x, y)) continue;
          if (batches.empty() || batches.back().size() == cap) batches.emplace_back();
          batches.back().push_back({x, y});
        }
      break;
    }
    case InferenceBatching::kVerticalLine:
      for (int x = 0; x < w; ++x) {
        std::vector<std::array<int, 2>> column;
        for (int y = 0; y < h; ++y)
          if (mask(x, y)) column.push_back({x, y});
        if (!column.empty()) batches.push_back(std::move(column));
      }
      break;
  }

  std::vector<Tensor> inputs;
  for (const auto& batch : batches) {
    inputs.clear();
    for (const auto& [x, y] : batch) inputs.push_back(source.extract(x, y, layout).values);
    const auto pred = network.forward_batch(inputs);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      out.set(batch[i][0], batch[i][1], pred[i] / kDepthScale);
    }
  }
  return out;
}

DepthMap median_filter_3x3(const DepthMap& map, const Mask& mask, MedianBorder border) {
  if (mask.width != map.width || mask.height != map.height) {
    throw Error(ErrorKind::kData, "median filter: mask and map sizes differ");
  }
  DepthMap out = map;
  std::array<float, 9> window{};
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      if (!mask(x, y)) continue;
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int sx = std::clamp(x + dx, 0, map.width - 1);
          const int sy = std::clamp(y + dy, 0, map.height - 1);
          if (!map.is_valid(sx, sy)) continue;
          if (border == MedianBorder::kMaskedOnly && !mask(sx, sy)) continue;
          window[n++] = map.at(sx, sy);
        }
      }
      if (n == 0) continue;
      const int mid = (n - 1) / 2;
      std::nth_element(window.begin(), window.begin() + mid, window.begin() + n);
      out.set(x, y, window[mid]);
    }
  }
  return out;
}

json MetricsReport::to_json() const {
  return {{"rms", rms}, {"rel", rel}, {"log10", log10}, {"pixel_count", pixel_count}, {"config", config}};
}

void MetricsAccumulator::add(const DepthMap& pred, const DepthMap& gt, const DepthMap& raw, const Mask& mask) {
  const int w = gt.width, h = gt.height;
  require_same_size(pred, "prediction", w, h, "metrics");
  require_same_size(raw, "raw", w, h, "metrics");
  if (mask.width != w || mask.height != h) throw Error(ErrorKind::kData, "metrics: mask size differs from gt");
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask(x, y) || !raw.is_valid(x, y) || !gt.is_valid(x, y)) continue;
      const double d = gt.at(x, y);
      const double p = pred.is_valid(x, y) ? pred.at(x, y) : 0.0;
      if (!(d > 0.0) || !(p > 0.0) || !std::isfinite(p)) {
        throw Error(ErrorKind::kNumeric, "metrics: non-positive depth at pixel (" + std::to_string(x) + ", " +
                                             std::to_string(y) + "): prediction " + std::to_string(p) +
                                             ", ground truth " + std::to_string(d));
      }
      const double e = p - d;
      sq_ += e * e;
      rel_ += std::abs(e) / d;
      log_ += std::abs(std::log10(p) - std::log10(d));
      ++count_;
    }
  }
}

MetricsReport MetricsAccumulator::report() const {
  if (count_ == 0) throw Error(ErrorKind::kData, "metrics: the translucent pixel set is empty");
  const double n = static_cast<double>(count_);
  MetricsReport r;
  r.rms = std::sqrt(sq_ / n);
  r.rel = rel_ / n;
  r.log10 = log_ / n;
  r.pixel_count = count_;
  return r;
}

MetricsReport compute_metrics(const DepthMap& pred, const DepthMap& gt, const DepthMap& raw, const Mask& mask) {
  MetricsAccumulator acc;
  acc.add(pred, gt, raw, mask);
  return acc.report();
}

std::string scene_class_of(const SceneSample& scene) {
  if (scene.meta.is_object() && scene.meta.contains("class") && scene.meta["class"].is_string()) {
    return scene.meta["class"].get<std::string>();
  }
  return "unknown";
}

namespace {

void check_scenes(std::span<const SceneSample> scenes) {
  for (const auto& s : scenes) s.validate(true);
}

void add_restored(MetricsAccumulator& plain, MetricsAccumulator* filtered, const Network<float>& network,
                  const SceneSample& s, const DepthMap& raw, const EvalOptions& options) {
  const DepthMap pred = infer_depth_map(network, raw, s.background, s.mask, options.inference);
  plain.add(pred, s.ground_truth, raw, s.mask);
  if (filtered) filtered->add(median_filter_3x3(pred, s.mask, options.median_border), s.ground_truth, raw, s.mask);
}

json options_json(const EvalOptions& o) {
  return {{"batching", to_string(o.inference.batching)},
          {"batch_size", o.inference.batch_size},
          {"median_filter", o.median_filter},
          {"median_border", to_string(o.median_border)}};
}

}  // namespace

MetricsReport evaluate_scenes(const Network<float>& network, std::span<const SceneSample> scenes,
                              const EvalOptions& options) {
  check_scenes(scenes);
  MetricsAccumulator plain, filtered;
  for (const auto& s : scenes) add_restored(plain, &filtered, network, s, s.raw, options);
  MetricsReport r = options.median_filter ? filtered.report() : plain.report();
  r.config = options_json(options);
  r.config["scenes"] = scenes.size();
  return r;
}

MetricsReport evaluate_raw(std::span<const SceneSample> scenes) {
  check_scenes(scenes);
  MetricsAccumulator acc;
  for (const auto& s : scenes) acc.add(s.raw, s.ground_truth, s.raw, s.mask);
  MetricsReport r = acc.report();
  r.config = {{"model", "raw"}, {"scenes", scenes.size()}};
  return r;
}

std::vector<NoiseSweepRow> noise_sweep(const Network<float>& network, std::span<const SceneSample> scenes,
                                       std::span<const double> sigmas, std::uint64_t seed,
                                       const InferenceOptions& inference) {
  check_scenes(scenes);
  for (double s : sigmas) {
    if (!(s >= 0.0)) throw Error(ErrorKind::kConfig, "noise sweep: sigma must be >= 0");
  }
  EvalOptions options;
  options.inference = inference;
  std::vector<NoiseSweepRow> rows;
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    MetricsAccumulator acc;
    for (std::size_t j = 0; j < scenes.size(); ++j) {
      const auto& s = scenes[j];
      const DepthMap noisy = add_gaussian_noise(s.raw, sigmas[i], derive_seed(seed, {i, j}));
      add_restored(acc, nullptr, network, s, noisy, options);
    }
    NoiseSweepRow row{sigmas[i], acc.report()};
    row.metrics.config = {{"sigma_mm", sigmas[i]}, {"median_filter", false}, {"seed", seed}};
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::string noise_sweep_csv(std::span<const NoiseSweepRow> rows) {
  std::ostringstream out;
  out << "sigma,rms,rel,log10,pixels\n";
  for (const auto& r : rows) {
    out << fmt(r.sigma_mm) << ',' << fmt(r.metrics.rms) << ',' << fmt(r.metrics.rel) << ','
        << fmt(r.metrics.log10) << ',' << r.metrics.pixel_count << '\n';
  }
  return out.str();
}

std::vector<ComparisonRow> compare_variants(std::span<const SceneSample> scenes, std::span<const NamedModel> models,
                                            const EvalOptions& options) {
  check_scenes(scenes);
  std::vector<std::string> classes;
  for (const auto& s : scenes) {
    const std::string c = scene_class_of(s);
    if (std::find(classes.begin(), classes.end(), c) == classes.end()) classes.push_back(c);
  }
  std::sort(classes.begin(), classes.end());

  std::vector<ComparisonRow> rows;
  for (const auto& cls : classes) {
    std::vector<SceneSample> subset;
    for (const auto& s : scenes)
      if (scene_class_of(s) == cls) subset.push_back(s);
    ComparisonRow raw_row{"raw", cls, false, evaluate_raw(subset)};
    rows.push_back(std::move(raw_row));
    for (const auto& m : models) {
      if (!m.network) throw Error(ErrorKind::kConfig, "compare: model '" + m.name + "' has no network");
      MetricsAccumulator plain, filtered;
      for (const auto& s : subset) add_restored(plain, &filtered, *m.network, s, s.raw, options);
      ComparisonRow a{m.name, cls, false, plain.report()};
      ComparisonRow b{m.name, cls, true, filtered.report()};
      a.metrics.config = options_json(options);
      b.metrics.config = options_json(options);
      rows.push_back(std::move(a));
      rows.push_back(std::move(b));
    }
  }
  return rows;
}

std::string comparison_csv(std::span<const ComparisonRow> rows) {
  std::ostringstream out;
  out << "model,class,postfilter,rms,rel,log10,pixels\n";
  for (const auto& r : rows) {
    out << r.model << ',' << r.scene_class << ',' << (r.filtered ? "median3x3" : "none") << ','
        << fmt(r.metrics.rms) << ',' << fmt(r.metrics.rel) << ',' << fmt(r.metrics.log10) << ','
        << r.metrics.pixel_count << '\n';
  }
  return out.str();
}

}  // namespace tofr
