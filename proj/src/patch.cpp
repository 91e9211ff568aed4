#include "tofr/patch.hpp"

#include <algorithm>
#include <random>

#include "tofr/random.hpp"

namespace tofr {

int channel_count(PatchLayout layout) noexcept {
  return layout == PatchLayout::kMultiScale ? 4 : 2;
}

PatchLayout layout_for_channels(int channels) {
  if (channels == 4) return PatchLayout::kMultiScale;
  if (channels == 2) return PatchLayout::kSingleScale;
  throw Error(ErrorKind::kConfig, "no patch layout with " + std::to_string(channels) + " channels");
}

void SceneSample::validate(bool require_ground_truth) const {
  const int w = raw.width, h = raw.height;
  auto check = [&](int ow, int oh, const char* what) {
    if (ow != w || oh != h) {
      throw Error(ErrorKind::kData, "scene " + name + ": " + what + " is " + std::to_string(ow) + "x" +
                                        std::to_string(oh) + ", raw is " + std::to_string(w) + "x" +
                                        std::to_string(h));
    }
  };
  check(background.width, background.height, "background");
  check(mask.width, mask.height, "mask");
  if (has_ground_truth()) {
    check(ground_truth.width, ground_truth.height, "ground truth");
  } else if (require_ground_truth) {
    throw Error(ErrorKind::kData, "scene " + name + " has no ground truth");
  }
}

PatchSource::PatchSource(const DepthMap& raw, const DepthMap& background, const Mask& mask)
    : width_(raw.width), height_(raw.height) {
  if (!background.same_size(width_, height_) || mask.width != width_ || mask.height != height_) {
    throw Error(ErrorKind::kData, "raw, background and mask sizes differ");
  }
  const std::size_t n = raw.depth.size();
  diff_.assign(n, 0.0f);
  masked_.assign(n, 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    if (raw.valid[i] && background.valid[i]) diff_[i] = (raw.depth[i] - background.depth[i]) * kDepthScale;
    if (raw.valid[i] && mask.bits[i]) masked_[i] = raw.depth[i] * kDepthScale;
  }
}

PatchTensor PatchSource::extract(int cx, int cy, PatchLayout layout) const {
  if (cx < 0 || cy < 0 || cx >= width_ || cy >= height_) {
    throw Error(ErrorKind::kData, "patch centre outside the image");
  }
  const int channels = channel_count(layout);
  PatchTensor patch;
  patch.values = Tensor(Shape{kPatchSize, kPatchSize, channels});
  patch.center_x = cx;
  patch.center_y = cy;
  auto clamp_x = [&](int x) { return std::clamp(x, 0, width_ - 1); };
  auto clamp_y = [&](int y) { return std::clamp(y, 0, height_ - 1); };
  for (int py = 0; py < kPatchSize; ++py) {
    const int dy = py - kPatchRadius;
    const std::size_t row_full = static_cast<std::size_t>(clamp_y(cy + dy)) * width_;
    const std::size_t row_quarter = static_cast<std::size_t>(clamp_y(cy + kQuarterStride * dy)) * width_;
    for (int px = 0; px < kPatchSize; ++px) {
      const int dx = px - kPatchRadius;
      const std::size_t full = row_full + clamp_x(cx + dx);
      const std::size_t quarter = row_quarter + clamp_x(cx + kQuarterStride * dx);
      float* dst = patch.values.data() + patch.values.index(py, px, 0);
      if (layout == PatchLayout::kMultiScale) {
        dst[0] = diff_[full];
        dst[1] = diff_[quarter];
        dst[2] = masked_[full];
        dst[3] = masked_[quarter];
      } else {
        dst[0] = diff_[full];
        dst[1] = masked_[full];
      }
    }
  }
  return patch;
}

PatchTensor extract_patch(const SceneSample& sample, int cx, int cy, PatchLayout layout) {
  sample.validate(false);
  PatchTensor patch = PatchSource(sample.raw, sample.background, sample.mask).extract(cx, cy, layout);
  if (sample.has_ground_truth() && sample.ground_truth.is_valid(cx, cy)) {
    patch.target_mm = sample.ground_truth.at(cx, cy);
    patch.has_target = true;
  }
  return patch;
}

PatchTensor flip_horizontal(const PatchTensor& patch) {
  PatchTensor out = patch;
  const Tensor& in = patch.values;
  for (int y = 0; y < in.height(); ++y)
    for (int x = 0; x < in.width(); ++x)
      for (int c = 0; c < in.channels(); ++c) out.values.at(y, in.width() - 1 - x, c) = in.at(y, x, c);
  return out;
}

namespace {

template <typename Fn>
void for_each_training_pixel(const SceneSample& s, int stride, Fn&& fn) {
  for (int y = 0; y < s.mask.height; y += stride) {
    for (int x = 0; x < s.mask.width; x += stride) {
      if (s.mask(x, y) && s.ground_truth.is_valid(x, y)) fn(x, y);
    }
  }
}

bool usable(const SceneSample& s) {
  s.validate(false);
  if (!s.has_ground_truth()) {
    warn("scene " + s.name + " has no ground truth; skipped");
    return false;
  }
  return true;
}

}  // namespace

TrainingSet::TrainingSet(std::span<const SceneSample> samples, const TrainingSetOptions& options)
    : options_(options) {
  if (options.pixel_stride < 1) throw Error(ErrorKind::kConfig, "pixel_stride must be >= 1");
  for (const auto& s : samples) {
    if (!usable(s)) continue;
    if (s.raw.width > 65535 || s.raw.height > 65535) throw Error(ErrorKind::kData, "image too large");
    const auto scene = static_cast<std::uint32_t>(sources_.size());
    sources_.emplace_back(s.raw, s.background, s.mask);
    targets_.push_back(s.ground_truth);
    for_each_training_pixel(s, options.pixel_stride, [&](int x, int y) {
      entries_.push_back({scene, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), false});
      if (options.flip) {
        entries_.push_back({scene, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), true});
      }
    });
  }
  std::mt19937_64 rng(derive_seed(options.seed, {0x73687566}));
  std::shuffle(entries_.begin(), entries_.end(), rng);
}

PatchTensor TrainingSet::patch(std::size_t i) const {
  const Entry& e = entries_.at(i);
  PatchTensor p = sources_[e.scene].extract(e.x, e.y, options_.layout);
  p.target_mm = targets_[e.scene].at(e.x, e.y);
  p.has_target = true;
  return e.flipped ? flip_horizontal(p) : p;
}

std::size_t TrainingSet::count(std::span<const SceneSample> samples, const TrainingSetOptions& options) {
  if (options.pixel_stride < 1) throw Error(ErrorKind::kConfig, "pixel_stride must be >= 1");
  std::size_t n = 0;
  for (const auto& s : samples) {
    if (!usable(s)) continue;
    for_each_training_pixel(s, options.pixel_stride, [&](int, int) { n += options.flip ? 2 : 1; });
  }
  return n;
}

DepthMap add_gaussian_noise(const DepthMap& map, double sigma_mm, std::uint64_t seed) {
  if (!(sigma_mm >= 0.0)) throw Error(ErrorKind::kConfig, "noise sigma must be >= 0");
  DepthMap out = map;
  if (sigma_mm == 0.0) return out;
  std::mt19937_64 rng(derive_seed(seed, {0x6e6f697365}));
  std::normal_distribution<double> noise(0.0, sigma_mm);
  for (std::size_t i = 0; i < out.depth.size(); ++i) {
    if (!out.valid[i]) continue;
    out.depth[i] = static_cast<float>(std::max(1.0, static_cast<double>(out.depth[i]) + noise(rng)));
  }
  return out;
}

}  // namespace tofr
