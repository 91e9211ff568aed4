#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"
#include "tofr/patch.hpp"
#include "tofr/synth.hpp"

namespace tofr {
namespace {

using testing::TempDir;

SceneSample ramp_scene(int w, int h) {
  SceneSample s;
  s.name = "ramp";
  s.raw = DepthMap(w, h);
  s.background = DepthMap(w, h);
  s.ground_truth = DepthMap(w, h);
  s.mask = Mask(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      s.raw.set(x, y, 1000.0f + 3.0f * x + 1000.0f * y);
      s.background.set(x, y, 2000.0f + x);
      s.ground_truth.set(x, y, 900.0f + x);
    }
  return s;
}

TEST(Patch, EqualRawAndBackgroundGiveZeroDifference) {
  SceneSample s = ramp_scene(40, 40);
  s.background = s.raw;
  const auto p = extract_patch(s, 20, 20);
  for (int y = 0; y < kPatchSize; ++y)
    for (int x = 0; x < kPatchSize; ++x) {
      EXPECT_EQ(p.values.at(y, x, 0), 0.0f);
      EXPECT_EQ(p.values.at(y, x, 1), 0.0f);
    }
}

TEST(Patch, MaskedChannelsZeroExactlyOffMask) {
  SceneSample s = ramp_scene(60, 60);
  for (int y = 25; y < 35; ++y)
    for (int x = 28; x < 40; ++x) s.mask.set(x, y, true);
  const int cx = 30, cy = 30;
  const auto p = extract_patch(s, cx, cy);
  for (int py = 0; py < kPatchSize; ++py)
    for (int px = 0; px < kPatchSize; ++px) {
      const int fx = std::clamp(cx + px - kPatchRadius, 0, 59), fy = std::clamp(cy + py - kPatchRadius, 0, 59);
      const int qx = std::clamp(cx + 4 * (px - kPatchRadius), 0, 59), qy = std::clamp(cy + 4 * (py - kPatchRadius), 0, 59);
      EXPECT_EQ(p.values.at(py, px, 2) == 0.0f, !s.mask(fx, fy));
      EXPECT_EQ(p.values.at(py, px, 3) == 0.0f, !s.mask(qx, qy));
      if (s.mask(fx, fy)) EXPECT_FLOAT_EQ(p.values.at(py, px, 2), s.raw.at(fx, fy) * kDepthScale);
    }
  s.mask = Mask(60, 60);
  EXPECT_EQ(extract_patch(s, cx, cy).values.at(kPatchRadius, kPatchRadius, 2), 0.0f);
}

TEST(Patch, QuarterScaleTapsFollowTheRamp) {
  const SceneSample s = ramp_scene(100, 100);
  const auto p = extract_patch(s, 50, 50);
  for (int i = 0; i < kPatchSize; ++i) {
    const int x = 50 - 28 + 4 * i;
    const float expected = (s.raw.at(x, 50) - s.background.at(x, 50)) * kDepthScale;
    EXPECT_FLOAT_EQ(p.values.at(kPatchRadius, i, 1), expected) << "tap " << i;
    const int y = 50 - 28 + 4 * i;
    EXPECT_FLOAT_EQ(p.values.at(i, kPatchRadius, 1), (s.raw.at(50, y) - s.background.at(50, y)) * kDepthScale);
    const int fx = 50 - 7 + i;
    EXPECT_FLOAT_EQ(p.values.at(kPatchRadius, i, 0), (s.raw.at(fx, 50) - s.background.at(fx, 50)) * kDepthScale);
  }
  EXPECT_FLOAT_EQ(p.target_mm, 950.0f);
  EXPECT_FLOAT_EQ(p.normalized_target(), 0.95f);
}

TEST(Patch, BordersClampToEdge) {
  const SceneSample s = ramp_scene(30, 30);
  const auto p = extract_patch(s, 0, 0);
  for (int i = 0; i <= kPatchRadius; ++i) {
    EXPECT_EQ(p.values.at(kPatchRadius, i, 0), p.values.at(kPatchRadius, kPatchRadius, 0));
    EXPECT_EQ(p.values.at(i, kPatchRadius, 1), p.values.at(kPatchRadius, kPatchRadius, 1));
  }
  EXPECT_THROW(extract_patch(s, 30, 0), Error);
}

TEST(Patch, LocalityBeyondQuarterWindow) {
  const SceneSample base = ramp_scene(90, 90);
  const int cx = 45, cy = 45;
  const auto ref = extract_patch(base, cx, cy);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> pos(0, 89);
  int changed = 0;
  while (changed < 200) {
    const int x = pos(rng), y = pos(rng);
    if (std::max(std::abs(x - cx), std::abs(y - cy)) <= kQuarterRadius) continue;
    SceneSample s = base;
    s.raw.set(x, y, 1.0f);
    ASSERT_EQ(extract_patch(s, cx, cy).values, ref.values) << x << "," << y;
    ++changed;
  }
  SceneSample s = base;
  s.raw.set(cx + kQuarterRadius, cy, 1.0f);
  EXPECT_NE(extract_patch(s, cx, cy).values, ref.values);
}

TEST(Patch, InvalidRawGivesZeroInBothChannels) {
  SceneSample s = ramp_scene(40, 40);
  s.mask.set(20, 20, true);
  s.raw.invalidate(20, 20);
  const auto p = extract_patch(s, 20, 20);
  EXPECT_EQ(p.values.at(kPatchRadius, kPatchRadius, 0), 0.0f);
  EXPECT_EQ(p.values.at(kPatchRadius, kPatchRadius, 2), 0.0f);
}

TEST(Patch, NegativeDifferencesPassThrough) {
  SceneSample s = ramp_scene(40, 40);
  s.raw.set(20, 20, 3000.0f);
  EXPECT_GT(extract_patch(s, 20, 20).values.at(kPatchRadius, kPatchRadius, 0), 0.0f);
  s.raw.set(20, 20, 500.0f);
  EXPECT_LT(extract_patch(s, 20, 20).values.at(kPatchRadius, kPatchRadius, 0), 0.0f);
}

TEST(Patch, SingleScaleLayout) {
  const SceneSample s = ramp_scene(40, 40);
  const auto multi = extract_patch(s, 20, 20, PatchLayout::kMultiScale);
  const auto single = extract_patch(s, 20, 20, PatchLayout::kSingleScale);
  ASSERT_EQ(single.values.channels(), 2);
  for (int y = 0; y < kPatchSize; ++y)
    for (int x = 0; x < kPatchSize; ++x) {
      EXPECT_EQ(single.values.at(y, x, 0), multi.values.at(y, x, 0));
      EXPECT_EQ(single.values.at(y, x, 1), multi.values.at(y, x, 2));
    }
}

TEST(Patch, FlipIsAnInvolution) {
  const SceneSample s = ramp_scene(40, 40);
  const auto p = extract_patch(s, 11, 17);
  const auto f = flip_horizontal(p);
  EXPECT_NE(f.values, p.values);
  EXPECT_EQ(f.values.at(3, 0, 1), p.values.at(3, kPatchSize - 1, 1));
  EXPECT_EQ(f.target_mm, p.target_mm);
  EXPECT_EQ(flip_horizontal(f).values, p.values);
}

SceneSample scene_with_mask_pixels(int count) {
  SceneSample s = ramp_scene(50, 50);
  for (int i = 0; i < count; ++i) s.mask.set(i % 10 + 5, i / 10 + 5, true);
  return s;
}

TEST(TrainingSet, FlipDoublesThePatchCount) {
  const std::vector<SceneSample> scenes{scene_with_mask_pixels(100)};
  TrainingSetOptions o;
  o.flip = true;
  EXPECT_EQ(TrainingSet(scenes, o).size(), 200u);
  EXPECT_EQ(TrainingSet::count(scenes, o), 200u);
  o.flip = false;
  EXPECT_EQ(TrainingSet(scenes, o).size(), 100u);
}

TEST(TrainingSet, StreamIsFlipClosedAndSeedDeterministic) {
  const std::vector<SceneSample> scenes{scene_with_mask_pixels(30)};
  TrainingSetOptions o;
  o.seed = 5;
  const TrainingSet a(scenes, o), b(scenes, o);
  EXPECT_EQ(a.entries(), b.entries());
  o.seed = 6;
  EXPECT_NE(TrainingSet(scenes, o).entries(), a.entries());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& e = a.entries()[i];
    for (std::size_t j = 0; j < a.size(); ++j) {
      const auto& f = a.entries()[j];
      if (f.x == e.x && f.y == e.y && f.flipped != e.flipped) {
        EXPECT_EQ(flip_horizontal(a.patch(i)).values, a.patch(j).values);
      }
    }
  }
}

TEST(TrainingSet, SkipsScenesWithoutGroundTruth) {
  std::vector<SceneSample> scenes{scene_with_mask_pixels(10), scene_with_mask_pixels(10)};
  scenes[1].ground_truth = DepthMap();
  static std::string seen;
  set_warning_handler([](const std::string& m) { seen = m; });
  const TrainingSet t(scenes, {});
  set_warning_handler(nullptr);
  EXPECT_EQ(t.size(), 20u);
  EXPECT_NE(seen.find("ground truth"), std::string::npos);
}

TEST(TrainingSet, CaptureScaleCountIsNearThreeHundredFiftyThousand) {
  // 48 maps at 512x424 with a rectangle covering about 1.6% of the frame.
  SceneSample s;
  s.raw = DepthMap::filled(512, 424, 1200.0f);
  s.background = DepthMap::filled(512, 424, 2000.0f);
  s.ground_truth = DepthMap::filled(512, 424, 1000.0f);
  s.mask = Mask(512, 424);
  for (int y = 180; y < 240; ++y)
    for (int x = 220; x < 281; ++x) s.mask.set(x, y, true);
  const std::vector<SceneSample> scenes(48, s);
  const std::size_t n = TrainingSet::count(scenes, {});
  EXPECT_GT(n, 300000u);
  EXPECT_LT(n, 400000u);
}

TEST(Noise, ZeroSigmaIsIdentity) {
  const DepthMap m = DepthMap::filled(20, 20, 1234.0f);
  EXPECT_EQ(add_gaussian_noise(m, 0.0, 1), m);
  EXPECT_THROW(add_gaussian_noise(m, -1.0, 1), Error);
}

TEST(Noise, StatisticsAtOneMillionPixels) {
  DepthMap m = DepthMap::filled(1000, 1000, 5000.0f);
  const DepthMap n = add_gaussian_noise(m, 16.0, 42);
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < n.depth.size(); ++i) {
    const double d = static_cast<double>(n.depth[i]) - 5000.0;
    sum += d;
    sq += d * d;
  }
  const double count = static_cast<double>(n.depth.size());
  const double mean = sum / count;
  const double sd = std::sqrt(sq / count - mean * mean);
  EXPECT_LT(std::abs(mean), 3.0 * 16.0 / std::sqrt(count));
  EXPECT_LT(std::abs(sd - 16.0), 0.01 * 16.0);
  EXPECT_EQ(add_gaussian_noise(m, 16.0, 42), n);
  EXPECT_NE(add_gaussian_noise(m, 16.0, 43), n);
}

TEST(Noise, InvalidPixelsUntouched) {
  DepthMap m = DepthMap::filled(10, 10, 1000.0f);
  m.invalidate(3, 3);
  const DepthMap n = add_gaussian_noise(m, 50.0, 1);
  EXPECT_FALSE(n.is_valid(3, 3));
  EXPECT_EQ(n.at(3, 3), 0.0f);
  for (int i = 0; i < 100; ++i) if (i != 33) EXPECT_TRUE(n.valid[i]);
}

// ---------------------------------------------------------------- synth ---

SceneSpec fixed_spec(ObjectShape shape) {
  SceneSpec s;
  s.shape = shape;
  s.bias_mm = 0.0;
  return s;
}

TEST(Synth, ZeroAlphaReproducesGroundTruth) {
  for (auto shape : {ObjectShape::kPlane, ObjectShape::kSphereCap, ObjectShape::kCylinder}) {
    SceneSpec spec = fixed_spec(shape);
    spec.alpha.constant = 0.0;
    const auto s = generate_synthetic_scene(spec, 1);
    ASSERT_GT(s.mask.count(), 0u);
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x)
        if (s.mask(x, y)) ASSERT_EQ(s.raw.at(x, y), s.ground_truth.at(x, y)) << to_string(shape);
  }
}

TEST(Synth, UnitAlphaReproducesBackground) {
  SceneSpec spec = fixed_spec(ObjectShape::kSphereCap);
  spec.alpha.constant = 1.0;
  const auto s = generate_synthetic_scene(spec, 1);
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) ASSERT_EQ(s.raw.at(x, y), s.background.at(x, y));
}

TEST(Synth, RandomScenesAreDistortedAwayFromTheCamera) {
  const SceneRanges ranges;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const auto shape = static_cast<ObjectShape>(seed % 3);
    const auto spec = random_scene_spec(ranges, shape, seed);
    const auto s = generate_synthetic_scene(spec, seed);
    double sq = 0.0;
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        if (!s.mask(x, y)) {
          ASSERT_EQ(s.raw.at(x, y), s.background.at(x, y));
          continue;
        }
        ASSERT_GE(s.raw.at(x, y), s.ground_truth.at(x, y));
        const double e = s.raw.at(x, y) - s.ground_truth.at(x, y);
        sq += e * e;
      }
    EXPECT_GT(sq, 0.0) << seed;
  }
}

TEST(Synth, AlphaFieldStaysInRange) {
  AlphaField a;
  a.base = 0.75;
  a.amplitude = 0.3;
  for (int y = 0; y < 64; y += 3)
    for (int x = 0; x < 64; x += 3) {
      const double v = a.value(x, y, 64, 64);
      EXPECT_GE(v, 0.2);
      EXPECT_LE(v, 0.8);
    }
}

TEST(Synth, PlanarGroundTruthComesFromMarkers) {
  const auto s = generate_synthetic_scene(fixed_spec(ObjectShape::kPlane), 3);
  ASSERT_TRUE(s.meta.contains("markers"));
  EXPECT_EQ(s.meta["markers"].size(), 4u);
  EXPECT_EQ(s.meta["class"], "planar");
}

TEST(Synth, ObjectOutsideTheFrameIsRejected) {
  SceneSpec spec = fixed_spec(ObjectShape::kPlane);
  spec.plane.center_mm = {900.0, 0.0, 1100.0};
  try {
    generate_synthetic_scene(spec, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kData);
  }
}

TEST(Synth, SceneDirectoryRoundTrip) {
  TempDir dir("scene");
  const auto s = generate_synthetic_scene(random_scene_spec({}, ObjectShape::kCylinder, 4), 4, "c");
  write_scene(s, dir / "c");
  const auto r = read_scene(dir / "c");
  EXPECT_EQ(r.raw, s.raw);
  EXPECT_EQ(r.background, s.background);
  EXPECT_EQ(r.ground_truth, s.ground_truth);
  EXPECT_EQ(r.mask, s.mask);
  EXPECT_EQ(r.meta, s.meta);
}

TEST(Synth, DeterministicPerSeed) {
  const auto spec = random_scene_spec({}, ObjectShape::kPlane, 9);
  EXPECT_EQ(spec.to_json(), random_scene_spec({}, ObjectShape::kPlane, 9).to_json());
  SceneSpec noisy = spec;
  noisy.sensor_noise_mm = 5.0;
  noisy.dropout = 0.1;
  const auto a = generate_synthetic_scene(noisy, 9), b = generate_synthetic_scene(noisy, 9);
  EXPECT_EQ(a.raw, b.raw);
  EXPECT_EQ(SceneSpec::from_json(noisy.to_json()).to_json(), noisy.to_json());
}

}  // namespace
}  // namespace tofr
