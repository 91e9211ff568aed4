#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "test_util.hpp"
#include "tofr/checkpoint.hpp"
#include "tofr/ops.hpp"
#include "tofr/synth.hpp"
#include "tofr/train.hpp"

namespace tofr {
namespace {

using testing::TempDir;

NetworkConfig small_net(std::uint64_t seed = 1) {
  NetworkConfig c;
  c.groups = {{1, 8, false}, {1, 8, true}};
  c.seed = seed;
  return c;
}

// Every pixel of a uniform fully-masked scene yields the same patch.
SceneSample uniform_scene(int size, float raw, float gt) {
  SceneSample s;
  s.name = "uniform";
  s.raw = DepthMap::filled(size, size, raw);
  s.background = DepthMap::filled(size, size, 2000.0f);
  s.ground_truth = DepthMap::filled(size, size, gt);
  s.mask = Mask(size, size, true);
  return s;
}

std::vector<float> flat_parameters(const Network<float>& net) {
  std::vector<float> out;
  for (const auto& p : net.parameters()) out.insert(out.end(), p.values.begin(), p.values.end());
  return out;
}

TEST(TrainConfig, DefaultsFollowTheThreeStageSchedule) {
  const TrainConfig c;
  EXPECT_EQ(c.stages, (std::vector<TrainStage>{{10, 3e-4}, {20, 1e-4}, {20, 3.3e-5}}));
  EXPECT_EQ(c.batch_size, 4);
  EXPECT_EQ(c.total_epochs(), 50);
  EXPECT_NO_THROW(c.validate());
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.stages = {{1, 1e-4}, {1, 3e-4}};
  EXPECT_THROW(c.validate(), Error);
  c.stages = {};
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.loss_beta = 0.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(TrainConfig, JsonRoundTripAndUnknownFields) {
  TrainConfig c;
  c.stages = {{2, 1e-3}, {1, 5e-4}};
  c.seed = 77;
  c.log_every = 9;
  EXPECT_EQ(TrainConfig::from_json(c.to_json()), c);
  auto j = c.to_json();
  j["warmup"] = 3;
  EXPECT_THROW(TrainConfig::from_json(j), Error);
}

TEST(TrainConfig, ScheduleTable) {
  const TrainConfig c;
  EXPECT_EQ(schedule_at(c, 0).learning_rate, 3e-4);
  EXPECT_EQ(schedule_at(c, 9).learning_rate, 3e-4);
  EXPECT_EQ(schedule_at(c, 10).learning_rate, 1e-4);
  EXPECT_EQ(schedule_at(c, 29).stage, 1);
  EXPECT_EQ(schedule_at(c, 30).learning_rate, 3.3e-5);
  EXPECT_EQ(schedule_at(c, 49).stage, 2);
  EXPECT_THROW(schedule_at(c, 50), Error);
}

TEST(Train, ZeroLearningRateKeepsInitialWeights) {
  const std::vector<SceneSample> scenes{uniform_scene(6, 1300.0f, 1000.0f)};
  const TrainingSet data(scenes, {});
  TrainConfig c;
  c.stages = {{2, 0.0}};
  const auto initial = Network<float>::build(small_net());
  const auto result = train(c, initial, data);
  EXPECT_EQ(flat_parameters(result.network), flat_parameters(initial));
}

TEST(Train, MemorisesAConstantTarget) {
  const std::vector<SceneSample> scenes{uniform_scene(8, 1300.0f, 1000.0f)};
  TrainingSetOptions o;
  o.flip = false;
  const TrainingSet data(scenes, o);
  TrainConfig c;
  c.stages = {{40, 1e-3}, {20, 1e-4}};
  c.seed = 3;
  const auto result = train(c, small_net(), data);
  const auto& losses = result.log.epoch_losses;
  ASSERT_EQ(losses.size(), 60u);
  EXPECT_LT(losses[39], 0.1 * losses[0]);
  EXPECT_LT(losses.back(), 0.1 * losses[0]);
  const float pred = result.network.forward(data.patch(0).values);
  EXPECT_NEAR(pred, 1.0f, 1e-3);
}

TEST(Train, FixedSeedIsBitReproducible) {
  const auto spec = random_scene_spec({}, ObjectShape::kPlane, 5);
  const std::vector<SceneSample> scenes{generate_synthetic_scene(spec, 5)};
  TrainingSetOptions o;
  o.pixel_stride = 4;
  o.seed = 8;
  const TrainingSet data(scenes, o);
  TrainConfig c;
  c.stages = {{2, 3e-4}, {1, 1e-4}};
  c.seed = 11;
  c.log_every = 7;
  const auto a = train(c, small_net(4), data);
  const auto b = train(c, small_net(4), data);
  EXPECT_EQ(a.log, b.log);
  EXPECT_EQ(a.log.to_csv(), b.log.to_csv());
  EXPECT_EQ(flat_parameters(a.network), flat_parameters(b.network));
  EXPECT_EQ(a.optimizer, b.optimizer);
  c.seed = 12;
  EXPECT_NE(flat_parameters(train(c, small_net(4), data).network), flat_parameters(a.network));
}

TEST(Train, LogFollowsTheStageTable) {
  const std::vector<SceneSample> scenes{uniform_scene(5, 1300.0f, 1000.0f)};
  const TrainingSet data(scenes, {});  // 50 patches, 13 steps per epoch
  TrainConfig c;
  c.stages = {{2, 3e-4}, {3, 1e-4}, {1, 3.3e-5}};
  c.log_every = 5;
  const auto r = train(c, small_net(), data);
  std::uint64_t last = 0;
  for (const auto& row : r.log.rows) {
    EXPECT_GT(row.step, last);
    last = row.step;
    const auto expected = schedule_at(c, row.epoch - 1);
    EXPECT_EQ(row.stage, expected.stage + 1);
    EXPECT_EQ(row.learning_rate, expected.learning_rate);
    EXPECT_EQ(row.wall_ms, 0);
  }
  EXPECT_EQ(last, 6u * 13u);
  EXPECT_EQ(r.optimizer.steps, last);
  EXPECT_EQ(r.log.to_csv().rfind("step,epoch,stage,lr,mean_loss,wall_ms\n", 0), 0u);
}

TEST(Train, WritesCheckpointsAndReportsTheLastOneOnDivergence) {
  TempDir dir("train");
  const std::vector<SceneSample> scenes{uniform_scene(2, 1300.0f, 1000.0f)};
  TrainingSetOptions o;
  o.flip = false;
  const TrainingSet data(scenes, o);  // one batch per epoch
  TrainConfig c;
  c.stages = {{50, 1e37}};
  c.checkpoint_every = 1;
  c.checkpoint_dir = dir.path();
  try {
    train(c, small_net(), data);
    FAIL() << "expected divergence";
  } catch (const TrainingError& e) {
    EXPECT_GT(e.step(), 0u);
    ASSERT_FALSE(e.last_checkpoint().empty());
    EXPECT_TRUE(std::filesystem::exists(e.last_checkpoint()));
    EXPECT_NO_THROW(load_checkpoint(e.last_checkpoint()));
  }
}

TEST(Train, RejectsAnEmptyStreamAndChannelMismatch) {
  const std::vector<SceneSample> none;
  const TrainingSet empty(none, {});
  EXPECT_THROW(train(TrainConfig{}, small_net(), empty), Error);
  const std::vector<SceneSample> scenes{uniform_scene(4, 1300.0f, 1000.0f)};
  TrainingSetOptions o;
  o.layout = PatchLayout::kSingleScale;
  EXPECT_THROW(train(TrainConfig{}, small_net(), TrainingSet(scenes, o)), Error);
}

TEST(EvaluateEpoch, SinglePatchEqualsItsLoss) {
  const auto net = Network<float>::build(small_net(2));
  const std::vector<SceneSample> scenes{uniform_scene(4, 1300.0f, 1000.0f)};
  const auto p = extract_patch(scenes[0], 1, 1);
  const std::vector<PatchTensor> one{p};
  const float expected = smooth_l1(net.forward(p.values), p.normalized_target(), 1.0f).loss;
  EXPECT_FLOAT_EQ(static_cast<float>(evaluate_epoch(net, one)), expected);
  const std::vector<PatchTensor> twice{p, p, p, p, p};
  EXPECT_DOUBLE_EQ(evaluate_epoch(net, twice), evaluate_epoch(net, one));
  EXPECT_THROW(evaluate_epoch(net, std::vector<PatchTensor>{}), Error);
}

TEST(EvaluateEpoch, TrainedModelBeatsItsInitialisationOnHeldOutScenes) {
  SceneRanges r;
  r.width = r.height = 64;
  r.alpha_base = {0.45, 0.55};
  r.alpha_amplitude = {0.03, 0.08};
  std::vector<SceneSample> train_scenes, held;
  for (std::uint64_t i = 0; i < 7; ++i) {
    const auto shape = static_cast<ObjectShape>(i % 3);
    auto s = generate_synthetic_scene(random_scene_spec(r, shape, i), i);
    (i < 6 ? train_scenes : held).push_back(std::move(s));
  }
  TrainingSetOptions o;
  o.pixel_stride = 2;
  const TrainingSet data(train_scenes, o);
  o.flip = false;
  const TrainingSet held_set(held, o);
  TrainConfig c;
  c.stages = {{3, 3e-4}};
  const auto initial = Network<float>::build(small_net(6));
  const auto trained = train(c, initial, data).network;
  EXPECT_LT(evaluate_epoch(trained, held_set), evaluate_epoch(initial, held_set));
}

}  // namespace
}  // namespace tofr
