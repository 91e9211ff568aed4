#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "test_util.hpp"
#include "tofr/gradcheck.hpp"
#include "tofr/network.hpp"

namespace tofr {
namespace {

using testing::random_tensor;

NetworkConfig two_block_config(bool bn) {
  NetworkConfig c;
  c.groups = {{1, 4, false}, {1, 6, true}};
  c.use_batch_norm = bn;
  c.seed = 99;
  return c;
}

TEST(Network, DefaultTopology) {
  const auto net = Network<float>::build(NetworkConfig::proposed());
  EXPECT_EQ(net.block_count(), 24);
  EXPECT_EQ(net.spatial_trace(), (std::vector<int>{15, 15, 7, 3, 1}));
  EXPECT_EQ(net.shape_trace().back().output, (Shape{1, 1, 1}));
  EXPECT_TRUE(net.head_reducers().empty());
  for (const auto& b : net.blocks()) {
    const bool first_of_downsampling_group = b.name == "group2.block1" || b.name == "group3.block1";
    EXPECT_EQ(b.downsample, first_of_downsampling_group) << b.name;
    EXPECT_EQ(b.projection.has_value(), first_of_downsampling_group) << b.name;
    EXPECT_FALSE(b.norm1 || b.norm2 || b.norm_projection) << b.name;
    if (b.downsample) {
      EXPECT_EQ(b.conv1.params.stride, 2);
      EXPECT_EQ(b.conv1.params.padding, 0);
    }
  }
  EXPECT_EQ(net.head().params.padding, 0);
  EXPECT_EQ(net.head().params.out_channels, 1);
}

TEST(Network, BatchNormVariantAddsNormAfterEveryBlockConv) {
  const auto plain = Network<float>::build(NetworkConfig::proposed());
  const auto bn = Network<float>::build(NetworkConfig::batch_norm_variant());
  ASSERT_EQ(bn.block_count(), plain.block_count());
  EXPECT_EQ(bn.spatial_trace(), plain.spatial_trace());
  for (const auto& b : bn.blocks()) {
    EXPECT_TRUE(b.norm1.has_value()) << b.name;
    EXPECT_TRUE(b.norm2.has_value()) << b.name;
    EXPECT_EQ(b.norm_projection.has_value(), b.projection.has_value()) << b.name;
  }
  // Every parameter of the proposed model exists in the BN model with the same shape.
  const auto pp = plain.parameters();
  const auto bp = bn.parameters();
  std::size_t j = 0;
  for (const auto& p : pp) {
    while (j < bp.size() && bp[j].name != p.name) ++j;
    ASSERT_LT(j, bp.size()) << p.name;
    EXPECT_EQ(bp[j].shape, p.shape);
  }
}

TEST(Network, SingleScaleVariantTakesTwoChannels) {
  const auto net = Network<float>::build(NetworkConfig::single_scale_variant());
  EXPECT_EQ(net.input_shape(), (Shape{15, 15, 2}));
  EXPECT_EQ(net.stem().params.in_channels, 2);
  EXPECT_EQ(net.block_count(), 24);
  EXPECT_EQ(net.spatial_trace(), (std::vector<int>{15, 15, 7, 3, 1}));
}

TEST(Network, DeskPresetReducesTo1x1) {
  const auto net = Network<float>::build(NetworkConfig::desk());
  EXPECT_EQ(net.block_count(), 4);
  EXPECT_EQ(net.spatial_trace(), (std::vector<int>{15, 15, 7, 1}));
  ASSERT_EQ(net.head_reducers().size(), 1u);
  EXPECT_EQ(net.shape_trace().back().output, (Shape{1, 1, 1}));
}

TEST(Network, CollapsingTopologyNamesTheLayer) {
  NetworkConfig c;
  c.patch_size = 5;
  try {
    Network<float>::build(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kTopology);
    EXPECT_NE(std::string(e.what()).find("group3.block1"), std::string::npos) << e.what();
  }
}

TEST(Network, ParameterOrderIsStable) {
  const auto net = Network<float>::build(two_block_config(true));
  const auto params = net.parameters();
  ASSERT_FALSE(params.empty());
  EXPECT_EQ(params.front().name, "stem.weight");
  EXPECT_EQ(params[1].name, "stem.bias");
  EXPECT_EQ(params[2].name, "group1.block1.conv1.weight");
  EXPECT_EQ(params[4].name, "group1.block1.bn1.gamma");
  EXPECT_EQ(params.back().name, "head.out.bias");
}

TEST(Network, HeInitialisationScale) {
  const auto net = Network<double>::build(NetworkConfig::proposed(3));
  const auto& k = net.blocks()[10].conv1.params.kernel;
  double sq = 0.0;
  for (double v : k) sq += v * v;
  const double expected = 2.0 / (64.0 * 9.0);
  EXPECT_NEAR(sq / k.size(), expected, 0.05 * expected);
  for (double b : net.blocks()[10].conv1.params.bias) EXPECT_EQ(b, 0.0);
}

TEST(Network, ZeroPatchGivesZero) {
  const auto net = Network<float>::build(NetworkConfig::desk(5));
  EXPECT_EQ(net.forward(Tensor(net.input_shape())), 0.0f);
}

TEST(Network, ZeroResidualBranchIsIdentity) {
  auto net = Network<double>::build(two_block_config(false));
  auto& conv2 = net.blocks()[0].conv2.params;
  std::fill(conv2.kernel.begin(), conv2.kernel.end(), 0.0);
  std::fill(conv2.bias.begin(), conv2.bias.end(), 0.0);
  std::mt19937_64 rng(1);
  const Batch<double> x{random_tensor<double>(net.input_shape(), rng)};
  Network<double>::Trace trace;
  net.forward_batch(x, &trace);
  EXPECT_EQ(trace.blocks[0].pre_out[0], trace.blocks[0].input[0]);
}

TEST(Network, NonFiniteInputNamesTheLayer) {
  const auto net = Network<float>::build(NetworkConfig::desk());
  Tensor x(net.input_shape());
  x[7] = std::numeric_limits<float>::infinity();
  try {
    net.forward(x);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumeric);
    EXPECT_NE(std::string(e.what()).find("stem"), std::string::npos) << e.what();
  }
}

TEST(Network, RejectsWrongInputShape) {
  const auto net = Network<float>::build(NetworkConfig::desk());
  EXPECT_THROW(net.forward(Tensor(Shape{15, 15, 2})), Error);
}

TEST(Network, ProposedModelIsBatchInvariant) {
  const auto net = Network<float>::build(NetworkConfig::desk(8));
  std::mt19937_64 rng(2);
  Batch<float> xs;
  for (int i = 0; i < 7; ++i) xs.push_back(random_tensor<float>(net.input_shape(), rng));
  const auto batched = net.forward_batch(xs);
  for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_EQ(batched[i], net.forward(xs[i])) << i;
}

TEST(Network, BatchNormModelIsNotBatchInvariant) {
  auto config = NetworkConfig::desk(8);
  config.use_batch_norm = true;
  const auto net = Network<float>::build(config);
  std::mt19937_64 rng(2);
  Batch<float> xs;
  for (int i = 0; i < 4; ++i) xs.push_back(random_tensor<float>(net.input_shape(), rng));
  const auto full = net.forward_batch(xs);
  const auto half = net.forward_batch(std::span<const Tensor>(xs).first(2));
  EXPECT_NE(full[0], half[0]);
}

TEST(Network, CastPreservesPredictions) {
  const auto net = Network<float>::build(NetworkConfig::desk(4));
  const auto dnet = net.cast<double>();
  std::mt19937_64 rng(9);
  const auto x = random_tensor<float>(net.input_shape(), rng);
  EXPECT_NEAR(net.forward(x), dnet.forward(x.cast<double>()), 1e-4);
}

TEST(Network, ConfigJsonRoundTrip) {
  const auto c = NetworkConfig::batch_norm_variant(77);
  EXPECT_EQ(NetworkConfig::from_json(c.to_json()), c);
  auto j = c.to_json();
  j["depth"] = 3;
  EXPECT_THROW(NetworkConfig::from_json(j), Error);
}

// Finite differences of L = sum_n w_n * f(x_n) against backward(), per parameter tensor.
void check_network_gradients(bool bn) {
  auto net = Network<double>::build(two_block_config(bn));
  std::mt19937_64 rng(bn ? 21 : 20);
  Batch<double> xs;
  for (int i = 0; i < 3; ++i) xs.push_back(random_tensor<double>(net.input_shape(), rng));
  const std::vector<double> w{0.7, -1.1, 0.4};

  Network<double>::Trace trace;
  net.forward_batch(xs, &trace);
  net.zero_grad();
  net.backward(trace, w);

  auto objective = [&] {
    const auto out = net.forward_batch(xs);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += w[i] * out[i];
    return s;
  };
  for (auto& p : net.parameters()) {
    const std::vector<double> analytic(p.grads.begin(), p.grads.end());
    const auto r = gradient_check([&](std::span<double>) { return objective(); }, p.values, analytic, 1e-6, 1e-4, 1e-4);
    EXPECT_TRUE(r.passed) << p.name << ": " << r.summary();
  }
}

TEST(NetworkGradients, TwoBlockProposed) { check_network_gradients(false); }
TEST(NetworkGradients, TwoBlockBatchNorm) { check_network_gradients(true); }

TEST(Network, BackwardAccumulatesUntilZeroed) {
  auto net = Network<double>::build(two_block_config(false));
  std::mt19937_64 rng(4);
  const Batch<double> xs{random_tensor<double>(net.input_shape(), rng)};
  const std::vector<double> w{1.0};
  Network<double>::Trace trace;
  net.forward_batch(xs, &trace);
  net.zero_grad();
  net.backward(trace, w);
  const double once = net.head().bias_grad[0];
  net.backward(trace, w);
  EXPECT_DOUBLE_EQ(net.head().bias_grad[0], 2.0 * once);
  net.zero_grad();
  EXPECT_EQ(net.head().bias_grad[0], 0.0);
}

}  // namespace
}  // namespace tofr
