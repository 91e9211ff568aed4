#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tofr/conv.hpp"
#include "tofr/ops.hpp"
#include "tofr/tensor.hpp"

namespace tofr {

struct GroupSpec {
  int blocks = 8;
  int channels = 32;
  bool downsample = false;  // first block uses a pad-0 stride-2 convolution
  friend bool operator==(const GroupSpec&, const GroupSpec&) = default;
};

/// Topology description of the residual regression network.
///
/// The default is three groups of eight residual blocks with widths 32, 64 and
/// 128; the first blocks of groups 2 and 3 halve the spatial size, giving a
/// 15 -> 15 -> 7 -> 3 trace, and a 3x3 valid convolution reduces 3x3x128 to a
/// single value. A 3x3 stem lifts the input channels to the first group width.
/// When the last group ends above 3x3 (reduced presets), the head first
/// inserts stride-2 valid 3x3 convolutions with ReLU until it reaches 3x3.
struct NetworkConfig {
  int input_channels = 4;
  int patch_size = 15;
  std::vector<GroupSpec> groups{{8, 32, false}, {8, 64, true}, {8, 128, true}};
  bool use_batch_norm = false;
  std::string final_head = "conv3x3-valid";
  std::uint64_t seed = 0;

  static NetworkConfig proposed(std::uint64_t seed = 0);
  /// BN immediately after every convolution inside the residual blocks.
  static NetworkConfig batch_norm_variant(std::uint64_t seed = 0);
  /// Full-resolution channels only (2-channel input).
  static NetworkConfig single_scale_variant(std::uint64_t seed = 0);
  /// Reduced topology for desk-scale runs: 2 groups x 2 blocks, widths 16/32.
  static NetworkConfig desk(std::uint64_t seed = 0);

  nlohmann::json to_json() const;
  /// Rejects unknown keys.
  static NetworkConfig from_json(const nlohmann::json& j);

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

template <typename T>
struct ConvLayer {
  std::string name;
  ConvLayerParams<T> params;
  std::vector<T> kernel_grad;
  std::vector<T> bias_grad;
};

template <typename T>
struct NormLayer {
  std::string name;
  BatchNormParams<T> params;
  std::vector<T> gamma_grad;
  std::vector<T> beta_grad;
};

/// output = relu(shortcut(x) + conv2(relu(conv1(x)))), with optional BN after
/// each convolution. The shortcut is the identity unless the block
/// downsamples, in which case it is a 3x3 pad-0 stride-2 projection.
template <typename T>
struct ResidualBlock {
  std::string name;
  bool downsample = false;
  ConvLayer<T> conv1;
  ConvLayer<T> conv2;
  std::optional<ConvLayer<T>> projection;
  std::optional<NormLayer<T>> norm1;
  std::optional<NormLayer<T>> norm2;
  std::optional<NormLayer<T>> norm_projection;
};

struct LayerShape {
  std::string name;
  Shape input;
  Shape output;
};

template <typename T>
struct ParameterView {
  std::string name;  // e.g. "group2.block1.conv1.weight"
  std::vector<int> shape;
  std::span<T> values;
  std::span<T> grads;
};

template <typename T>
class Network {
 public:
  struct Trace;

  Network() = default;

  /// Builds and initialises the network (fan-in scaled Gaussian weights,
  /// std = sqrt(2 / fan_in), zero biases, BN scale 1 / shift 0). Throws
  /// ErrorKind::kTopology naming the first layer whose output collapses.
  static Network build(const NetworkConfig& config);

  const NetworkConfig& config() const noexcept { return config_; }
  const std::vector<LayerShape>& shape_trace() const noexcept { return shape_trace_; }
  /// Spatial size at the input, after each group, and at the head output.
  std::vector<int> spatial_trace() const;
  int block_count() const noexcept { return static_cast<int>(blocks_.size()); }
  std::size_t parameter_count() const;
  Shape input_shape() const {
    return {config_.patch_size, config_.patch_size, config_.input_channels};
  }

  ConvLayer<T>& stem() noexcept { return stem_; }
  const ConvLayer<T>& stem() const noexcept { return stem_; }
  std::vector<ResidualBlock<T>>& blocks() noexcept { return blocks_; }
  const std::vector<ResidualBlock<T>>& blocks() const noexcept { return blocks_; }
  std::vector<ConvLayer<T>>& head_reducers() noexcept { return reducers_; }
  const std::vector<ConvLayer<T>>& head_reducers() const noexcept { return reducers_; }
  ConvLayer<T>& head() noexcept { return head_; }
  const ConvLayer<T>& head() const noexcept { return head_; }

  /// Stable parameter order used by checkpoints and the optimiser.
  std::vector<ParameterView<T>> parameters();
  std::vector<ParameterView<const T>> parameters() const;

  T forward(const BasicTensor<T>& patch) const;
  /// Without BN each prediction depends only on its own patch. With BN the
  /// statistics of the whole batch enter every prediction.
  std::vector<T> forward_batch(std::span<const BasicTensor<T>> patches,
                               Trace* trace = nullptr) const;

  /// Accumulates parameter gradients of sum_n output_grads[n] * output[n].
  void backward(const Trace& trace, std::span<const T> output_grads);
  void zero_grad();

  template <typename U>
  Network<U> cast() const;

  struct ConvTrace {
    Batch<T> input;
    Batch<T> pre_activation;
  };
  struct BlockTrace {
    Batch<T> input;
    Batch<T> pre1;  // after conv1 (+BN), before ReLU
    Batch<T> act1;
    Batch<T> pre_out;  // residual sum before the final ReLU
    BatchNormCache<T> norm1, norm2, norm_projection;
  };
  struct Trace {
    ConvTrace stem;
    std::vector<BlockTrace> blocks;
    std::vector<ConvTrace> reducers;
    Batch<T> head_input;
  };

 private:
  template <typename>
  friend class Network;

  NetworkConfig config_;
  std::vector<LayerShape> shape_trace_;
  std::vector<int> group_sizes_;
  ConvLayer<T> stem_;
  std::vector<ResidualBlock<T>> blocks_;
  std::vector<ConvLayer<T>> reducers_;
  ConvLayer<T> head_;
};

template <typename T>
template <typename U>
Network<U> Network<T>::cast() const {
  auto conv = [](const ConvLayer<T>& c) {
    return ConvLayer<U>{c.name, c.params.template cast<U>(),
                        std::vector<U>(c.kernel_grad.begin(), c.kernel_grad.end()),
                        std::vector<U>(c.bias_grad.begin(), c.bias_grad.end())};
  };
  auto norm = [](const std::optional<NormLayer<T>>& n) -> std::optional<NormLayer<U>> {
    if (!n) return std::nullopt;
    return NormLayer<U>{n->name, n->params.template cast<U>(),
                        std::vector<U>(n->gamma_grad.begin(), n->gamma_grad.end()),
                        std::vector<U>(n->beta_grad.begin(), n->beta_grad.end())};
  };
  Network<U> out;
  out.config_ = config_;
  out.shape_trace_ = shape_trace_;
  out.group_sizes_ = group_sizes_;
  out.stem_ = conv(stem_);
  for (const auto& b : blocks_) {
    ResidualBlock<U> nb;
    nb.name = b.name;
    nb.downsample = b.downsample;
    nb.conv1 = conv(b.conv1);
    nb.conv2 = conv(b.conv2);
    if (b.projection) nb.projection = conv(*b.projection);
    nb.norm1 = norm(b.norm1);
    nb.norm2 = norm(b.norm2);
    nb.norm_projection = norm(b.norm_projection);
    out.blocks_.push_back(std::move(nb));
  }
  for (const auto& r : reducers_) out.reducers_.push_back(conv(r));
  out.head_ = conv(head_);
  return out;
}

}  // namespace tofr
