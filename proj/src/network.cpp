#include "tofr/network.hpp"

#include <cmath>
#include <random>
#include <set>
#include <string>

#include "tofr/random.hpp"

namespace tofr {

using nlohmann::json;

// ---------------------------------------------------------------- config ---

NetworkConfig NetworkConfig::proposed(std::uint64_t seed) {
  NetworkConfig c;
  c.seed = seed;
  return c;
}

NetworkConfig NetworkConfig::batch_norm_variant(std::uint64_t seed) {
  NetworkConfig c = proposed(seed);
  c.use_batch_norm = true;
  return c;
}

NetworkConfig NetworkConfig::single_scale_variant(std::uint64_t seed) {
  NetworkConfig c = proposed(seed);
  c.input_channels = 2;
  return c;
}

NetworkConfig NetworkConfig::desk(std::uint64_t seed) {
  NetworkConfig c;
  c.groups = {{2, 16, false}, {2, 32, true}};
  c.seed = seed;
  return c;
}

json NetworkConfig::to_json() const {
  json groups_json = json::array();
  for (const auto& g : groups) {
    groups_json.push_back({{"blocks", g.blocks}, {"channels", g.channels}, {"downsample", g.downsample}});
  }
  return {{"input_channels", input_channels}, {"patch_size", patch_size},
          {"groups", groups_json},           {"use_batch_norm", use_batch_norm},
          {"final_head", final_head},         {"seed", seed}};
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& what) {
  if (!j.is_object()) throw Error(ErrorKind::kConfig, what + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw Error(ErrorKind::kConfig, "unknown field '" + key + "' in " + what);
  }
}

}  // namespace

NetworkConfig NetworkConfig::from_json(const json& j) {
  reject_unknown(j, {"input_channels", "patch_size", "groups", "use_batch_norm", "final_head", "seed"},
                 "network config");
  NetworkConfig c;
  try {
    if (j.contains("input_channels")) c.input_channels = j.at("input_channels").get<int>();
    if (j.contains("patch_size")) c.patch_size = j.at("patch_size").get<int>();
    if (j.contains("use_batch_norm")) c.use_batch_norm = j.at("use_batch_norm").get<bool>();
    if (j.contains("final_head")) c.final_head = j.at("final_head").get<std::string>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("groups")) {
      c.groups.clear();
      for (const auto& g : j.at("groups")) {
        reject_unknown(g, {"blocks", "channels", "downsample"}, "network group");
        GroupSpec s;
        s.blocks = g.at("blocks").get<int>();
        s.channels = g.at("channels").get<int>();
        s.downsample = g.value("downsample", false);
        c.groups.push_back(s);
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("network config: ") + e.what());
  }
  return c;
}

// ------------------------------------------------------------- building ---

namespace {

template <typename T>
ConvLayer<T> make_conv(std::string name, int out_ch, int in_ch, int stride, int padding,
                       std::mt19937_64& rng) {
  ConvLayer<T> layer{std::move(name), ConvLayerParams<T>::zeros(out_ch, in_ch, stride, padding), {}, {}};
  const double stddev = std::sqrt(2.0 / (static_cast<double>(in_ch) * kKernelSize * kKernelSize));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& w : layer.params.kernel) w = static_cast<T>(dist(rng));
  layer.kernel_grad.assign(layer.params.kernel.size(), T{0});
  layer.bias_grad.assign(layer.params.bias.size(), T{0});
  return layer;
}

template <typename T>
NormLayer<T> make_norm(std::string name, int channels) {
  NormLayer<T> n{std::move(name), BatchNormParams<T>::identity(channels), {}, {}};
  n.gamma_grad.assign(n.params.gamma.size(), T{0});
  n.beta_grad.assign(n.params.beta.size(), T{0});
  return n;
}

// Applies the size formula and raises a topology error naming the layer.
Shape traced_output(const std::string& layer, const Shape& in, int out_ch, int stride, int padding) {
  const int h = conv_output_size(in.height, padding, stride);
  const int w = conv_output_size(in.width, padding, stride);
  if (h <= 0 || w <= 0) {
    throw Error(ErrorKind::kTopology, "layer " + layer + " maps " + in.str() +
                                          " to a non-positive size (stride " + std::to_string(stride) +
                                          ", padding " + std::to_string(padding) + ")");
  }
  return {h, w, out_ch};
}

}  // namespace

template <typename T>
Network<T> Network<T>::build(const NetworkConfig& config) {
  if (config.input_channels <= 0 || config.patch_size <= 0) {
    throw Error(ErrorKind::kConfig, "network input channels and patch size must be positive");
  }
  if (config.groups.empty()) throw Error(ErrorKind::kConfig, "network needs at least one group");
  for (const auto& g : config.groups) {
    if (g.blocks <= 0 || g.channels <= 0) {
      throw Error(ErrorKind::kConfig, "group block counts and widths must be positive");
    }
  }
  if (config.final_head != "conv3x3-valid") {
    throw Error(ErrorKind::kConfig, "unsupported final head '" + config.final_head + "'");
  }

  Network net;
  net.config_ = config;
  std::mt19937_64 rng(derive_seed(config.seed, {0x6e6574}));

  Shape shape{config.patch_size, config.patch_size, config.input_channels};
  net.group_sizes_.push_back(shape.height);

  const int stem_width = config.groups.front().channels;
  Shape next = traced_output("stem", shape, stem_width, 1, 1);
  net.stem_ = make_conv<T>("stem", stem_width, shape.channels, 1, 1, rng);
  net.shape_trace_.push_back({"stem", shape, next});
  shape = next;

  for (std::size_t g = 0; g < config.groups.size(); ++g) {
    const GroupSpec& spec = config.groups[g];
    for (int b = 0; b < spec.blocks; ++b) {
      ResidualBlock<T> block;
      block.name = "group" + std::to_string(g + 1) + ".block" + std::to_string(b + 1);
      block.downsample = spec.downsample && b == 0;
      const int stride = block.downsample ? 2 : 1;
      const int pad = block.downsample ? 0 : 1;

      const Shape mid = traced_output(block.name + ".conv1", shape, spec.channels, stride, pad);
      const Shape out = traced_output(block.name + ".conv2", mid, spec.channels, 1, 1);
      block.conv1 = make_conv<T>(block.name + ".conv1", spec.channels, shape.channels, stride, pad, rng);
      block.conv2 = make_conv<T>(block.name + ".conv2", spec.channels, spec.channels, 1, 1, rng);
      if (config.use_batch_norm) {
        block.norm1 = make_norm<T>(block.name + ".bn1", spec.channels);
        block.norm2 = make_norm<T>(block.name + ".bn2", spec.channels);
      }
      if (block.downsample || shape.channels != spec.channels) {
        const Shape proj = traced_output(block.name + ".shortcut", shape, spec.channels, stride, pad);
        if (proj != out) {
          throw Error(ErrorKind::kTopology, "block " + block.name + ": shortcut " + proj.str() +
                                                " does not match residual branch " + out.str());
        }
        block.projection =
            make_conv<T>(block.name + ".shortcut", spec.channels, shape.channels, stride, pad, rng);
        if (config.use_batch_norm) block.norm_projection = make_norm<T>(block.name + ".bn_shortcut", spec.channels);
      }
      net.shape_trace_.push_back({block.name, shape, out});
      net.blocks_.push_back(std::move(block));
      shape = out;
    }
    net.group_sizes_.push_back(shape.height);
  }

  int reducer = 0;
  while (shape.height > kKernelSize || shape.width > kKernelSize) {
    const std::string name = "head.reduce" + std::to_string(++reducer);
    const Shape out = traced_output(name, shape, shape.channels, 2, 0);
    net.reducers_.push_back(make_conv<T>(name, shape.channels, shape.channels, 2, 0, rng));
    net.shape_trace_.push_back({name, shape, out});
    shape = out;
  }
  const Shape head_out = traced_output("head.out", shape, 1, 1, 0);
  if (head_out.height != 1 || head_out.width != 1) {
    throw Error(ErrorKind::kTopology, "head.out produces " + head_out.str() + ", expected 1x1x1");
  }
  net.head_ = make_conv<T>("head.out", 1, shape.channels, 1, 0, rng);
  net.shape_trace_.push_back({"head.out", shape, head_out});
  net.group_sizes_.push_back(head_out.height);
  return net;
}

template <typename T>
std::vector<int> Network<T>::spatial_trace() const {
  return group_sizes_;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.values.size();
  return n;
}

namespace {

template <typename P, typename Conv, typename Norm>
void append_conv(std::vector<P>& out, Conv& c) {
  out.push_back({c.name + ".weight",
                 {c.params.out_channels, c.params.in_channels, kKernelSize, kKernelSize},
                 c.params.kernel,
                 c.kernel_grad});
  out.push_back({c.name + ".bias", {c.params.out_channels}, c.params.bias, c.bias_grad});
}

template <typename P, typename Norm>
void append_norm(std::vector<P>& out, Norm& n) {
  const int ch = static_cast<int>(n.params.gamma.size());
  out.push_back({n.name + ".gamma", {ch}, n.params.gamma, n.gamma_grad});
  out.push_back({n.name + ".beta", {ch}, n.params.beta, n.beta_grad});
}

template <typename P, typename Net>
std::vector<P> collect_parameters(Net& net) {
  using ConvT = std::remove_reference_t<decltype(net.stem())>;
  using NormT = std::remove_reference_t<decltype(*net.blocks().front().norm1)>;
  std::vector<P> out;
  append_conv<P, ConvT, NormT>(out, net.stem());
  for (auto& b : net.blocks()) {
    append_conv<P, ConvT, NormT>(out, b.conv1);
    if (b.norm1) append_norm<P>(out, *b.norm1);
    append_conv<P, ConvT, NormT>(out, b.conv2);
    if (b.norm2) append_norm<P>(out, *b.norm2);
    if (b.projection) append_conv<P, ConvT, NormT>(out, *b.projection);
    if (b.norm_projection) append_norm<P>(out, *b.norm_projection);
  }
  for (auto& r : net.head_reducers()) append_conv<P, ConvT, NormT>(out, r);
  append_conv<P, ConvT, NormT>(out, net.head());
  return out;
}

}  // namespace

template <typename T>
std::vector<ParameterView<T>> Network<T>::parameters() {
  return collect_parameters<ParameterView<T>>(*this);
}

template <typename T>
std::vector<ParameterView<const T>> Network<T>::parameters() const {
  return collect_parameters<ParameterView<const T>>(*this);
}

template <typename T>
void Network<T>::zero_grad() {
  for (auto& p : parameters()) std::fill(p.grads.begin(), p.grads.end(), T{0});
}

// -------------------------------------------------------------- forward ---

namespace {

template <typename T>
void check_finite(const Batch<T>& batch, const std::string& layer) {
  for (const auto& t : batch) {
    if (!t.all_finite()) throw Error(ErrorKind::kNumeric, "non-finite activation in layer " + layer);
  }
}

template <typename T>
Batch<T> relu_all(const Batch<T>& in) {
  Batch<T> out;
  out.reserve(in.size());
  for (const auto& t : in) out.push_back(relu_forward(t));
  return out;
}

template <typename T>
std::span<const BasicTensor<T>> view(const Batch<T>& b) {
  return {b.data(), b.size()};
}

template <typename T>
Batch<T> conv_maybe_norm(const Batch<T>& in, const ConvLayer<T>& conv,
                         const std::optional<NormLayer<T>>& norm, BatchNormCache<T>* cache) {
  Batch<T> z = conv2d_forward<T>(view(in), conv.params);
  if (norm) z = batch_norm_forward<T>(view(z), norm->params, cache);
  return z;
}

template <typename T>
void accumulate(std::vector<T>& dst, const std::vector<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

template <typename T>
std::vector<T> Network<T>::forward_batch(std::span<const BasicTensor<T>> patches, Trace* trace) const {
  const Shape expected = input_shape();
  for (const auto& p : patches) {
    if (p.shape() != expected) {
      throw Error(ErrorKind::kConfig,
                  "patch shape " + p.shape().str() + " does not match network input " + expected.str());
    }
  }
  if (patches.empty()) return {};

  Batch<T> x(patches.begin(), patches.end());
  Batch<T> z = conv2d_forward<T>(view(x), stem_.params);
  check_finite(z, stem_.name);
  Batch<T> a = relu_all(z);
  if (trace) {
    *trace = Trace{};
    trace->stem.input = std::move(x);
    trace->stem.pre_activation = std::move(z);
    trace->blocks.resize(blocks_.size());
  }

  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& b = blocks_[i];
    BlockTrace* bt = trace ? &trace->blocks[i] : nullptr;
    Batch<T> pre1 = conv_maybe_norm(a, b.conv1, b.norm1, bt ? &bt->norm1 : nullptr);
    Batch<T> act1 = relu_all(pre1);
    Batch<T> sum = conv_maybe_norm(act1, b.conv2, b.norm2, bt ? &bt->norm2 : nullptr);
    if (b.projection) {
      Batch<T> s = conv_maybe_norm(a, *b.projection, b.norm_projection,
                                   bt ? &bt->norm_projection : nullptr);
      for (std::size_t n = 0; n < sum.size(); ++n) add_inplace(sum[n], s[n]);
    } else {
      for (std::size_t n = 0; n < sum.size(); ++n) add_inplace(sum[n], a[n]);
    }
    check_finite(sum, b.name);
    Batch<T> out = relu_all(sum);
    if (bt) {
      bt->input = std::move(a);
      bt->pre1 = std::move(pre1);
      bt->act1 = std::move(act1);
      bt->pre_out = std::move(sum);
    }
    a = std::move(out);
  }

  for (const auto& r : reducers_) {
    Batch<T> rz = conv2d_forward<T>(view(a), r.params);
    check_finite(rz, r.name);
    Batch<T> ra = relu_all(rz);
    if (trace) trace->reducers.push_back({std::move(a), std::move(rz)});
    a = std::move(ra);
  }

  Batch<T> out = conv2d_forward<T>(view(a), head_.params);
  check_finite(out, head_.name);
  if (trace) trace->head_input = std::move(a);

  std::vector<T> result;
  result.reserve(out.size());
  for (const auto& o : out) result.push_back(o[0]);
  return result;
}

template <typename T>
T Network<T>::forward(const BasicTensor<T>& patch) const {
  return forward_batch(std::span<const BasicTensor<T>>(&patch, 1)).front();
}

// ------------------------------------------------------------- backward ---

template <typename T>
void Network<T>::backward(const Trace& trace, std::span<const T> output_grads) {
  const std::size_t n_batch = trace.head_input.size();
  if (output_grads.size() != n_batch) {
    throw Error(ErrorKind::kConfig, "backward: " + std::to_string(output_grads.size()) +
                                        " output gradients for a batch of " + std::to_string(n_batch));
  }
  Batch<T> d;
  for (std::size_t n = 0; n < n_batch; ++n) {
    d.emplace_back(Shape{1, 1, 1}, output_grads[n]);
  }

  auto conv_back = [](ConvLayer<T>& layer, const Batch<T>& input, const Batch<T>& up, bool want_input) {
    ConvGrads<T> g = conv2d_backward<T>(view(input), layer.params, view(up), want_input);
    accumulate(layer.kernel_grad, g.kernel);
    accumulate(layer.bias_grad, g.bias);
    return std::move(g.input);
  };
  auto norm_back = [](NormLayer<T>& layer, const BatchNormCache<T>& cache, const Batch<T>& up) {
    BatchNormGrads<T> g = batch_norm_backward<T>(cache, layer.params, view(up));
    accumulate(layer.gamma_grad, g.gamma);
    accumulate(layer.beta_grad, g.beta);
    return std::move(g.input);
  };
  auto relu_back = [](const Batch<T>& pre, const Batch<T>& up) {
    Batch<T> out;
    out.reserve(up.size());
    for (std::size_t n = 0; n < up.size(); ++n) out.push_back(relu_backward(pre[n], up[n]));
    return out;
  };

  d = conv_back(head_, trace.head_input, d, true);
  for (std::size_t r = reducers_.size(); r-- > 0;) {
    d = relu_back(trace.reducers[r].pre_activation, d);
    d = conv_back(reducers_[r], trace.reducers[r].input, d, true);
  }
  for (std::size_t i = blocks_.size(); i-- > 0;) {
    auto& b = blocks_[i];
    const BlockTrace& bt = trace.blocks[i];
    const Batch<T> d_sum = relu_back(bt.pre_out, d);

    Batch<T> d_branch = b.norm2 ? norm_back(*b.norm2, bt.norm2, d_sum) : d_sum;
    Batch<T> d_act1 = conv_back(b.conv2, bt.act1, d_branch, true);
    Batch<T> d_pre1 = relu_back(bt.pre1, d_act1);
    if (b.norm1) d_pre1 = norm_back(*b.norm1, bt.norm1, d_pre1);
    Batch<T> d_input = conv_back(b.conv1, bt.input, d_pre1, true);

    if (b.projection) {
      Batch<T> d_short = b.norm_projection ? norm_back(*b.norm_projection, bt.norm_projection, d_sum) : d_sum;
      Batch<T> d_proj = conv_back(*b.projection, bt.input, d_short, true);
      for (std::size_t n = 0; n < n_batch; ++n) add_inplace(d_input[n], d_proj[n]);
    } else {
      for (std::size_t n = 0; n < n_batch; ++n) add_inplace(d_input[n], d_sum[n]);
    }
    d = std::move(d_input);
  }
  d = relu_back(trace.stem.pre_activation, d);
  conv_back(stem_, trace.stem.input, d, false);
}

template class Network<float>;
template class Network<double>;

}  // namespace tofr
