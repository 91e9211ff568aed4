#include "tofr/ops.hpp"

#include <cmath>
#include <string>

namespace tofr {

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input) {
  BasicTensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T{0} ? input[i] : T{0};
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& upstream) {
  if (input.shape() != upstream.shape()) {
    throw Error(ErrorKind::kConfig, "relu backward: shape " + upstream.shape().str() +
                                        " does not match " + input.shape().str());
  }
  BasicTensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T{0} ? upstream[i] : T{0};
  return out;
}

template <typename T>
void add_inplace(BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorKind::kConfig,
                "add: shape " + a.shape().str() + " does not match " + b.shape().str());
  }
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

template <typename T>
Batch<T> batch_norm_forward(std::span<const BasicTensor<T>> inputs, const BatchNormParams<T>& params,
                            BatchNormCache<T>* cache) {
  if (inputs.empty()) return {};
  const Shape shape = inputs.front().shape();
  const int channels = shape.channels;
  if (static_cast<std::size_t>(channels) != params.gamma.size()) {
    throw Error(ErrorKind::kConfig, "batch norm: input " + shape.str() + " vs " +
                                        std::to_string(params.gamma.size()) + " channels");
  }
  for (const auto& in : inputs) {
    if (in.shape() != shape) throw Error(ErrorKind::kConfig, "batch norm: mixed shapes in batch");
  }
  const std::size_t positions = static_cast<std::size_t>(shape.height) * shape.width;
  const T count = static_cast<T>(positions * inputs.size());

  std::vector<T> mean(static_cast<std::size_t>(channels), T{0});
  std::vector<T> var(static_cast<std::size_t>(channels), T{0});
  for (const auto& in : inputs)
    for (std::size_t p = 0; p < positions; ++p)
      for (int c = 0; c < channels; ++c) mean[c] += in[p * channels + c];
  for (auto& m : mean) m /= count;
  for (const auto& in : inputs)
    for (std::size_t p = 0; p < positions; ++p)
      for (int c = 0; c < channels; ++c) {
        const T d = in[p * channels + c] - mean[c];
        var[c] += d * d;
      }
  std::vector<T> inv_std(static_cast<std::size_t>(channels));
  for (int c = 0; c < channels; ++c) inv_std[c] = T{1} / std::sqrt(var[c] / count + params.epsilon);

  Batch<T> out;
  Batch<T> normalized;
  out.reserve(inputs.size());
  for (const auto& in : inputs) {
    BasicTensor<T> xhat(shape);
    BasicTensor<T> y(shape);
    for (std::size_t p = 0; p < positions; ++p)
      for (int c = 0; c < channels; ++c) {
        const std::size_t i = p * channels + c;
        xhat[i] = (in[i] - mean[c]) * inv_std[c];
        y[i] = params.gamma[c] * xhat[i] + params.beta[c];
      }
    out.push_back(std::move(y));
    if (cache) normalized.push_back(std::move(xhat));
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename T>
BatchNormGrads<T> batch_norm_backward(const BatchNormCache<T>& cache,
                                      const BatchNormParams<T>& params,
                                      std::span<const BasicTensor<T>> upstream) {
  if (upstream.size() != cache.normalized.size()) {
    throw Error(ErrorKind::kConfig, "batch norm backward: batch size mismatch");
  }
  BatchNormGrads<T> g;
  const int channels = static_cast<int>(params.gamma.size());
  g.gamma.assign(params.gamma.size(), T{0});
  g.beta.assign(params.beta.size(), T{0});
  if (upstream.empty()) return g;
  const Shape shape = cache.normalized.front().shape();
  const std::size_t positions = static_cast<std::size_t>(shape.height) * shape.width;
  const T count = static_cast<T>(positions * upstream.size());

  for (std::size_t n = 0; n < upstream.size(); ++n) {
    if (upstream[n].shape() != shape) {
      throw Error(ErrorKind::kConfig, "batch norm backward: upstream shape mismatch");
    }
    for (std::size_t p = 0; p < positions; ++p)
      for (int c = 0; c < channels; ++c) {
        const std::size_t i = p * channels + c;
        g.beta[c] += upstream[n][i];
        g.gamma[c] += upstream[n][i] * cache.normalized[n][i];
      }
  }
  // dx = gamma * inv_std / N * (N*dy - sum(dy) - x_hat * sum(dy * x_hat))
  for (std::size_t n = 0; n < upstream.size(); ++n) {
    BasicTensor<T> dx(shape);
    for (std::size_t p = 0; p < positions; ++p)
      for (int c = 0; c < channels; ++c) {
        const std::size_t i = p * channels + c;
        dx[i] = params.gamma[c] * cache.inv_std[c] / count *
                (count * upstream[n][i] - g.beta[c] - cache.normalized[n][i] * g.gamma[c]);
      }
    g.input.push_back(std::move(dx));
  }
  return g;
}

template <typename T>
LossValue<T> smooth_l1(T prediction, T target, T beta) {
  if (!(beta > T{0})) throw Error(ErrorKind::kConfig, "smooth_l1: beta must be positive");
  const T r = prediction - target;
  const T a = std::abs(r);
  if (a < beta) return {T(0.5) * r * r / beta, r / beta};
  return {a - T(0.5) * beta, r > T{0} ? T{1} : T{-1}};
}

#define TOFR_INSTANTIATE_OPS(T)                                                                   \
  template BasicTensor<T> relu_forward(const BasicTensor<T>&);                                    \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);            \
  template void add_inplace(BasicTensor<T>&, const BasicTensor<T>&);                              \
  template Batch<T> batch_norm_forward(std::span<const BasicTensor<T>>, const BatchNormParams<T>&, \
                                       BatchNormCache<T>*);                                       \
  template BatchNormGrads<T> batch_norm_backward(const BatchNormCache<T>&,                        \
                                                 const BatchNormParams<T>&,                       \
                                                 std::span<const BasicTensor<T>>);                \
  template LossValue<T> smooth_l1(T, T, T);

TOFR_INSTANTIATE_OPS(float)
TOFR_INSTANTIATE_OPS(double)

#undef TOFR_INSTANTIATE_OPS

}  // namespace tofr
