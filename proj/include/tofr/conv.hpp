#pragma once

#include <span>
#include <vector>

#include "tofr/tensor.hpp"

namespace tofr {

inline constexpr int kKernelSize = 3;

/// floor((in + 2*pad - k) / stride) + 1, or a non-positive value when the
/// window does not fit.
int conv_output_size(int in, int padding, int stride, int kernel = kKernelSize);

/// 3x3 convolution parameters. Weights are stored (out, in, kh, kw).
template <typename T>
struct ConvLayerParams {
  int out_channels = 0;
  int in_channels = 0;
  int stride = 1;
  int padding = 1;
  std::vector<T> kernel;
  std::vector<T> bias;

  /// Zero-initialised layer; validates stride in {1, 2} and padding in {0, 1}.
  static ConvLayerParams zeros(int out_channels, int in_channels, int stride, int padding);

  std::size_t weight_index(int o, int i, int ky, int kx) const noexcept {
    return ((static_cast<std::size_t>(o) * in_channels + i) * kKernelSize + ky) * kKernelSize + kx;
  }
  T& weight(int o, int i, int ky, int kx) noexcept { return kernel[weight_index(o, i, ky, kx)]; }
  const T& weight(int o, int i, int ky, int kx) const noexcept {
    return kernel[weight_index(o, i, ky, kx)];
  }

  /// Throws ErrorKind::kConfig when the input channel count disagrees or the
  /// padded input is smaller than the kernel.
  Shape output_shape(const Shape& input) const;

  template <typename U>
  ConvLayerParams<U> cast() const {
    return {out_channels, in_channels, stride, padding,
            std::vector<U>(kernel.begin(), kernel.end()), std::vector<U>(bias.begin(), bias.end())};
  }
};

template <typename T>
struct ConvGrads {
  Batch<T> input;  // empty when input gradients were not requested
  std::vector<T> kernel;
  std::vector<T> bias;
};

// OpenMP kernels. Every output element is produced by exactly one thread with a
// fixed summation order, so results do not depend on the thread count.
template <typename T>
Batch<T> conv2d_forward(std::span<const BasicTensor<T>> inputs, const ConvLayerParams<T>& params);

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const ConvLayerParams<T>& params);

/// Gradients of the batch-summed output w.r.t. inputs, kernel and bias.
template <typename T>
ConvGrads<T> conv2d_backward(std::span<const BasicTensor<T>> inputs,
                             const ConvLayerParams<T>& params,
                             std::span<const BasicTensor<T>> upstream, bool want_input_grad = true);

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const ConvLayerParams<T>& params,
                             const BasicTensor<T>& upstream);

namespace reference {

// Direct nested-loop definitions, serial. Kept for tests and benchmarks.
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const ConvLayerParams<T>& params);

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const ConvLayerParams<T>& params,
                             const BasicTensor<T>& upstream);

}  // namespace reference

}  // namespace tofr
