#include "tofr/conv.hpp"

#include <algorithm>
#include <cstddef>
#include <string>

namespace tofr {

namespace {

constexpr int kTaps = kKernelSize * kKernelSize;

template <typename T>
void check_batch(std::span<const BasicTensor<T>> inputs, const ConvLayerParams<T>& params) {
  for (const auto& in : inputs) {
    (void)params.output_shape(in.shape());
  }
}

// Gathers the receptive field of output (oy, ox) into col, laid out
// (ky, kx, ci). Taps falling into the zero padding are written as 0.
template <typename T>
void gather_column(const BasicTensor<T>& in, int oy, int ox, int stride, int pad, T* col) {
  const int cin = in.channels();
  for (int ky = 0; ky < kKernelSize; ++ky) {
    const int iy = oy * stride - pad + ky;
    for (int kx = 0; kx < kKernelSize; ++kx) {
      const int ix = ox * stride - pad + kx;
      T* dst = col + (ky * kKernelSize + kx) * cin;
      if (iy < 0 || iy >= in.height() || ix < 0 || ix >= in.width()) {
        std::fill(dst, dst + cin, T{0});
      } else {
        const T* src = in.data() + in.index(iy, ix, 0);
        std::copy(src, src + cin, dst);
      }
    }
  }
}

}  // namespace

int conv_output_size(int in, int padding, int stride, int kernel) {
  const int span = in + 2 * padding - kernel;
  if (span < 0 || stride <= 0) return span < 0 ? 0 : -1;
  return span / stride + 1;
}

std::string Shape::str() const {
  return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
}

template <typename T>
ConvLayerParams<T> ConvLayerParams<T>::zeros(int out_channels, int in_channels, int stride,
                                             int padding) {
  if (stride != 1 && stride != 2) {
    throw Error(ErrorKind::kConfig, "conv stride must be 1 or 2, got " + std::to_string(stride));
  }
  if (padding != 0 && padding != 1) {
    throw Error(ErrorKind::kConfig, "conv padding must be 0 or 1, got " + std::to_string(padding));
  }
  if (out_channels <= 0 || in_channels <= 0) {
    throw Error(ErrorKind::kConfig, "conv channel counts must be positive");
  }
  ConvLayerParams p;
  p.out_channels = out_channels;
  p.in_channels = in_channels;
  p.stride = stride;
  p.padding = padding;
  p.kernel.assign(static_cast<std::size_t>(out_channels) * in_channels * kTaps, T{0});
  p.bias.assign(static_cast<std::size_t>(out_channels), T{0});
  return p;
}

template <typename T>
Shape ConvLayerParams<T>::output_shape(const Shape& input) const {
  const std::string kernel_desc = "kernel " + std::to_string(out_channels) + "x" +
                                  std::to_string(in_channels) + "x3x3";
  if (input.channels != in_channels) {
    throw Error(ErrorKind::kConfig,
                "conv input shape " + input.str() + " does not match " + kernel_desc);
  }
  if (input.height + 2 * padding < kKernelSize || input.width + 2 * padding < kKernelSize) {
    throw Error(ErrorKind::kConfig, "conv input shape " + input.str() + " (padding " +
                                        std::to_string(padding) + ") smaller than " + kernel_desc);
  }
  return Shape{conv_output_size(input.height, padding, stride),
               conv_output_size(input.width, padding, stride), out_channels};
}

template <typename T>
Batch<T> conv2d_forward(std::span<const BasicTensor<T>> inputs, const ConvLayerParams<T>& params) {
  check_batch(inputs, params);
  const int cin = params.in_channels;
  const int cout = params.out_channels;
  const int k_len = kTaps * cin;

  // Packed (ky, kx, ci, co) so the innermost loop runs over output channels.
  std::vector<T> packed(static_cast<std::size_t>(k_len) * cout);
  for (int o = 0; o < cout; ++o)
    for (int i = 0; i < cin; ++i)
      for (int ky = 0; ky < kKernelSize; ++ky)
        for (int kx = 0; kx < kKernelSize; ++kx)
          packed[static_cast<std::size_t>((ky * kKernelSize + kx) * cin + i) * cout + o] =
              params.weight(o, i, ky, kx);

  Batch<T> outputs;
  outputs.reserve(inputs.size());
  for (const auto& in : inputs) outputs.emplace_back(params.output_shape(in.shape()));
  if (inputs.empty()) return outputs;

  const int n_batch = static_cast<int>(inputs.size());
  const int out_h = outputs.front().height();

#pragma omp parallel
  {
    std::vector<T> col(static_cast<std::size_t>(k_len));
#pragma omp for collapse(2) schedule(static)
    for (int n = 0; n < n_batch; ++n) {
      for (int oy = 0; oy < out_h; ++oy) {
        const BasicTensor<T>& in = inputs[static_cast<std::size_t>(n)];
        BasicTensor<T>& out = outputs[static_cast<std::size_t>(n)];
        if (oy >= out.height()) continue;
        for (int ox = 0; ox < out.width(); ++ox) {
          gather_column(in, oy, ox, params.stride, params.padding, col.data());
          T* dst = out.data() + out.index(oy, ox, 0);
          std::copy(params.bias.begin(), params.bias.end(), dst);
          for (int k = 0; k < k_len; ++k) {
            const T a = col[static_cast<std::size_t>(k)];
            if (a == T{0}) continue;
            const T* w = packed.data() + static_cast<std::size_t>(k) * cout;
            for (int o = 0; o < cout; ++o) dst[o] += a * w[o];
          }
        }
      }
    }
  }
  return outputs;
}

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const ConvLayerParams<T>& params) {
  auto out = conv2d_forward<T>(std::span<const BasicTensor<T>>(&input, 1), params);
  return std::move(out.front());
}

template <typename T>
ConvGrads<T> conv2d_backward(std::span<const BasicTensor<T>> inputs,
                             const ConvLayerParams<T>& params,
                             std::span<const BasicTensor<T>> upstream, bool want_input_grad) {
  if (inputs.size() != upstream.size()) {
    throw Error(ErrorKind::kConfig, "conv backward: batch size mismatch");
  }
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    const Shape expected = params.output_shape(inputs[n].shape());
    if (upstream[n].shape() != expected) {
      throw Error(ErrorKind::kConfig, "conv backward: upstream shape " +
                                          upstream[n].shape().str() + " does not match output " +
                                          expected.str());
    }
  }
  const int cin = params.in_channels;
  const int cout = params.out_channels;
  const int k_len = kTaps * cin;
  const int stride = params.stride;
  const int pad = params.padding;
  const int n_batch = static_cast<int>(inputs.size());

  ConvGrads<T> grads;
  grads.kernel.assign(params.kernel.size(), T{0});
  grads.bias.assign(params.bias.size(), T{0});

  // Column buffers for every (sample, output position).
  std::vector<std::size_t> col_offset(inputs.size() + 1, 0);
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    const std::size_t positions =
        static_cast<std::size_t>(upstream[n].height()) * upstream[n].width();
    col_offset[n + 1] = col_offset[n] + positions * k_len;
  }
  std::vector<T> cols(col_offset.back());
#pragma omp parallel for schedule(static)
  for (int n = 0; n < n_batch; ++n) {
    const auto& up = upstream[static_cast<std::size_t>(n)];
    T* base = cols.data() + col_offset[static_cast<std::size_t>(n)];
    for (int oy = 0; oy < up.height(); ++oy)
      for (int ox = 0; ox < up.width(); ++ox)
        gather_column(inputs[static_cast<std::size_t>(n)], oy, ox, stride, pad,
                      base + (static_cast<std::size_t>(oy) * up.width() + ox) * k_len);
  }

  // Kernel and bias gradients, one output channel per iteration. Accumulated
  // in the (ky, kx, ci) column order, unpacked afterwards.
  std::vector<T> packed_grad(static_cast<std::size_t>(cout) * k_len, T{0});
#pragma omp parallel for schedule(static)
  for (int o = 0; o < cout; ++o) {
    T* wg = packed_grad.data() + static_cast<std::size_t>(o) * k_len;
    T bias_acc{0};
    for (int n = 0; n < n_batch; ++n) {
      const auto& up = upstream[static_cast<std::size_t>(n)];
      const T* col_base = cols.data() + col_offset[static_cast<std::size_t>(n)];
      const std::size_t positions = static_cast<std::size_t>(up.height()) * up.width();
      for (std::size_t p = 0; p < positions; ++p) {
        const T g = up[p * cout + o];
        bias_acc += g;
        if (g == T{0}) continue;
        const T* col = col_base + p * k_len;
        for (int k = 0; k < k_len; ++k) wg[k] += g * col[k];
      }
    }
    grads.bias[static_cast<std::size_t>(o)] = bias_acc;
  }
  for (int o = 0; o < cout; ++o)
    for (int ky = 0; ky < kKernelSize; ++ky)
      for (int kx = 0; kx < kKernelSize; ++kx)
        for (int i = 0; i < cin; ++i)
          grads.kernel[params.weight_index(o, i, ky, kx)] =
              packed_grad[static_cast<std::size_t>(o) * k_len + (ky * kKernelSize + kx) * cin + i];

  if (!want_input_grad) return grads;

  // Input gradients in gather form: each input pixel pulls from the outputs
  // whose windows cover it.
  std::vector<T> w_tap(static_cast<std::size_t>(kTaps) * cout * cin);  // (ky, kx, co, ci)
  for (int o = 0; o < cout; ++o)
    for (int i = 0; i < cin; ++i)
      for (int ky = 0; ky < kKernelSize; ++ky)
        for (int kx = 0; kx < kKernelSize; ++kx)
          w_tap[(static_cast<std::size_t>(ky * kKernelSize + kx) * cout + o) * cin + i] =
              params.weight(o, i, ky, kx);

  grads.input.reserve(inputs.size());
  for (const auto& in : inputs) grads.input.emplace_back(in.shape());
  const int in_h = inputs.empty() ? 0 : inputs.front().height();

#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < n_batch; ++n) {
    for (int iy = 0; iy < in_h; ++iy) {
      const auto& in = inputs[static_cast<std::size_t>(n)];
      const auto& up = upstream[static_cast<std::size_t>(n)];
      auto& ig = grads.input[static_cast<std::size_t>(n)];
      if (iy >= in.height()) continue;
      for (int ix = 0; ix < in.width(); ++ix) {
        T* dst = ig.data() + ig.index(iy, ix, 0);
        for (int ky = 0; ky < kKernelSize; ++ky) {
          const int ty = iy + pad - ky;
          if (ty < 0 || ty % stride != 0) continue;
          const int oy = ty / stride;
          if (oy >= up.height()) continue;
          for (int kx = 0; kx < kKernelSize; ++kx) {
            const int tx = ix + pad - kx;
            if (tx < 0 || tx % stride != 0) continue;
            const int ox = tx / stride;
            if (ox >= up.width()) continue;
            const T* g = up.data() + up.index(oy, ox, 0);
            const T* w = w_tap.data() + static_cast<std::size_t>(ky * kKernelSize + kx) * cout * cin;
            for (int o = 0; o < cout; ++o) {
              const T go = g[o];
              if (go == T{0}) continue;
              const T* wo = w + static_cast<std::size_t>(o) * cin;
              for (int i = 0; i < cin; ++i) dst[i] += go * wo[i];
            }
          }
        }
      }
    }
  }
  return grads;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const ConvLayerParams<T>& params,
                             const BasicTensor<T>& upstream) {
  return conv2d_backward<T>(std::span<const BasicTensor<T>>(&input, 1), params,
                            std::span<const BasicTensor<T>>(&upstream, 1), true);
}

namespace reference {

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const ConvLayerParams<T>& params) {
  BasicTensor<T> out(params.output_shape(input.shape()));
  for (int oy = 0; oy < out.height(); ++oy)
    for (int ox = 0; ox < out.width(); ++ox)
      for (int o = 0; o < params.out_channels; ++o) {
        T acc = params.bias[static_cast<std::size_t>(o)];
        for (int i = 0; i < params.in_channels; ++i)
          for (int ky = 0; ky < kKernelSize; ++ky)
            for (int kx = 0; kx < kKernelSize; ++kx) {
              const int iy = oy * params.stride - params.padding + ky;
              const int ix = ox * params.stride - params.padding + kx;
              if (iy < 0 || iy >= input.height() || ix < 0 || ix >= input.width()) continue;
              acc += input.at(iy, ix, i) * params.weight(o, i, ky, kx);
            }
        out.at(oy, ox, o) = acc;
      }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const ConvLayerParams<T>& params,
                             const BasicTensor<T>& upstream) {
  const Shape out_shape = params.output_shape(input.shape());
  if (upstream.shape() != out_shape) {
    throw Error(ErrorKind::kConfig, "conv backward: upstream shape " + upstream.shape().str() +
                                        " does not match output " + out_shape.str());
  }
  ConvGrads<T> g;
  g.input.emplace_back(input.shape());
  g.kernel.assign(params.kernel.size(), T{0});
  g.bias.assign(params.bias.size(), T{0});
  auto& ig = g.input.front();
  for (int oy = 0; oy < out_shape.height; ++oy)
    for (int ox = 0; ox < out_shape.width; ++ox)
      for (int o = 0; o < params.out_channels; ++o) {
        const T up = upstream.at(oy, ox, o);
        g.bias[static_cast<std::size_t>(o)] += up;
        for (int i = 0; i < params.in_channels; ++i)
          for (int ky = 0; ky < kKernelSize; ++ky)
            for (int kx = 0; kx < kKernelSize; ++kx) {
              const int iy = oy * params.stride - params.padding + ky;
              const int ix = ox * params.stride - params.padding + kx;
              if (iy < 0 || iy >= input.height() || ix < 0 || ix >= input.width()) continue;
              g.kernel[params.weight_index(o, i, ky, kx)] += up * input.at(iy, ix, i);
              ig.at(iy, ix, i) += up * params.weight(o, i, ky, kx);
            }
      }
  return g;
}

template BasicTensor<float> conv2d_forward(const BasicTensor<float>&, const ConvLayerParams<float>&);
template BasicTensor<double> conv2d_forward(const BasicTensor<double>&,
                                            const ConvLayerParams<double>&);
template ConvGrads<float> conv2d_backward(const BasicTensor<float>&, const ConvLayerParams<float>&,
                                          const BasicTensor<float>&);
template ConvGrads<double> conv2d_backward(const BasicTensor<double>&,
                                           const ConvLayerParams<double>&,
                                           const BasicTensor<double>&);

}  // namespace reference

#define TOFR_INSTANTIATE_CONV(T)                                                                \
  template struct ConvLayerParams<T>;                                                           \
  template Batch<T> conv2d_forward(std::span<const BasicTensor<T>>, const ConvLayerParams<T>&); \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const ConvLayerParams<T>&);     \
  template ConvGrads<T> conv2d_backward(std::span<const BasicTensor<T>>,                        \
                                        const ConvLayerParams<T>&,                              \
                                        std::span<const BasicTensor<T>>, bool);                 \
  template ConvGrads<T> conv2d_backward(const BasicTensor<T>&, const ConvLayerParams<T>&,       \
                                        const BasicTensor<T>&);

TOFR_INSTANTIATE_CONV(float)
TOFR_INSTANTIATE_CONV(double)

#undef TOFR_INSTANTIATE_CONV

}  // namespace tofr
