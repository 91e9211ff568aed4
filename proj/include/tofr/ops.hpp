#pragma once

#include <span>
#include <vector>

#include "tofr/tensor.hpp"

namespace tofr {

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input);

/// Gates upstream by (input > 0).
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& upstream);

/// a += b; shapes must match.
template <typename T>
void add_inplace(BasicTensor<T>& a, const BasicTensor<T>& b);

// Batch normalisation with statistics taken over (batch, height, width) per
// channel. Only the ablation variant uses it and it always normalises with the
// statistics of the batch it is given, training or inference.
template <typename T>
struct BatchNormParams {
  std::vector<T> gamma;
  std::vector<T> beta;
  T epsilon = T(1e-5);

  static BatchNormParams identity(int channels) {
    return {std::vector<T>(static_cast<std::size_t>(channels), T{1}),
            std::vector<T>(static_cast<std::size_t>(channels), T{0}), T(1e-5)};
  }
  template <typename U>
  BatchNormParams<U> cast() const {
    return {std::vector<U>(gamma.begin(), gamma.end()), std::vector<U>(beta.begin(), beta.end()),
            static_cast<U>(epsilon)};
  }
};

template <typename T>
struct BatchNormCache {
  Batch<T> normalized;       // x_hat
  std::vector<T> inv_std;    // per channel
};

template <typename T>
Batch<T> batch_norm_forward(std::span<const BasicTensor<T>> inputs, const BatchNormParams<T>& params,
                            BatchNormCache<T>* cache = nullptr);

template <typename T>
struct BatchNormGrads {
  Batch<T> input;
  std::vector<T> gamma;
  std::vector<T> beta;
};

template <typename T>
BatchNormGrads<T> batch_norm_backward(const BatchNormCache<T>& cache,
                                      const BatchNormParams<T>& params,
                                      std::span<const BasicTensor<T>> upstream);

/// Huber-form smooth L1 on r = prediction - target:
///   0.5 r^2 / beta        if |r| < beta
///   |r| - 0.5 beta        otherwise
template <typename T>
struct LossValue {
  T loss;
  T gradient;  // d loss / d prediction
};

template <typename T>
LossValue<T> smooth_l1(T prediction, T target, T beta);

}  // namespace tofr
