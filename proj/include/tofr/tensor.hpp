#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tofr/errors.hpp"

namespace tofr {

/// Spatial shape of an activation: height x width x channels.
struct Shape {
  int height = 0;
  int width = 0;
  int channels = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
           static_cast<std::size_t>(channels);
  }
  std::string str() const;
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense 3-D tensor, row-major with channels innermost:
/// index(y, x, c) = (y * width + x) * channels + c.
template <typename T>
class BasicTensor {
 public:
  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{0})
      : shape_(shape), values_(shape.size(), fill) {
    if (shape.height < 0 || shape.width < 0 || shape.channels < 0) {
      throw Error(ErrorKind::kConfig, "negative tensor shape " + shape.str());
    }
  }
  BasicTensor(Shape shape, std::vector<T> values) : shape_(shape), values_(std::move(values)) {
    if (values_.size() != shape_.size()) {
      throw Error(ErrorKind::kConfig, "tensor value count " + std::to_string(values_.size()) +
                                          " does not match shape " + shape_.str());
    }
  }

  /// Flat parameter view, shape (count, 1, 1).
  static BasicTensor flat(std::size_t count, T fill = T{0}) {
    return BasicTensor(Shape{static_cast<int>(count), 1, 1}, fill);
  }

  const Shape& shape() const noexcept { return shape_; }
  int height() const noexcept { return shape_.height; }
  int width() const noexcept { return shape_.width; }
  int channels() const noexcept { return shape_.channels; }
  std::size_t size() const noexcept { return values_.size(); }

  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(shape_.width) +
            static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(shape_.channels) +
           static_cast<std::size_t>(c);
  }
  T& at(int y, int x, int c) noexcept { return values_[index(y, x, c)]; }
  const T& at(int y, int x, int c) const noexcept { return values_[index(y, x, c)]; }

  T* data() noexcept { return values_.data(); }
  const T* data() const noexcept { return values_.data(); }
  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }
  T& operator[](std::size_t i) noexcept { return values_[i]; }
  const T& operator[](std::size_t i) const noexcept { return values_[i]; }

  bool all_finite() const noexcept {
    for (const T& v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(values_.begin(), values_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  Shape shape_{};
  std::vector<T> values_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

template <typename T>
using Batch = std::vector<BasicTensor<T>>;

}  // namespace tofr
