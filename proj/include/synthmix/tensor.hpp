#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "synthmix/error.hpp"

namespace synthmix {

/// NCHW extent. Scalars are {1,1,1,1}.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  [[nodiscard]] constexpr std::size_t size() const noexcept {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  [[nodiscard]] constexpr std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
  constexpr bool operator==(const Shape&) const noexcept = default;

  [[nodiscard]] std::string str() const {
    std::ostringstream os;
    os << '[' << n << ',' << c << ',' << h << ',' << w << ']';
    return os.str();
  }
};

/// Dense row-major NCHW tensor with value semantics.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0}) : shape_(shape), data_(shape.size(), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    detail::require<DimensionError>(data_.size() == shape_.size(),
                                    "tensor data size does not match shape " + shape_.str());
  }

  static Tensor scalar(T v) { return Tensor({1, 1, 1, 1}, v); }
  /// Single-channel image tensor [1,1,h,w].
  static Tensor image(int h, int w, T fill = T{0}) { return Tensor({1, 1, h, w}, fill); }

  [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  [[nodiscard]] T* data() noexcept { return data_.data(); }
  [[nodiscard]] const T* data() const noexcept { return data_.data(); }
  [[nodiscard]] std::span<T> span() noexcept { return data_; }
  [[nodiscard]] std::span<const T> span() const noexcept { return data_; }
  [[nodiscard]] std::vector<T>& vec() noexcept { return data_; }
  [[nodiscard]] const std::vector<T>& vec() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(int n, int c, int h, int w) noexcept { return data_[index(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const noexcept { return data_[index(n, c, h, w)]; }

  /// Convenience accessor for [1,1,h,w] images.
  T& operator()(int h, int w) noexcept { return data_[static_cast<std::size_t>(h) * shape_.w + w]; }
  const T& operator()(int h, int w) const noexcept {
    return data_[static_cast<std::size_t>(h) * shape_.w + w];
  }

  [[nodiscard]] T item() const {
    detail::require<DimensionError>(data_.size() == 1, "item() on non-scalar tensor " + shape_.str());
    return data_[0];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor& operator+=(const Tensor& o) {
    detail::require<DimensionError>(o.shape_ == shape_, "shape mismatch in +=: " + shape_.str() + " vs " +
                                                            o.shape_.str());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  Tensor reshaped(Shape s) const {
    detail::require<DimensionError>(s.size() == shape_.size(), "reshape size mismatch");
    return Tensor(s, data_);
  }

  template <class U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool operator==(const Tensor&) const = default;

 private:
  [[nodiscard]] std::size_t index(int n, int c, int h, int w) const noexcept {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  Shape shape_{0, 0, 0, 0};
  std::vector<T> data_;
};

template <class T>
inline void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  detail::require<DimensionError>(a.shape() == b.shape(), std::string(what) + ": shape mismatch " +
                                                              a.shape().str() + " vs " + b.shape().str());
}

}  // namespace synthmix
