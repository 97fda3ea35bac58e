#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "synthmix/autograd.hpp"
#include "synthmix/rng.hpp"

namespace synthmix {

template <class T>
struct NamedParam {
  std::string name;
  ag::Var<T> var;
};

template <class T>
using ParamList = std::vector<NamedParam<T>>;

enum class Activation { LeakyReLU, ReLU, Tanh };

template <class T>
ag::Var<T> activate(const ag::Var<T>& x, Activation a) {
  switch (a) {
    case Activation::LeakyReLU:
      return ag::leaky_relu(x, T(0.2));
    case Activation::ReLU:
      return ag::leaky_relu(x, T(0));
    case Activation::Tanh:
      return ag::tanh(x);
  }
  return x;
}

/// Order-sensitive hash over parameter bytes. Used to assert which networks
/// an optimizer step touched.
template <class T>
std::size_t hash_params(const ParamList<T>& params) {
  std::size_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params) {
    const auto& v = p.var.value();
    const std::string_view bytes(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(T));
    h ^= std::hash<std::string_view>{}(bytes) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return h;
}

template <class T>
void zero_grads(const ParamList<T>& params) {
  for (auto p : params) p.var.zero_grad();
}

template <class T>
std::size_t count_params(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.var.value().size();
  return n;
}

inline std::string join_name(std::string_view prefix, std::string_view leaf) {
  if (prefix.empty()) return std::string(leaf);
  return std::string(prefix) + "." + std::string(leaf);
}

namespace detail {

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual default for conv layers.
template <class T>
Tensor<T> uniform_init(Shape s, int fan_in, CounterRng& rng) {
  Tensor<T> t(s);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.vec()) v = static_cast<T>((2.0 * rng.uniform01() - 1.0) * bound);
  return t;
}

}  // namespace detail

template <class T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, CounterRng& rng)
      : stride_(stride), pad_(pad) {
    const int fan_in = in_ch * kernel * kernel;
    weight_ = ag::Var<T>::parameter(detail::uniform_init<T>({out_ch, in_ch, kernel, kernel}, fan_in, rng));
    bias_ = ag::Var<T>::parameter(detail::uniform_init<T>({1, out_ch, 1, 1}, fan_in, rng));
  }

  ag::Var<T> operator()(const ag::Var<T>& x) const { return ag::conv2d(x, weight_, bias_, stride_, pad_); }

  void collect(ParamList<T>& out, std::string_view prefix) const {
    out.push_back({join_name(prefix, "w"), weight_});
    out.push_back({join_name(prefix, "b"), bias_});
  }

  void zero_init() {
    weight_.mutable_value().fill(T{0});
    bias_.mutable_value().fill(T{0});
  }

  [[nodiscard]] ag::Var<T>& weight() { return weight_; }
  [[nodiscard]] ag::Var<T>& bias() { return bias_; }
  [[nodiscard]] int out_channels() const { return weight_.shape().n; }

 private:
  ag::Var<T> weight_, bias_;
  int stride_ = 1;
  int pad_ = 0;
};

template <class T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(int in_ch, int out_ch, int kernel, int stride, int pad, CounterRng& rng)
      : stride_(stride), pad_(pad) {
    const int fan_in = out_ch * kernel * kernel;
    weight_ = ag::Var<T>::parameter(detail::uniform_init<T>({in_ch, out_ch, kernel, kernel}, fan_in, rng));
    bias_ = ag::Var<T>::parameter(detail::uniform_init<T>({1, out_ch, 1, 1}, fan_in, rng));
  }

  ag::Var<T> operator()(const ag::Var<T>& x) const {
    return ag::conv_transpose2d(x, weight_, bias_, stride_, pad_);
  }

  void zero_init() {
    weight_.mutable_value().fill(T{0});
    bias_.mutable_value().fill(T{0});
  }

  [[nodiscard]] ag::Var<T>& weight() { return weight_; }
  [[nodiscard]] ag::Var<T>& bias() { return bias_; }

  void collect(ParamList<T>& out, std::string_view prefix) const {
    out.push_back({join_name(prefix, "w"), weight_});
    out.push_back({join_name(prefix, "b"), bias_});
  }

 private:
  ag::Var<T> weight_, bias_;
  int stride_ = 2;
  int pad_ = 1;
};

}  // namespace synthmix
