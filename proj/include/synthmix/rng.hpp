#pragma once

#include <cstdint>
#include <limits>

namespace synthmix {

/// Counter-based random stream: every value is a pure function of
/// (seed, stream, counter), so draws do not depend on execution order.
/// Satisfies UniformRandomBitGenerator and can feed <random> distributions.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  constexpr CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter = 0) noexcept
      : key_(mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL))), counter_(counter) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept { return at(counter_++); }

  /// Value at an absolute counter position; does not advance the stream.
  [[nodiscard]] constexpr result_type at(std::uint64_t counter) const noexcept {
    return mix(key_ ^ mix(counter * 0xd1342543de82ef95ULL + 0x9e3779b97f4a7c15ULL));
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Independent child stream.
  [[nodiscard]] constexpr CounterRng split(std::uint64_t substream) const noexcept {
    CounterRng child(0, 0);
    child.key_ = mix(key_ + mix(substream ^ 0xa0761d6478bd642fULL));
    child.counter_ = 0;
    return child;
  }

  [[nodiscard]] constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  // splitmix64 finalizer
  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_;
};

/// Well-known stream ids so independent consumers never share a stream.
namespace streams {
inline constexpr std::uint64_t kMask = 1;
inline constexpr std::uint64_t kInit = 2;
inline constexpr std::uint64_t kData = 3;
inline constexpr std::uint64_t kSampling = 4;
inline constexpr std::uint64_t kBaselineMix = 5;
inline constexpr std::uint64_t kPlot = 6;
}  // namespace streams

}  // namespace synthmix
