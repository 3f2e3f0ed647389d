#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace knudsen {

// Philox4x32-10 block function.
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key) noexcept;
};

// What a stream is used for. Distinct purposes never share random numbers.
enum class Purpose : std::uint32_t {
  Chain = 1,
  Start = 2,
  Discretize = 3,
  Stationarity = 4,
  ExitTime = 5,
  Clt = 6,
  Correlation = 7,
  Moments = 8,
  Test = 99,
};

// Counter-based stream keyed by (seed, stream id, purpose).
class Stream {
 public:
  using result_type = std::uint32_t;

  Stream(std::uint64_t seed, std::uint32_t stream_id, Purpose purpose) noexcept;

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() noexcept;

  // Uniform on the open interval (0,1), 53 bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  double normal() noexcept;
  // Bernoulli(p).
  bool bernoulli(double p) noexcept { return uniform() < p; }

 private:
  void refill() noexcept;

  Philox4x32::Key key_;
  Philox4x32::Counter ctr_;
  Philox4x32::Counter buf_{};
  int used_ = 4;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace knudsen
