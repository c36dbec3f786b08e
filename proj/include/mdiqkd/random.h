#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace mdiqkd {

// Philox4x32-10 block function (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// Logical stream identifiers. Each (seed, stream, index) triple names an
// independent random sequence, so any round can be recomputed in isolation.
enum class StreamId : std::uint32_t {
  kAlice = 1,
  kBob = 2,
  kCharlie = 3,
  kAliceSource = 4,
  kBobSource = 5,
  kDrift = 6,
  kControl = 7,
  kHom = 8,
  kCalibration = 9,
};

// Counter-based generator keyed by (master seed, stream id, index).
// Satisfies UniformRandomBitGenerator so <random> distributions work on it.
class CounterRng {
 public:
  using result_type = std::uint32_t;

  CounterRng(std::uint64_t seed, StreamId stream, std::uint64_t index);
  CounterRng(std::uint64_t seed, std::uint32_t stream, std::uint64_t index);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  // 53-bit uniform on [0, 1).
  double uniform();
  // Standard normal via Box-Muller; consumes exactly two uniforms.
  double normal();
  // Poisson by sequential inversion; intended for small means (< 30).
  std::uint32_t poisson(double mean);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> buffer_{};
  int pos_ = 4;
};

}  // namespace mdiqkd
