#include "mdiqkd/random.h"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mdiqkd {
namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
  const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
  lo = static_cast<std::uint32_t>(product);
  hi = static_cast<std::uint32_t>(product >> 32);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t lo0, hi0, lo1, hi1;
    mulhilo(kPhiloxM0, ctr[0], lo0, hi0);
    mulhilo(kPhiloxM1, ctr[2], lo1, hi1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

CounterRng::CounterRng(std::uint64_t seed, StreamId stream, std::uint64_t index)
    : CounterRng(seed, static_cast<std::uint32_t>(stream), index) {}

// Counter words: [block, stream, index lo, index hi]. The block word advances
// as draws are consumed; 2^32 blocks per (stream, index) is far beyond use.
CounterRng::CounterRng(std::uint64_t seed, std::uint32_t stream, std::uint64_t index)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      counter_{0, stream, static_cast<std::uint32_t>(index),
               static_cast<std::uint32_t>(index >> 32)} {}

void CounterRng::refill() {
  buffer_ = philox4x32(counter_, key_);
  ++counter_[0];
  pos_ = 0;
}

CounterRng::result_type CounterRng::operator()() {
  if (pos_ == 4) refill();
  return buffer_[pos_++];
}

double CounterRng::uniform() {
  const std::uint64_t hi = (*this)() >> 5;  // 27 bits
  const std::uint64_t lo = (*this)() >> 6;  // 26 bits
  return static_cast<double>((hi << 26) | lo) * 0x1.0p-53;
}

double CounterRng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint32_t CounterRng::poisson(double mean) {
  if (mean < 0.0 || !std::isfinite(mean)) {
    throw std::invalid_argument("poisson mean must be finite and non-negative");
  }
  if (mean == 0.0) return 0;
  const double u = uniform();
  double p = std::exp(-mean);
  double cdf = p;
  std::uint32_t k = 0;
  while (u >= cdf) {
    ++k;
    p *= mean / k;
    cdf += p;
    if (p == 0.0 && cdf < u) break;  // numerical tail, u beyond representable cdf
  }
  return k;
}

}  // namespace mdiqkd
