#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace mdiqkd {

struct Interval {
  double lower = 0.0;
  double upper = 0.0;

  bool contains(double x) const { return lower <= x && x <= upper; }
};

// Wilson score interval for k successes out of n trials at z standard
// deviations. n == 0 yields the vacuous [0, 1].
inline Interval wilson_interval(std::uint64_t k, std::uint64_t n, double z) {
  if (k > n) throw std::invalid_argument("wilson_interval: k > n");
  if (!(z >= 0.0)) throw std::invalid_argument("wilson_interval: z must be >= 0");
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  Interval out{std::max(0.0, centre - half), std::min(1.0, centre + half)};
  if (k == 0) out.lower = 0.0;
  if (k == n) out.upper = 1.0;
  return out;
}

}  // namespace mdiqkd
