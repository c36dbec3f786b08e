#include "mdiqkd/fock.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "mdiqkd/optics.h"

namespace mdiqkd {
namespace {

using Polynomial = std::map<Occupation, cplx>;

struct Term {
  int mode;
  cplx coeff;
};

// Multiplies a polynomial in creation operators by a linear form.
Polynomial multiply(const Polynomial& poly, const std::vector<Term>& form) {
  Polynomial out;
  for (const auto& [occ, c] : poly) {
    for (const Term& t : form) {
      if (t.coeff == cplx(0.0, 0.0)) continue;
      Occupation next = occ;
      ++next[t.mode];
      out[next] += c * t.coeff;
    }
  }
  return out;
}

int mode_index(Detector d, TimeBin b, int internal) { return slot_index(d, b) * 2 + internal; }

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

}  // namespace

double FockDistribution::total() const {
  double s = 0.0;
  for (const auto& [occ, p] : by_occupation) s += p;
  return s;
}

FockDistribution fock_output_distribution(int k_a, int k_b, const TimeBinState& a,
                                          const TimeBinState& b, double overlap) {
  if (k_a < 0 || k_b < 0 || k_a + k_b > 24) {
    throw std::invalid_argument("fock_output_distribution: photon numbers out of range");
  }
  if (!(overlap >= 0.0 && overlap <= 1.0)) {
    throw std::invalid_argument("fock_output_distribution: overlap must lie in [0, 1]");
  }
  const double h = 1.0 / std::sqrt(2.0);
  const double orth = std::sqrt(std::max(0.0, 1.0 - overlap * overlap));
  const cplx amp_a[2] = {a.early, a.late};
  const cplx amp_b[2] = {b.early, b.late};

  // a^dag_x -> (d1^dag_x + d2^dag_x)/sqrt2, b^dag_x -> (d1^dag_x - d2^dag_x)/sqrt2.
  std::vector<Term> form_a;
  std::vector<Term> form_b;
  for (int bin = 0; bin < 2; ++bin) {
    const auto tb = static_cast<TimeBin>(bin);
    form_a.push_back({mode_index(Detector::kD1, tb, 0), h * amp_a[bin]});
    form_a.push_back({mode_index(Detector::kD2, tb, 0), h * amp_a[bin]});
    form_b.push_back({mode_index(Detector::kD1, tb, 0), h * overlap * amp_b[bin]});
    form_b.push_back({mode_index(Detector::kD2, tb, 0), -h * overlap * amp_b[bin]});
    form_b.push_back({mode_index(Detector::kD1, tb, 1), h * orth * amp_b[bin]});
    form_b.push_back({mode_index(Detector::kD2, tb, 1), -h * orth * amp_b[bin]});
  }

  Polynomial poly{{Occupation{}, cplx(1.0, 0.0)}};
  for (int i = 0; i < k_a; ++i) poly = multiply(poly, form_a);
  for (int i = 0; i < k_b; ++i) poly = multiply(poly, form_b);

  // (A^dag)^k |0> / sqrt(k!) is the normalized k-photon state; a monomial
  // prod (c^dag_i)^{n_i} acting on vacuum has norm sqrt(prod n_i!).
  const double input_norm = factorial(k_a) * factorial(k_b);
  FockDistribution out;
  for (const auto& [occ, c] : poly) {
    double weight = 1.0;
    for (std::uint8_t n : occ) weight *= factorial(n);
    const double p = std::norm(c) * weight / input_norm;
    if (p == 0.0) continue;
    out.by_occupation[occ] += p;
    unsigned mask = 0;
    for (int slot = 0; slot < 4; ++slot) {
      if (occ[2 * slot] + occ[2 * slot + 1] > 0) mask |= 1u << slot;
    }
    out.by_click_mask[mask] += p;
  }
  return out;
}

double BsmOracleResult::psi_minus() const {
  return by_click_mask[kMaskD1Early | kMaskD2Late] + by_click_mask[kMaskD1Late | kMaskD2Early];
}

double BsmOracleResult::psi_plus() const {
  return by_click_mask[kMaskD1Early | kMaskD1Late] + by_click_mask[kMaskD2Early | kMaskD2Late];
}

BsmOracleResult fock_bsm_oracle(const TimeBinState& a, const TimeBinState& b) {
  if (std::abs(a.norm_sq() - 1.0) > 1e-12 || std::abs(b.norm_sq() - 1.0) > 1e-12) {
    throw std::invalid_argument("fock_bsm_oracle: input states must be unit-norm");
  }
  const FockDistribution dist = fock_output_distribution(1, 1, a, b, 1.0);
  BsmOracleResult out;
  out.by_click_mask = dist.by_click_mask;
  for (int slot = 0; slot < 4; ++slot) out.bunched += out.by_click_mask[1u << slot];
  return out;
}

TimeBinState bb84_state(Basis basis, std::uint8_t bit) {
  const auto m = qubit_mode(basis, bit, 0.0);
  return {m[0], m[1]};
}

}  // namespace mdiqkd
