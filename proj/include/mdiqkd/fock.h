#pragma once

#include <array>
#include <cstdint>
#include <map>

#include "mdiqkd/encoding.h"

namespace mdiqkd {

// Single-photon time-bin qubit: amplitudes of |e> and |l>.
struct TimeBinState {
  cplx early{1.0, 0.0};
  cplx late{0.0, 0.0};

  double norm_sq() const { return std::norm(early) + std::norm(late); }
};

// Output occupation over 8 modes: slot_index(detector, bin) * 2 + internal,
// where internal 0 is the mode shared by both inputs and 1 the part of
// input B orthogonal to it.
using Occupation = std::array<std::uint8_t, 8>;

// Exact output statistics of k_a photons in mode `a` (input port A) and k_b
// photons in mode `b` (input port B) after the per-bin 50:50 beamsplitter.
// `overlap` in [0, 1] is the amplitude overlap of B's internal mode with A's.
// Computed by expanding the product of creation operators.
struct FockDistribution {
  std::map<Occupation, double> by_occupation;
  // Threshold-detector view: probability of each set of slots holding >= 1 photon.
  std::array<double, 16> by_click_mask{};

  double total() const;
};

FockDistribution fock_output_distribution(int k_a, int k_b, const TimeBinState& a,
                                          const TimeBinState& b, double overlap = 1.0);

// Ideal-detection BSM statistics for one photon from each party. The six
// two-click patterns plus the bunched outcomes (two photons in one slot).
struct BsmOracleResult {
  std::array<double, 16> by_click_mask{};
  double bunched = 0.0;  // both photons in one slot: a single click

  double psi_minus() const;
  double psi_plus() const;
  double pattern(unsigned mask) const { return by_click_mask[mask]; }
};

// Throws std::invalid_argument when either state is not unit-norm (1e-12).
BsmOracleResult fock_bsm_oracle(const TimeBinState& a, const TimeBinState& b);

TimeBinState bb84_state(Basis basis, std::uint8_t bit);

}  // namespace mdiqkd
