#include "mdiqkd/encoding.h"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mdiqkd {

std::string_view to_string(Basis basis) { return basis == Basis::kZ ? "Z" : "X"; }

std::string_view to_string(Intensity intensity) {
  switch (intensity) {
    case Intensity::kVacuum:
      return "vacuum";
    case Intensity::kDecoy:
      return "decoy";
    case Intensity::kSignal:
      return "signal";
  }
  return "?";
}

std::uint8_t QubitSpec::tag_bits() const {
  return static_cast<std::uint8_t>(static_cast<unsigned>(basis) | (bit & 1u) << 1 |
                                   static_cast<unsigned>(intensity) << 2);
}

QubitSpec QubitSpec::from_tag_bits(std::uint8_t bits) {
  const unsigned cls = (bits >> 2) & 3u;
  if (cls > 2) throw std::invalid_argument("tag bits carry an invalid intensity class");
  QubitSpec spec;
  spec.basis = static_cast<Basis>(bits & 1u);
  spec.bit = static_cast<std::uint8_t>((bits >> 1) & 1u);
  spec.intensity = static_cast<Intensity>(cls);
  return spec;
}

void SourceParams::validate() const {
  auto probability = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
    }
  };
  probability(p_z, "p_z");
  probability(p_bit_one, "p_bit_one");
  for (double p : p_intensity) probability(p, "intensity probability");
  const double total = p_intensity[0] + p_intensity[1] + p_intensity[2];
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("intensity probabilities must sum to 1");
  }
  if (!(mu_signal >= 0.0) || !(mu_decoy >= 0.0)) {
    throw std::invalid_argument("mean photon numbers must be non-negative");
  }
  if (!(mu_decoy < mu_signal)) {
    throw std::invalid_argument("mu_decoy must be smaller than mu_signal");
  }
  if (!(extinction_ratio_db > 0.0)) {
    throw std::invalid_argument("extinction_ratio_db must be positive");
  }
  if (!(clock_rate_hz > 0.0)) {
    throw std::invalid_argument("clock_rate_hz must be positive");
  }
}

double SourceParams::mean_photon_number(Intensity intensity) const {
  switch (intensity) {
    case Intensity::kVacuum:
      return 0.0;
    case Intensity::kDecoy:
      return mu_decoy;
    case Intensity::kSignal:
      return mu_signal;
  }
  return 0.0;
}

double SourceParams::leakage() const {
  return std::isinf(extinction_ratio_db) ? 0.0 : std::pow(10.0, -extinction_ratio_db / 10.0);
}

QubitSpec sample_spec(CounterRng& rng, const SourceParams& params) {
  const double u_basis = rng.uniform();
  const double u_bit = rng.uniform();
  const double u_class = rng.uniform();
  const double u_phase = rng.uniform();

  QubitSpec spec;
  spec.basis = u_basis < params.p_z ? Basis::kZ : Basis::kX;
  spec.bit = u_bit < params.p_bit_one ? 1 : 0;
  if (u_class < params.p_intensity[0]) {
    spec.intensity = Intensity::kVacuum;
  } else if (u_class < params.p_intensity[0] + params.p_intensity[1]) {
    spec.intensity = Intensity::kDecoy;
  } else {
    spec.intensity = Intensity::kSignal;
  }
  // Degenerate configurations (p = 1) must never fall through to a
  // neighbouring class through rounding of the cumulative sum.
  if (params.p_intensity[2] == 0.0 && spec.intensity == Intensity::kSignal) {
    spec.intensity = params.p_intensity[1] > 0.0 ? Intensity::kDecoy : Intensity::kVacuum;
  }
  spec.global_phase = 2.0 * std::numbers::pi * u_phase;
  return spec;
}

PulsePair encode(const QubitSpec& spec, const SourceParams& params, std::uint64_t slot) {
  PulsePair pulse;
  pulse.emission_slot = slot;
  const double mu = params.mean_photon_number(spec.intensity);
  if (mu == 0.0) return pulse;

  const cplx phase = std::polar(1.0, spec.global_phase);
  if (spec.basis == Basis::kZ) {
    const cplx full = std::sqrt(mu) * phase;
    // Leakage light shares the pulse's global phase.
    const cplx leak = std::sqrt(mu * params.leakage()) * phase;
    pulse.early = spec.bit == 0 ? full : leak;
    pulse.late = spec.bit == 0 ? leak : full;
  } else {
    const cplx half = std::sqrt(mu / 2.0) * phase;
    pulse.early = half;
    pulse.late = spec.bit == 0 ? half : -half;
  }
  return pulse;
}

std::array<cplx, 2> qubit_mode(Basis basis, std::uint8_t bit, double leakage) {
  if (basis == Basis::kX) {
    const double h = 1.0 / std::sqrt(2.0);
    return {cplx(h, 0.0), cplx(bit == 0 ? h : -h, 0.0)};
  }
  const double norm = std::sqrt(1.0 + leakage);
  const cplx full(1.0 / norm, 0.0);
  const cplx leak(std::sqrt(leakage) / norm, 0.0);
  return bit == 0 ? std::array<cplx, 2>{full, leak} : std::array<cplx, 2>{leak, full};
}

}  // namespace mdiqkd
