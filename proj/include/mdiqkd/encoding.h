#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <string_view>

#include <Eigen/Core>

#include "mdiqkd/random.h"

namespace mdiqkd {

using cplx = std::complex<double>;
using Jones = Eigen::Vector2cd;

enum class Basis : std::uint8_t { kZ = 0, kX = 1 };
enum class Intensity : std::uint8_t { kVacuum = 0, kDecoy = 1, kSignal = 2 };

inline constexpr std::array<Intensity, 3> kIntensities = {Intensity::kVacuum, Intensity::kDecoy,
                                                          Intensity::kSignal};

std::string_view to_string(Basis basis);
std::string_view to_string(Intensity intensity);

// One party's per-round preparation choice.
struct QubitSpec {
  Basis basis = Basis::kZ;
  std::uint8_t bit = 0;
  Intensity intensity = Intensity::kSignal;
  double global_phase = 0.0;  // radians in [0, 2*pi)

  // Four classification bits as stored by the time-tagging FIFO:
  // bit0 basis (0 = Z, 1 = X), bit1 value, bits2-3 intensity class.
  std::uint8_t tag_bits() const;
  static QubitSpec from_tag_bits(std::uint8_t bits);
};

struct SourceParams {
  double mu_signal = 0.03;
  double mu_decoy = 0.01;
  double p_z = 0.5;
  double p_bit_one = 0.5;
  // Indexed by Intensity.
  std::array<double, 3> p_intensity = {0.25, 0.25, 0.5};
  // Combined extinction of both intensity modulators.
  double extinction_ratio_db = 60.0;
  double clock_rate_hz = 20e6;

  // Throws std::invalid_argument on the first violated constraint.
  void validate() const;
  double mean_photon_number(Intensity intensity) const;
  // Relative intensity leaking into nominally-empty time bins.
  double leakage() const;
};

// Field amplitudes (photons^1/2) of the early and late temporal modes of one
// attenuated, phase-randomized pulse.
struct PulsePair {
  cplx early{0.0, 0.0};
  cplx late{0.0, 0.0};
  Jones polarization = Jones(1.0, 0.0);
  std::uint64_t emission_slot = 0;
  // Accumulated by channel propagation and consumed at the beamsplitter.
  double arrival_offset_ps = 0.0;
  double frequency_offset_hz = 0.0;

  double mean_photon_number() const { return std::norm(early) + std::norm(late); }
};

// Draws basis, bit, intensity and a continuous global phase, in that order,
// always consuming the same number of variates.
QubitSpec sample_spec(CounterRng& rng, const SourceParams& params);

PulsePair encode(const QubitSpec& spec, const SourceParams& params, std::uint64_t slot = 0);

// Normalized single-photon time-bin mode of a BB84 state including modulator
// leakage: (early, late) amplitudes with unit norm.
std::array<cplx, 2> qubit_mode(Basis basis, std::uint8_t bit, double leakage);

}  // namespace mdiqkd
