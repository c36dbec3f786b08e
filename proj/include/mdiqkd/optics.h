#pragma once

#include <array>
#include <cstdint>

#include <Eigen/Core>

#include "mdiqkd/encoding.h"
#include "mdiqkd/random.h"

namespace mdiqkd {

using Unitary2 = Eigen::Matrix2cd;

struct ChannelState {
  double loss_db = 0.0;
  Unitary2 polarization_unitary = Unitary2::Identity();
  double delay_ps = 0.0;
  double detuning_hz = 0.0;

  void validate() const;
  double transmission() const;
};

// Threshold detector pair. dark_click_prob is per gated temporal slot.
struct DetectorModel {
  double efficiency = 1.0;
  double dark_click_prob = 0.0;
  double jitter_sigma_ps = 85.0;  // FWHM ~200 ps
  double coincidence_window_ps = 700.0;

  void validate() const;
  // Probability that a jitter-smeared photon click stays inside the
  // +-window/2 acceptance gate around its bin centre.
  double gate_pass_probability() const;
};

// Temporal pulse shape convention: Gaussian intensity envelope with FWHM
// bin_width_ps. The amplitude overlap of two such pulses offset by dt is
// exp(-ln2 * dt^2 / width^2). The spectral overlap uses the same functional
// form with spectral_width_hz as its width; the default 1.26 GHz together
// with 200 ps corresponds to a time-bandwidth product of 0.252, which is
// kept as the calibrated pair rather than the transform-limited 0.441.
struct InterferenceContext {
  double mode_overlap = 1.0;  // xi, scalar indistinguishability
  double relative_delay_ps = 0.0;
  double relative_detuning_hz = 0.0;
  double bin_width_ps = 200.0;
  double bin_separation_ps = 2500.0;
  double spectral_width_hz = 1.26e9;
  // Polarizing beam splitters in front of the beamsplitter inputs: they
  // project each input onto the common axis, so polarization drift becomes
  // loss. When false, polarization mismatch reduces the overlap instead.
  bool input_polarizers = true;

  void validate() const;
};

enum class Detector : std::uint8_t { kD1 = 0, kD2 = 1 };
enum class TimeBin : std::uint8_t { kEarly = 0, kLate = 1 };

// Slot index = 2 * detector + bin; click masks use one bit per slot.
inline constexpr int slot_index(Detector d, TimeBin b) {
  return 2 * static_cast<int>(d) + static_cast<int>(b);
}
inline constexpr unsigned kMaskD1Early = 1u << 0;
inline constexpr unsigned kMaskD1Late = 1u << 1;
inline constexpr unsigned kMaskD2Early = 1u << 2;
inline constexpr unsigned kMaskD2Late = 1u << 3;

struct DetectionEvent {
  Detector detector = Detector::kD1;
  TimeBin bin = TimeBin::kEarly;
  double time_ps = 0.0;  // relative to the early-bin centre of the round
};

// At most one registered click per slot.
struct ClickSet {
  std::array<DetectionEvent, 4> events{};
  int count = 0;

  void add(const DetectionEvent& e) { events[count++] = e; }
  unsigned mask() const;
};

PulsePair propagate(const PulsePair& pulse, const ChannelState& channel);

double temporal_overlap(double delay_ps, double width_ps);
double spectral_overlap(double detuning_hz, double width_hz);
// xi * g(dt) * s(dnu), using the context's relative delay and detuning.
double effective_overlap(const InterferenceContext& ctx);

// Everything about one pulse pair's interference that does not depend on
// the realized amplitudes: per-input amplitude factors (polarizer
// projection) and the complex mode overlap of the two inputs.
struct InterferenceSetup {
  cplx factor_a{1.0, 0.0};
  cplx factor_b{1.0, 0.0};
  cplx overlap{1.0, 0.0};
};

InterferenceSetup interference_setup(const PulsePair& a, const PulsePair& b,
                                     const InterferenceContext& ctx);

// Mean photon numbers of the four output slots, indexed by slot_index.
using SlotIntensities = std::array<double, 4>;

// 50:50 beamsplitter per time bin, D1 = (a + b)/sqrt2, D2 = (a - b)/sqrt2,
// applied to the matched components; unmatched residue adds incoherently.
SlotIntensities output_intensities(cplx a_early, cplx a_late, cplx b_early, cplx b_late,
                                   const InterferenceSetup& setup);

// 1 - (1 - dark) * exp(-efficiency * n), ignoring gating.
double click_probability(double mean_photons, const DetectorModel& det);
// Probability that a slot registers a click inside its gate.
double registered_click_probability(double mean_photons, const DetectorModel& det);

ClickSet sample_clicks(const SlotIntensities& n, const DetectorModel& det, double bin_separation_ps,
                       CounterRng& rng);

// Throws std::invalid_argument when the pulses belong to different slots.
ClickSet interfere_and_click(const PulsePair& a, const PulsePair& b, const InterferenceContext& ctx,
                             const DetectorModel& det, CounterRng& rng);

// Probability of each exact click mask, averaged over the relative phase of
// the two inputs on a uniform midpoint grid. Pulse amplitudes are taken as
// given; only the relative phase is integrated.
struct PatternProbabilities {
  std::array<double, 16> by_mask{};
  // P(D1 and D2 both click in the early bin) + same for the late bin.
  double same_bin_coincidence = 0.0;

  double psi_minus() const { return by_mask[kMaskD1Early | kMaskD2Late] + by_mask[kMaskD1Late | kMaskD2Early]; }
  double psi_plus() const { return by_mask[kMaskD1Early | kMaskD1Late] + by_mask[kMaskD2Early | kMaskD2Late]; }
};

PatternProbabilities phase_averaged_patterns(const PulsePair& a, const PulsePair& b,
                                             const InterferenceContext& ctx, const DetectorModel& det,
                                             int grid_points = 1024);

// Same-bin cross-detector coincidence probability given realized slot
// intensities.
double same_bin_coincidence(const SlotIntensities& n, const DetectorModel& det);

struct HomEstimate {
  double probability = 0.0;
  double std_error = 0.0;
  std::uint64_t trials = 0;
};

// Both inputs carry a single early-bin pulse of mean photon number mu.
PulsePair hom_probe_pulse(double mu);

// Monte Carlo over independent uniform global phases of the two inputs; each
// trial contributes the exact conditional coincidence probability. Trials are
// processed in fixed blocks so the result does not depend on thread count.
HomEstimate hom_coincidence_prob(const PulsePair& a, const PulsePair& b,
                                 const InterferenceContext& ctx, const DetectorModel& det,
                                 std::uint64_t n_trials, std::uint64_t seed);
HomEstimate hom_coincidence_prob(double mu, const InterferenceContext& ctx,
                                 const DetectorModel& det, std::uint64_t n_trials,
                                 std::uint64_t seed);

// Single-threaded reference of the above with a plain accumulation loop.
HomEstimate hom_coincidence_prob_serial(const PulsePair& a, const PulsePair& b,
                                        const InterferenceContext& ctx, const DetectorModel& det,
                                        std::uint64_t n_trials, std::uint64_t seed);

// Counts sampled clicks through interfere_and_click instead of averaging
// conditional probabilities.
HomEstimate hom_coincidence_sampled(const PulsePair& a, const PulsePair& b,
                                    const InterferenceContext& ctx, const DetectorModel& det,
                                    std::uint64_t n_trials, std::uint64_t seed);

struct HomVisibility {
  double visibility = 0.0;
  double std_error = 0.0;
  HomEstimate matched;         // at the context's overlap
  HomEstimate distinguishable; // same phases, overlap forced to 0
};

// V = [C(inf) - C(ctx)] / C(inf) with common random phases for both terms.
HomVisibility hom_visibility(double mu, const InterferenceContext& ctx, const DetectorModel& det,
                             std::uint64_t n_trials, std::uint64_t seed);

}  // namespace mdiqkd
