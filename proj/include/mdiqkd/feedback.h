#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "mdiqkd/optics.h"
#include "mdiqkd/random.h"

namespace mdiqkd {

// ---------------------------------------------------------------------------
// Disturbances

enum class DriftKind { kPolarizationWalk, kDelayWalk, kFrequencyWalk };

// One random-walk increment per update interval. `step` is the standard
// deviation of each increment: radians per rotation axis for polarization,
// ps for delay, Hz for frequency.
struct DriftProcess {
  DriftKind kind = DriftKind::kDelayWalk;
  double step = 0.0;
  std::uint64_t update_interval_rounds = 10000;
};

ChannelState drift_step(const ChannelState& channel, const DriftProcess& process, CounterRng& rng);

// Gram-Schmidt on the columns; removes round-off accumulated by long walks.
Unitary2 reunitarize(const Unitary2& u);

// exp(-i (wx X + wy Y + wz Z) / 2)
Unitary2 su2_rotation(double wx, double wy, double wz);

// ---------------------------------------------------------------------------
// Controllers. Each is a sequential state machine: a step consumes the
// measurement taken under the currently applied actuation and returns the
// actuation to apply for the next interval.

// Quantized actuation: always an integer number of resolution steps.
struct Actuation {
  std::int64_t steps = 0;
  double resolution = 1.0;

  double value() const { return static_cast<double>(steps) * resolution; }
};

struct RateMeasurement {
  double rate = 0.0;
  double std_error = 0.0;
};

struct FrequencyLoopParams {
  double kp = 0.3;
  double ki = 0.4;
  double kd = 0.0;
  double resolution_hz = 11.25e6;
};

// Velocity-form PID. The unquantized remainder is carried so that the
// emitted steps integrate to the continuous control law.
struct FrequencyLoopState {
  FrequencyLoopParams params;
  double previous_error = 0.0;
  double previous_error2 = 0.0;
  double pending_hz = 0.0;
  std::int64_t applied_steps = 0;
  int samples = 0;
};

// Actuation is the change of the laser frequency correction, opposing the
// measured beat (signed detuning).
std::pair<FrequencyLoopState, Actuation> frequency_lock_step(FrequencyLoopState state,
                                                             double measured_beat_hz);

struct PolarizationLoopParams {
  double probe_rad = 0.1;
  double min_probe_rad = 0.02;
  double max_probe_rad = 0.4;
  double grow = 1.5;
  double shrink = 0.6;
  double z = 2.0;  // improvement must exceed z standard errors
};

// Perturb-and-compare hill climb on the two angles of a Rz-then-Ry
// polarization controller, maximizing the singles rate behind the PBS.
struct PolarizationLoopState {
  enum class Phase { kBase, kPlus, kMinus };

  PolarizationLoopParams params;
  std::array<double, 2> angles{0.0, 0.0};
  std::array<double, 2> probe{0.1, 0.1};
  int axis = 0;
  Phase phase = Phase::kBase;
  RateMeasurement base;
  RateMeasurement plus;

  explicit PolarizationLoopState(PolarizationLoopParams p = {})
      : params(p), probe{p.probe_rad, p.probe_rad} {}
};

Unitary2 controller_rotation(const std::array<double, 2>& angles);

// Consumes the singles rate (both detectors summed) under the currently
// applied rotation, returns the rotation to apply next.
std::pair<PolarizationLoopState, Unitary2> polarization_control_step(PolarizationLoopState state,
                                                                     RateMeasurement singles);

struct TimingLoopParams {
  double resolution_ps = 27.8;
  int dither_steps = 1;
  int scan_steps = 36;  // acquisition scan covers +-scan_steps around the start
  double z = 3.0;
  bool acquire = true;
};

struct TimingLoopState {
  enum class Mode { kScan, kTrack };
  enum class Phase { kPlus, kMinus };

  TimingLoopParams params;
  Mode mode = Mode::kScan;
  Phase phase = Phase::kPlus;
  std::int64_t position = 0;  // applied correction, in steps
  std::int64_t centre = 0;    // tracked estimate of the dip minimum
  int scan_index = -1;
  std::int64_t best_position = 0;
  double best_rate = 0.0;
  RateMeasurement plus;

  explicit TimingLoopState(TimingLoopParams p = {})
      : params(p), mode(p.acquire ? Mode::kScan : Mode::kTrack) {}
};

// Dithered minimum seeking on Alice's emission time. The actuation is the
// change of emission delay; the next measurement is taken at the new
// position.
std::pair<TimingLoopState, Actuation> timing_control_step(TimingLoopState state,
                                                          RateMeasurement same_bin_rate);

// ---------------------------------------------------------------------------
// Closed-loop simulations against plant models, one row per controller step.

struct LoopTraceRow {
  std::uint64_t step = 0;
  double disturbance = 0.0;
  double measurement = 0.0;
  double actuation = 0.0;
  double residual = 0.0;
};

using LoopTrace = std::vector<LoopTraceRow>;

struct FrequencyPlant {
  double initial_detuning_hz = 100e6;
  double drift_step_hz = 0.2e6;       // random-walk increment per step
  double drift_rate_hz = 0.0;         // deterministic ramp per step
  double measurement_noise_hz = 2e6;  // beat-note readout noise
};

// Residual = true detuning after the actuation of that step.
LoopTrace simulate_frequency_loop(const FrequencyLoopParams& params, const FrequencyPlant& plant,
                                  std::uint64_t steps, std::uint64_t seed);

struct PolarizationPlant {
  double initial_transmission = 0.5;
  double drift_step_rad = 0.0;
  double counts_per_step = 1e6;  // expected singles at full transmission
};

// Disturbance = channel-only transmission, residual = 1 - controlled transmission.
LoopTrace simulate_polarization_loop(const PolarizationLoopParams& params,
                                     const PolarizationPlant& plant, std::uint64_t steps,
                                     std::uint64_t seed);

struct TimingPlant {
  double initial_offset_ps = 500.0;
  double drift_step_ps = 0.0;
  double mu = 0.03;
  double pairs_per_step = 1e9;  // emitted pulse pairs per measurement interval
  InterferenceContext interference;
  DetectorModel detectors;
};

// Same-bin coincidence probability of two single-bin pulses, averaged over
// relative phase, at the given relative delay.
double hom_same_bin_probability(double mu, double delay_ps, const InterferenceContext& ctx,
                                const DetectorModel& det, int grid_points = 256);

// Residual = remaining relative delay (ps) after the actuation of that step.
LoopTrace simulate_timing_loop(const TimingLoopParams& params, const TimingPlant& plant,
                               std::uint64_t steps, std::uint64_t seed);

}  // namespace mdiqkd
