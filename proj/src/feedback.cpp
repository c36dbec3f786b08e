#include "mdiqkd/feedback.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mdiqkd {
namespace {

double transmission_through_pbs(const Unitary2& total) {
  // Input light is prepared along H; the PBS passes the H component.
  return std::norm(total(0, 0));
}

// Gaussian approximation of Poisson counting noise; adequate for the
// large expected counts used by the plant models.
RateMeasurement counted(double expected, double scale, CounterRng& rng) {
  const double counts = std::max(0.0, expected + std::sqrt(std::max(expected, 0.0)) * rng.normal());
  return {counts / scale, std::sqrt(std::max(counts, 1.0)) / scale};
}

}  // namespace

Unitary2 su2_rotation(double wx, double wy, double wz) {
  const double theta = std::sqrt(wx * wx + wy * wy + wz * wz);
  if (theta == 0.0) return Unitary2::Identity();
  const double c = std::cos(theta / 2.0);
  const double s = std::sin(theta / 2.0) / theta;
  const cplx i(0.0, 1.0);
  Unitary2 u;
  u(0, 0) = c - i * s * wz;
  u(0, 1) = -i * s * wx - s * wy;
  u(1, 0) = -i * s * wx + s * wy;
  u(1, 1) = c + i * s * wz;
  return u;
}

Unitary2 reunitarize(const Unitary2& u) {
  Eigen::Vector2cd c0 = u.col(0).normalized();
  Eigen::Vector2cd c1 = u.col(1) - c0.dot(u.col(1)) * c0;
  c1.normalize();
  Unitary2 out;
  out.col(0) = c0;
  out.col(1) = c1;
  return out;
}

ChannelState drift_step(const ChannelState& channel, const DriftProcess& process, CounterRng& rng) {
  if (!(process.step >= 0.0)) throw std::invalid_argument("drift step must be >= 0");
  ChannelState out = channel;
  if (process.step == 0.0) return out;
  switch (process.kind) {
    case DriftKind::kPolarizationWalk: {
      const double wx = process.step * rng.normal();
      const double wy = process.step * rng.normal();
      const double wz = process.step * rng.normal();
      out.polarization_unitary = reunitarize(su2_rotation(wx, wy, wz) * channel.polarization_unitary);
      break;
    }
    case DriftKind::kDelayWalk:
      out.delay_ps += process.step * rng.normal();
      break;
    case DriftKind::kFrequencyWalk:
      out.detuning_hz += process.step * rng.normal();
      break;
  }
  return out;
}

std::pair<FrequencyLoopState, Actuation> frequency_lock_step(FrequencyLoopState state,
                                                             double measured_beat_hz) {
  if (!std::isfinite(measured_beat_hz)) {
    throw std::invalid_argument("frequency_lock_step: beat frequency must be finite");
  }
  const auto& p = state.params;
  const double e = measured_beat_hz;
  if (state.samples == 0) {
    state.previous_error = e;
    state.previous_error2 = e;
  }
  const double e1 = state.previous_error;
  const double e2 = state.previous_error2;
  const double delta = -(p.kp * (e - e1) + p.ki * e + p.kd * (e - 2.0 * e1 + e2));

  state.pending_hz += delta;
  const auto steps = static_cast<std::int64_t>(std::llround(state.pending_hz / p.resolution_hz));
  state.pending_hz -= static_cast<double>(steps) * p.resolution_hz;
  state.applied_steps += steps;
  state.previous_error2 = e1;
  state.previous_error = e;
  ++state.samples;
  return {state, Actuation{steps, p.resolution_hz}};
}

Unitary2 controller_rotation(const std::array<double, 2>& angles) {
  return su2_rotation(0.0, angles[0], 0.0) * su2_rotation(0.0, 0.0, angles[1]);
}

std::pair<PolarizationLoopState, Unitary2> polarization_control_step(PolarizationLoopState state,
                                                                     RateMeasurement singles) {
  if (!(singles.rate >= 0.0)) {
    throw std::invalid_argument("polarization_control_step: rates must be non-negative");
  }
  using Phase = PolarizationLoopState::Phase;
  const int axis = state.axis;
  std::array<double, 2> next = state.angles;
  switch (state.phase) {
    case Phase::kBase:
      state.base = singles;
      state.phase = Phase::kPlus;
      next[axis] += state.probe[axis];
      break;
    case Phase::kPlus:
      state.plus = singles;
      state.phase = Phase::kMinus;
      next[axis] -= state.probe[axis];
      break;
    case Phase::kMinus: {
      const RateMeasurement& base = state.base;
      const RateMeasurement& plus = state.plus;
      const RateMeasurement& minus = singles;
      const auto significant = [&](const RateMeasurement& m) {
        return m.rate - base.rate > state.params.z * std::hypot(base.std_error, m.std_error);
      };
      int direction = 0;
      if (significant(plus) && plus.rate >= minus.rate) {
        direction = 1;
      } else if (significant(minus)) {
        direction = -1;
      }
      auto& probe = state.probe[axis];
      if (direction != 0) {
        state.angles[axis] += direction * probe;
        probe = std::min(probe * state.params.grow, state.params.max_probe_rad);
      } else {
        probe = std::max(probe * state.params.shrink, state.params.min_probe_rad);
      }
      state.axis = 1 - axis;
      state.phase = Phase::kBase;
      next = state.angles;
      break;
    }
  }
  return {state, controller_rotation(next)};
}

std::pair<TimingLoopState, Actuation> timing_control_step(TimingLoopState state,
                                                          RateMeasurement same_bin_rate) {
  if (!std::isfinite(same_bin_rate.rate) || !std::isfinite(same_bin_rate.std_error)) {
    throw std::invalid_argument("timing_control_step: rate estimate must be finite");
  }
  using Mode = TimingLoopState::Mode;
  using Phase = TimingLoopState::Phase;
  const auto& p = state.params;
  const std::int64_t k = p.dither_steps;
  Actuation act{0, p.resolution_ps};
  const auto move_to = [&](std::int64_t target) {
    act.steps = target - state.position;
    state.position = target;
  };

  if (state.mode == Mode::kScan) {
    if (state.scan_index >= 0 && (state.scan_index == 0 || same_bin_rate.rate < state.best_rate)) {
      state.best_rate = same_bin_rate.rate;
      state.best_position = state.position;
    }
    ++state.scan_index;
    if (state.scan_index <= 2 * p.scan_steps) {
      move_to(state.centre - p.scan_steps + state.scan_index);
    } else {
      state.centre = state.best_position;
      state.mode = Mode::kTrack;
      state.phase = Phase::kPlus;
      move_to(state.centre + k);
    }
    return {state, act};
  }

  if (state.position != state.centre + (state.phase == Phase::kPlus ? k : -k)) {
    // Not at a probe point yet (tracking entered without a scan).
    state.phase = Phase::kPlus;
    move_to(state.centre + k);
    return {state, act};
  }
  if (state.phase == Phase::kPlus) {
    state.plus = same_bin_rate;
    state.phase = Phase::kMinus;
    move_to(state.centre - k);
  } else {
    const double diff = state.plus.rate - same_bin_rate.rate;
    const double se = std::hypot(state.plus.std_error, same_bin_rate.std_error);
    if (diff > p.z * se) {
      state.centre -= 1;
    } else if (diff < -p.z * se) {
      state.centre += 1;
    }
    state.phase = Phase::kPlus;
    move_to(state.centre + k);
  }
  return {state, act};
}

LoopTrace simulate_frequency_loop(const FrequencyLoopParams& params, const FrequencyPlant& plant,
                                  std::uint64_t steps, std::uint64_t seed) {
  LoopTrace trace;
  trace.reserve(steps);
  FrequencyLoopState state;
  state.params = params;
  double disturbance = plant.initial_detuning_hz;
  double correction = 0.0;
  for (std::uint64_t k = 0; k < steps; ++k) {
    CounterRng rng(seed, StreamId::kControl, k);
    const double measured = disturbance + correction + plant.measurement_noise_hz * rng.normal();
    auto [next, act] = frequency_lock_step(state, measured);
    state = next;
    correction += act.value();
    trace.push_back({k, disturbance, measured, act.value(), disturbance + correction});
    disturbance += plant.drift_rate_hz + plant.drift_step_hz * rng.normal();
  }
  return trace;
}

LoopTrace simulate_polarization_loop(const PolarizationLoopParams& params,
                                     const PolarizationPlant& plant, std::uint64_t steps,
                                     std::uint64_t seed) {
  if (!(plant.initial_transmission >= 0.0 && plant.initial_transmission <= 1.0)) {
    throw std::invalid_argument("initial_transmission must lie in [0, 1]");
  }
  LoopTrace trace;
  trace.reserve(steps);
  const double theta = 2.0 * std::acos(std::sqrt(plant.initial_transmission));
  ChannelState channel;
  channel.polarization_unitary =
      su2_rotation(0.0, 0.0, 1.1) * su2_rotation(0.0, theta, 0.0) * su2_rotation(0.0, 0.0, 0.7);
  const DriftProcess walk{DriftKind::kPolarizationWalk, plant.drift_step_rad, 1};

  PolarizationLoopState state(params);
  Unitary2 applied = controller_rotation(state.angles);
  for (std::uint64_t k = 0; k < steps; ++k) {
    CounterRng rng(seed, StreamId::kControl, k);
    const double t_now = transmission_through_pbs(applied * channel.polarization_unitary);
    const RateMeasurement m = counted(plant.counts_per_step * t_now, 1.0, rng);
    auto [next, rotation] = polarization_control_step(state, m);
    state = next;
    applied = rotation;
    const double t_after = transmission_through_pbs(applied * channel.polarization_unitary);
    trace.push_back({k, transmission_through_pbs(channel.polarization_unitary), m.rate, t_after,
                     1.0 - t_after});
    CounterRng drift_rng(seed, StreamId::kDrift, k);
    channel = drift_step(channel, walk, drift_rng);
  }
  return trace;
}

double hom_same_bin_probability(double mu, double delay_ps, const InterferenceContext& ctx,
                                const DetectorModel& det, int grid_points) {
  InterferenceContext local = ctx;
  local.relative_delay_ps = delay_ps;
  const PulsePair p = hom_probe_pulse(mu);
  return phase_averaged_patterns(p, p, local, det, grid_points).same_bin_coincidence;
}

LoopTrace simulate_timing_loop(const TimingLoopParams& params, const TimingPlant& plant,
                               std::uint64_t steps, std::uint64_t seed) {
  LoopTrace trace;
  trace.reserve(steps);
  TimingLoopState state(params);
  double offset = plant.initial_offset_ps;
  for (std::uint64_t k = 0; k < steps; ++k) {
    CounterRng rng(seed, StreamId::kControl, k);
    const double delay = offset + state.position * params.resolution_ps;
    const double p = hom_same_bin_probability(plant.mu, delay, plant.interference, plant.detectors);
    const RateMeasurement m = counted(p * plant.pairs_per_step, plant.pairs_per_step, rng);
    auto [next, act] = timing_control_step(state, m);
    state = next;
    trace.push_back({k, offset, m.rate, act.value(), offset + state.centre * params.resolution_ps});
    offset += plant.drift_step_ps * rng.normal();
  }
  return trace;
}

}  // namespace mdiqkd
