#include <Eigen/LU>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "mdiqkd/feedback.h"
#include "mdiqkd/session.h"

using namespace mdiqkd;

namespace {

double unitarity_defect(const Unitary2& u) {
  return (u.adjoint() * u - Unitary2::Identity()).norm();
}

double tail_max_abs(const LoopTrace& t, std::size_t from) {
  double m = 0.0;
  for (std::size_t i = from; i < t.size(); ++i) m = std::max(m, std::abs(t[i].residual));
  return m;
}

}  // namespace

TEST_CASE("zero drift leaves the channel untouched") {
  ChannelState c;
  c.delay_ps = 12.0;
  c.detuning_hz = 3e6;
  c.polarization_unitary = su2_rotation(0.1, 0.2, 0.3);
  for (DriftKind k : {DriftKind::kPolarizationWalk, DriftKind::kDelayWalk, DriftKind::kFrequencyWalk}) {
    CounterRng rng(1, StreamId::kDrift, 0);
    const ChannelState out = drift_step(c, {k, 0.0, 1}, rng);
    CHECK(out.delay_ps == c.delay_ps);
    CHECK(out.detuning_hz == c.detuning_hz);
    CHECK((out.polarization_unitary - c.polarization_unitary).norm() == 0.0);
  }
  CounterRng rng(1, StreamId::kDrift, 0);
  CHECK_THROWS_AS(drift_step(c, {DriftKind::kDelayWalk, -1.0, 1}, rng), std::invalid_argument);
}

TEST_CASE("polarization walk stays unitary") {
  ChannelState c;
  const DriftProcess p{DriftKind::kPolarizationWalk, 0.05, 1};
  for (std::uint64_t k = 0; k < 10000; ++k) {
    CounterRng rng(4, StreamId::kDrift, k);
    c = drift_step(c, p, rng);
  }
  CHECK(unitarity_defect(c.polarization_unitary) < 1e-9);
  CHECK(std::abs(std::abs(c.polarization_unitary.determinant()) - 1.0) < 1e-9);
}

TEST_CASE("su2 rotation matches its closed form") {
  const Unitary2 u = su2_rotation(0.0, 0.0, 1.0);
  CHECK(std::abs(u(0, 0) - std::polar(1.0, -0.5)) < 1e-15);
  CHECK(std::abs(u(1, 1) - std::polar(1.0, 0.5)) < 1e-15);
  const Unitary2 r = su2_rotation(0.0, M_PI, 0.0);
  CHECK(std::norm(r(0, 0)) < 1e-30);
  CHECK(std::abs(std::norm(r(1, 0)) - 1.0) < 1e-15);
}

TEST_CASE("delay walk variance grows linearly") {
  const int walkers = 4000;
  const int steps = 50;
  const double sigma = 3.0;
  const DriftProcess p{DriftKind::kDelayWalk, sigma, 1};
  double sum = 0.0, sum2 = 0.0;
  for (int w = 0; w < walkers; ++w) {
    ChannelState c;
    for (int k = 0; k < steps; ++k) {
      CounterRng rng(11, StreamId::kDrift, static_cast<std::uint64_t>(w) * steps + k);
      c = drift_step(c, p, rng);
    }
    sum += c.delay_ps;
    sum2 += c.delay_ps * c.delay_ps;
  }
  const double mean = sum / walkers;
  const double var = sum2 / walkers - mean * mean;
  const double expect = steps * sigma * sigma;
  CHECK(std::abs(mean) < 5.0 * std::sqrt(expect / walkers));
  CHECK(std::abs(var - expect) < 5.0 * expect * std::sqrt(2.0 / walkers));
}

TEST_CASE("frequency lock: zero error gives zero actuation") {
  FrequencyLoopState s;
  for (int i = 0; i < 100; ++i) {
    auto [next, act] = frequency_lock_step(s, 0.0);
    CHECK(act.steps == 0);
    s = next;
  }
  CHECK_THROWS_AS(frequency_lock_step(s, std::nan("")), std::invalid_argument);
}

TEST_CASE("frequency lock pulls 100 MHz in and holds") {
  const FrequencyLoopParams params;
  const FrequencyPlant plant;
  const LoopTrace t = simulate_frequency_loop(params, plant, 100000, 7);
  std::size_t settle = t.size();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (std::abs(t[i].residual) < 20e6) {
      settle = i;
      break;
    }
  }
  REQUIRE(settle < 50);
  CHECK(tail_max_abs(t, settle) < 20e6);
  for (const LoopTraceRow& r : t) {
    const double q = r.actuation / params.resolution_hz;
    CHECK(std::abs(q - std::round(q)) < 1e-9);
  }
}

TEST_CASE("frequency lock tracks a ramp with the type-1 error") {
  FrequencyLoopParams params;
  FrequencyPlant plant;
  plant.initial_detuning_hz = 0.0;
  plant.drift_step_hz = 0.0;
  plant.measurement_noise_hz = 0.0;
  plant.drift_rate_hz = 1e6;
  const LoopTrace t = simulate_frequency_loop(params, plant, 20000, 3);
  double mean = 0.0;
  for (std::size_t i = 10000; i < t.size(); ++i) mean += t[i].residual;
  mean /= static_cast<double>(t.size() - 10000);
  // Velocity-form PI: the integral term balances the ramp at e = r / ki.
  // Residual is sampled after the actuation, one ramp step before the next
  // measurement.
  const double expect = plant.drift_rate_hz / params.ki - plant.drift_rate_hz;
  CHECK(std::abs(mean - expect) < params.resolution_hz);
  CHECK(tail_max_abs(t, 10000) < std::abs(expect) + 2.0 * params.resolution_hz);
}

TEST_CASE("polarization loop keeps an aligned input aligned") {
  PolarizationLoopParams params;
  PolarizationPlant plant;
  plant.initial_transmission = 1.0;
  const LoopTrace t = simulate_polarization_loop(params, plant, 3000, 5);
  // Probing costs at most 1 - cos^2(probe/2).
  const double probe_cost = std::pow(std::sin(params.max_probe_rad / 2.0), 2);
  for (const LoopTraceRow& r : t) CHECK(1.0 - r.residual >= 1.0 - probe_cost - 1e-12);
  double tail = 0.0;
  for (std::size_t i = 2000; i < t.size(); ++i) tail += 1.0 - t[i].residual;
  CHECK(tail / 1000.0 > 0.995);
}

TEST_CASE("polarization loop recovers from half transmission") {
  const PolarizationLoopParams params;
  PolarizationPlant plant;
  plant.initial_transmission = 0.5;
  const LoopTrace t = simulate_polarization_loop(params, plant, 3000, 9);
  CHECK(t.front().disturbance == doctest::Approx(0.5).epsilon(1e-12));
  double tail = 0.0;
  for (std::size_t i = 2000; i < t.size(); ++i) tail += 1.0 - t[i].residual;
  CHECK(tail / 1000.0 >= 0.99);
}

TEST_CASE("polarization loop follows a slow walk") {
  const PolarizationLoopParams params;
  PolarizationPlant plant;
  plant.initial_transmission = 0.9;
  plant.drift_step_rad = 0.005;
  const LoopTrace t = simulate_polarization_loop(params, plant, 20000, 13);
  double controlled = 0.0, open = 0.0;
  for (std::size_t i = 1000; i < t.size(); ++i) {
    controlled += 1.0 - t[i].residual;
    open += t[i].disturbance;
  }
  const double n = static_cast<double>(t.size() - 1000);
  CHECK(controlled / n >= 0.95);
  CHECK(controlled / n > open / n);
}

TEST_CASE("polarization step validates its input") {
  PolarizationLoopState s;
  CHECK_THROWS_AS(polarization_control_step(s, {-1.0, 0.0}), std::invalid_argument);
}

TEST_CASE("timing loop holds a zero offset") {
  const TimingLoopParams params;
  TimingPlant plant;
  plant.initial_offset_ps = 0.0;
  const LoopTrace t = simulate_timing_loop(params, plant, 400, 2);
  const std::size_t tracking = 2 * params.scan_steps + 2;
  CHECK(tail_max_abs(t, tracking) <= params.resolution_ps + 1e-9);
}

TEST_CASE("timing loop acquires a 500 ps offset") {
  const TimingLoopParams params;
  TimingPlant plant;
  plant.initial_offset_ps = 500.0;
  const LoopTrace t = simulate_timing_loop(params, plant, 400, 3);
  CHECK(std::abs(t.front().residual) > 400.0);
  const std::size_t tracking = 2 * params.scan_steps + 2;
  CHECK(tail_max_abs(t, tracking) <= params.resolution_ps + 1e-9);
  for (const LoopTraceRow& r : t) {
    const double q = r.actuation / params.resolution_ps;
    CHECK(std::abs(q - std::round(q)) < 1e-9);
  }
}

TEST_CASE("timing loop without acquisition walks in from a small offset") {
  TimingLoopParams params;
  params.acquire = false;
  TimingPlant plant;
  plant.initial_offset_ps = 120.0;
  const LoopTrace t = simulate_timing_loop(params, plant, 400, 4);
  CHECK(tail_max_abs(t, 100) <= params.resolution_ps + 1e-9);
}

TEST_CASE("timing step rejects non-finite rates") {
  TimingLoopState s;
  CHECK_THROWS_AS(timing_control_step(s, {std::nan(""), 0.0}), std::invalid_argument);
}

TEST_CASE("same-bin probability has its minimum at zero delay") {
  const InterferenceContext ctx;
  const DetectorModel det;
  const double p0 = hom_same_bin_probability(0.03, 0.0, ctx, det);
  CHECK(p0 < hom_same_bin_probability(0.03, 27.8, ctx, det));
  CHECK(hom_same_bin_probability(0.03, 50.0, ctx, det) ==
        doctest::Approx(hom_same_bin_probability(0.03, -50.0, ctx, det)).epsilon(1e-12));
}

TEST_CASE("session feedback restores visibility under delay drift") {
  SessionConfig base;
  base.n_rounds = 1'500'000;
  base.batch_rounds = 8192;
  base.seed = 21;
  base.alice.mu_signal = base.bob.mu_signal = 0.3;
  base.alice.mu_decoy = base.bob.mu_decoy = 0.05;
  base.keep_sifted = false;

  const SessionResult statik = run_session(base);

  SessionConfig drifting = base;
  drifting.drift.delay_step_ps = 25.0;
  drifting.drift.polarization_step_rad = 0.03;
  drifting.drift.interval_rounds = 8192;
  const SessionResult open = run_session(drifting);

  SessionConfig closed = drifting;
  closed.feedback.enabled = true;
  const SessionResult locked = run_session(closed);

  const double v_static = statik.monitor.visibility();
  MESSAGE("static " << v_static << " open " << open.monitor.visibility() << " closed "
                    << locked.monitor.visibility());
  CHECK(locked.monitor.visibility() >= 0.9 * v_static);
  CHECK(locked.monitor.visibility() > open.monitor.visibility());
}
