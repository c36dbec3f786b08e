#include <cmath>
#include <limits>
#include <numbers>

#include "doctest.h"
#include "mdiqkd/encoding.h"
#include "mdiqkd/feedback.h"
#include "mdiqkd/fock.h"
#include "mdiqkd/optics.h"
#include "oracles.h"

using namespace mdiqkd;

namespace {

DetectorModel ideal_detector() {
  DetectorModel d;
  d.jitter_sigma_ps = 0.0;
  return d;
}

PulsePair pulse(cplx early, cplx late) {
  PulsePair p;
  p.early = early;
  p.late = late;
  return p;
}

}  // namespace

TEST_CASE("propagate: identity, 10 dB and 16 dB") {
  const PulsePair in = pulse(std::sqrt(0.03), 0.0);
  ChannelState ch;
  const PulsePair same = propagate(in, ch);
  CHECK(same.early == in.early);
  CHECK(same.late == in.late);
  CHECK((same.polarization - in.polarization).norm() == 0.0);

  ch.loss_db = 10.0;
  CHECK(propagate(in, ch).mean_photon_number() == doctest::Approx(0.003).epsilon(1e-14));
  ch.loss_db = 16.0;
  CHECK(propagate(in, ch).mean_photon_number() ==
        doctest::Approx(0.03 * std::pow(10.0, -1.6)).epsilon(1e-14));
}

TEST_CASE("propagate records delay, detuning and rotates polarization") {
  ChannelState ch;
  ch.delay_ps = 12.5;
  ch.detuning_hz = -3e6;
  ch.polarization_unitary = su2_rotation(0.0, std::numbers::pi, 0.0);
  const PulsePair out = propagate(propagate(pulse(1.0, 0.0), ch), ch);
  CHECK(out.arrival_offset_ps == 25.0);
  CHECK(out.frequency_offset_hz == -6e6);
  CHECK(std::abs(out.polarization(0)) == doctest::Approx(1.0));  // 2 pi rotation: -identity
  CHECK(out.polarization.norm() == doctest::Approx(1.0));
}

TEST_CASE("channel validation rejects non-unitary matrices") {
  ChannelState ch;
  CHECK_NOTHROW(ch.validate());
  ch.polarization_unitary(0, 0) = 1.0 + 1e-9;
  CHECK_THROWS_AS(ch.validate(), std::invalid_argument);
  ch = ChannelState{};
  ch.loss_db = -1.0;
  CHECK_THROWS_AS(ch.validate(), std::invalid_argument);
}

TEST_CASE("effective overlap examples") {
  InterferenceContext ctx;
  CHECK(effective_overlap(ctx) == 1.0);
  ctx.relative_delay_ps = 1e5;
  CHECK(effective_overlap(ctx) < 1e-300);
  for (double dt : {50.0, 200.0, 333.0}) {
    ctx.relative_delay_ps = dt;
    CHECK(effective_overlap(ctx) == doctest::Approx(oracle::gaussian_overlap_numeric(dt, 200.0)).epsilon(1e-8));
  }
}

TEST_CASE("effective overlap is even, decreasing and maximal only at the origin") {
  InterferenceContext ctx;
  double prev = 2.0;
  for (double dt = 0.0; dt <= 1000.0; dt += 10.0) {
    ctx.relative_delay_ps = dt;
    const double plus = effective_overlap(ctx);
    ctx.relative_delay_ps = -dt;
    CHECK(effective_overlap(ctx) == plus);
    CHECK(plus < prev);
    if (dt > 0.0) CHECK(plus < 1.0);
    prev = plus;
  }
  ctx.relative_delay_ps = 0.0;
  ctx.relative_detuning_hz = 1e8;
  CHECK(effective_overlap(ctx) < 1.0);
  ctx.relative_detuning_hz = 0.0;
  ctx.mode_overlap = 0.99;
  CHECK(effective_overlap(ctx) < 1.0);
}

TEST_CASE("vacuum inputs never click without dark counts") {
  const DetectorModel det;
  CounterRng rng(1, StreamId::kCharlie, 0);
  for (int i = 0; i < 10000; ++i) CHECK(interfere_and_click(PulsePair{}, PulsePair{}, {}, det, rng).count == 0);
}

TEST_CASE("single input, ln 2 photons: early clicks at 1 - exp(-ln2/2)") {
  const DetectorModel det = ideal_detector();
  const PulsePair a = pulse(std::sqrt(std::numbers::ln2), 0.0);
  CounterRng rng(2, StreamId::kCharlie, 0);
  const int n = 400'000;
  int d1 = 0, d2 = 0, late = 0;
  for (int i = 0; i < n; ++i) {
    const unsigned m = interfere_and_click(a, PulsePair{}, {}, det, rng).mask();
    d1 += (m & kMaskD1Early) != 0;
    d2 += (m & kMaskD2Early) != 0;
    late += (m & (kMaskD1Late | kMaskD2Late)) != 0;
  }
  const double p = 1.0 - std::exp(-std::numbers::ln2 / 2.0);
  const double sd = std::sqrt(n * p * (1 - p));
  CHECK(std::abs(d1 - n * p) < 5 * sd);
  CHECK(std::abs(d2 - n * p) < 5 * sd);
  CHECK(late == 0);
  const SlotIntensities s = output_intensities(a.early, a.late, 0.0, 0.0, interference_setup(a, PulsePair{}, {}));
  CHECK(click_probability(s[0], det) == doctest::Approx(p).epsilon(1e-15));
}

TEST_CASE("interfere_and_click rejects pulses from different slots") {
  PulsePair a, b;
  b.emission_slot = 1;
  CounterRng rng(1, StreamId::kCharlie, 0);
  CHECK_THROWS_AS(interfere_and_click(a, b, {}, DetectorModel{}, rng), std::invalid_argument);
}

TEST_CASE("identical X0 pulses: sampled patterns match the phase-averaged oracle") {
  const double mu = 0.5;
  const cplx h = std::sqrt(mu / 2.0);
  const DetectorModel det = ideal_detector();
  const auto expected = oracle::phase_averaged_masks(h, h, h, h, 1.0, 1.0, 0.0);
  const PatternProbabilities analytic = phase_averaged_patterns(pulse(h, h), pulse(h, h), {}, det);
  for (unsigned m = 0; m < 16; ++m) CHECK(analytic.by_mask[m] == doctest::Approx(expected[m]).epsilon(1e-9));

  const int n = 400'000;
  std::array<int, 16> counts{};
  for (int i = 0; i < n; ++i) {
    CounterRng rng(3, StreamId::kCharlie, static_cast<std::uint64_t>(i));
    const cplx ra = std::polar(1.0, 2.0 * std::numbers::pi * rng.uniform());
    const cplx rb = std::polar(1.0, 2.0 * std::numbers::pi * rng.uniform());
    ++counts[interfere_and_click(pulse(h * ra, h * ra), pulse(h * rb, h * rb), {}, det, rng).mask()];
  }
  for (unsigned m = 0; m < 16; ++m) {
    const double p = expected[m];
    CHECK(std::abs(counts[m] - n * p) <= 5.0 * std::sqrt(n * p * (1 - p)) + 1e-9);
  }
}

TEST_CASE("phase-averaged patterns match the oracle for partial overlap, loss and dark counts") {
  DetectorModel det = ideal_detector();
  det.efficiency = 0.6;
  det.dark_click_prob = 1e-3;
  InterferenceContext ctx;
  ctx.mode_overlap = 0.8;
  const cplx ae = 0.3, al = cplx(0.1, 0.2), be = cplx(0.0, 0.25), bl = -0.15;
  const auto expected = oracle::phase_averaged_masks(ae, al, be, bl, 0.8, 0.6, 1e-3);
  const PatternProbabilities got = phase_averaged_patterns(pulse(ae, al), pulse(be, bl), ctx, det);
  double total = 0.0;
  for (unsigned m = 0; m < 16; ++m) {
    CHECK(got.by_mask[m] == doctest::Approx(expected[m]).epsilon(1e-9));
    total += got.by_mask[m];
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("jitter gating scales the light click probability by the gate acceptance") {
  DetectorModel det;
  det.jitter_sigma_ps = 150.0;
  det.coincidence_window_ps = 300.0;
  const double g = det.gate_pass_probability();
  CHECK(g == doctest::Approx(std::erf(1.0 / std::sqrt(2.0))).epsilon(1e-15));
  CHECK(registered_click_probability(0.2, det) == doctest::Approx((1 - std::exp(-0.2)) * g).epsilon(1e-14));

  const PulsePair a = pulse(std::sqrt(0.4), 0.0);
  CounterRng rng(4, StreamId::kCharlie, 0);
  const int n = 300'000;
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    const ClickSet c = interfere_and_click(a, PulsePair{}, {}, det, rng);
    for (int k = 0; k < c.count; ++k) CHECK(std::abs(c.events[k].time_ps) <= 150.0);
    hits += (c.mask() & kMaskD1Early) != 0;
  }
  const double p = registered_click_probability(0.2, det);
  CHECK(std::abs(hits - n * p) < 5.0 * std::sqrt(n * p * (1 - p)));
}

TEST_CASE("energy conservation at the beamsplitter") {
  CounterRng rng(5, StreamId::kCalibration, 0);
  for (int i = 0; i < 10000; ++i) {
    const auto c = [&] { return cplx(rng.normal(), rng.normal()); };
    PulsePair a = pulse(c(), c()), b = pulse(c(), c());
    InterferenceContext ctx;
    ctx.mode_overlap = rng.uniform();
    ctx.input_polarizers = false;
    const SlotIntensities n = output_intensities(a.early, a.late, b.early, b.late, interference_setup(a, b, ctx));
    const double in = a.mean_photon_number() + b.mean_photon_number();
    CHECK(std::abs(n[0] + n[1] + n[2] + n[3] - in) <= 1e-10 * in);
  }
}

TEST_CASE("click probability is monotone in photons, efficiency and dark counts") {
  DetectorModel det;
  det.efficiency = 0.5;
  det.dark_click_prob = 1e-4;
  double prev = -1.0;
  for (double n = 0.0; n < 5.0; n += 0.01) {
    const double p = registered_click_probability(n, det);
    CHECK(p >= prev);
    prev = p;
  }
  prev = -1.0;
  for (double eta = 0.0; eta <= 1.0; eta += 0.01) {
    det.efficiency = eta;
    const double p = click_probability(0.3, det);
    CHECK(p >= prev);
    prev = p;
  }
  prev = -1.0;
  for (double pd = 0.0; pd <= 1.0; pd += 0.01) {
    det.dark_click_prob = pd;
    const double p = click_probability(0.3, det);
    CHECK(p >= prev);
    prev = p;
  }
}

TEST_CASE("polarizers turn polarization mismatch into loss") {
  PulsePair a = pulse(1.0, 0.0), b = pulse(1.0, 0.0);
  b.polarization = Jones(std::cos(0.3), std::sin(0.3));
  InterferenceContext ctx;
  const InterferenceSetup s = interference_setup(a, b, ctx);
  CHECK(std::abs(s.factor_b) == doctest::Approx(std::cos(0.3)));
  CHECK(std::abs(s.overlap) == doctest::Approx(1.0));
  ctx.input_polarizers = false;
  const InterferenceSetup t = interference_setup(a, b, ctx);
  CHECK(std::abs(t.overlap) == doctest::Approx(std::cos(0.3)));
}

TEST_CASE("HOM visibility tends to one half for weak pulses") {
  const DetectorModel det = ideal_detector();
  const HomVisibility v = hom_visibility(1e-4, {}, det, 200'000, 1);
  CHECK(v.visibility == doctest::Approx(0.5).epsilon(2e-3));
  CHECK(v.visibility <= 0.5 + 3.0 * v.std_error);
}

TEST_CASE("HOM visibility never exceeds one half") {
  DetectorModel det;
  for (double mu : {0.001, 0.03, 0.3, 2.0}) {
    for (double xi : {0.2, 0.9, 1.0}) {
      InterferenceContext ctx;
      ctx.mode_overlap = xi;
      const HomVisibility v = hom_visibility(mu, ctx, det, 100'000, 3);
      CHECK(v.visibility <= 0.5 + 3.0 * v.std_error);
      CHECK(v.visibility >= 0.0);
    }
  }
}

TEST_CASE("HOM coincidence: estimator agrees with the phase average and sampling") {
  DetectorModel det;
  det.efficiency = 0.8;
  InterferenceContext ctx;
  ctx.mode_overlap = 0.95;
  const PulsePair p = hom_probe_pulse(0.3);
  const double exact = phase_averaged_patterns(p, p, ctx, det, 4096).same_bin_coincidence;
  const HomEstimate rb = hom_coincidence_prob(p, p, ctx, det, 300'000, 4);
  CHECK(std::abs(rb.probability - exact) < 5.0 * rb.std_error);
  const HomEstimate sampled = hom_coincidence_sampled(p, p, ctx, det, 300'000, 4);
  CHECK(std::abs(sampled.probability - exact) < 5.0 * sampled.std_error);
  const HomEstimate serial = hom_coincidence_prob_serial(p, p, ctx, det, 300'000, 4);
  CHECK(serial.probability == doctest::Approx(rb.probability).epsilon(1e-12));
  CHECK(hom_same_bin_probability(0.3, 0.0, ctx, det, 4096) == doctest::Approx(exact).epsilon(1e-9));
}

TEST_CASE("HOM dip is even in delay and deepest at zero") {
  const DetectorModel det;
  InterferenceContext ctx;
  double prev = -1.0;
  for (double dt = 0.0; dt <= 600.0; dt += 50.0) {
    ctx.relative_delay_ps = dt;
    const double c = hom_coincidence_prob(0.03, ctx, det, 65536, 9).probability;
    ctx.relative_delay_ps = -dt;
    CHECK(hom_coincidence_prob(0.03, ctx, det, 65536, 9).probability == doctest::Approx(c).epsilon(1e-12));
    CHECK(c > prev);
    prev = c;
  }
}

TEST_CASE("weak coherent two-click statistics approach the photon-pair expansion") {
  // At order mu^2 two clicks come from one photon per input plus two photons
  // from the same input: p(m) / mu^2 -> f11(m) + f20(m) / 2 + f02(m) / 2.
  const DetectorModel det = ideal_detector();
  const double mu = 1e-3;
  SourceParams s;
  s.extinction_ratio_db = std::numeric_limits<double>::infinity();
  s.mu_signal = mu;
  s.mu_decoy = mu / 2;
  for (int ba = 0; ba < 2; ++ba)
    for (int bb = 0; bb < 2; ++bb)
      for (int xa = 0; xa < 2; ++xa)
        for (int xb = 0; xb < 2; ++xb) {
          QubitSpec sa, sb;
          sa.basis = static_cast<Basis>(ba);
          sb.basis = static_cast<Basis>(bb);
          sa.bit = static_cast<std::uint8_t>(xa);
          sb.bit = static_cast<std::uint8_t>(xb);
          const PatternProbabilities p = phase_averaged_patterns(encode(sa, s), encode(sb, s), {}, det);
          const TimeBinState ta = bb84_state(sa.basis, sa.bit), tb = bb84_state(sb.basis, sb.bit);
          const BsmOracleResult f = fock_bsm_oracle(ta, tb);
          const auto ua = oracle::port_a({ta.early, ta.late});
          const auto ub = oracle::port_b({tb.early, tb.late});
          const auto f20 = oracle::pair_masks(ua, ua);
          const auto f02 = oracle::pair_masks(ub, ub);
          for (unsigned m : {3u, 5u, 6u, 9u, 10u, 12u}) {
            const double expected = f.pattern(m) + f20[m] / 4.0 + f02[m] / 4.0;
            CHECK(p.by_mask[m] / (mu * mu) == doctest::Approx(expected).epsilon(5e-3));
          }
        }
}
