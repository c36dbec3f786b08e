#include <cmath>
#include <limits>
#include <numbers>

#include "doctest.h"
#include "mdiqkd/encoding.h"

using namespace mdiqkd;

namespace {

SourceParams ideal_source() {
  SourceParams p;
  p.extinction_ratio_db = std::numeric_limits<double>::infinity();
  return p;
}

QubitSpec spec(Basis b, int bit, Intensity i, double phase = 0.0) {
  QubitSpec s;
  s.basis = b;
  s.bit = static_cast<std::uint8_t>(bit);
  s.intensity = i;
  s.global_phase = phase;
  return s;
}

}  // namespace

TEST_CASE("degenerate probabilities give a fixed spec") {
  SourceParams p;
  p.p_z = 1.0;
  p.p_intensity = {0.0, 0.0, 1.0};
  CounterRng rng(5, StreamId::kAlice, 0);
  for (int i = 0; i < 10000; ++i) {
    const QubitSpec s = sample_spec(rng, p);
    CHECK(s.basis == Basis::kZ);
    CHECK(s.intensity == Intensity::kSignal);
  }
  p.p_intensity = {1.0, 0.0, 0.0};
  for (int i = 0; i < 10000; ++i) CHECK(sample_spec(rng, p).intensity == Intensity::kVacuum);
}

TEST_CASE("basis frequency within 5 sigma of p_z") {
  SourceParams p;
  p.p_z = 0.3;
  CounterRng rng(9, StreamId::kAlice, 0);
  const int n = 1'000'000;
  int z = 0;
  for (int i = 0; i < n; ++i) z += sample_spec(rng, p).basis == Basis::kZ;
  CHECK(std::abs(z - n * p.p_z) < 5.0 * std::sqrt(n * p.p_z * (1.0 - p.p_z)));
}

TEST_CASE("intensity class and phase statistics") {
  SourceParams p;
  p.p_intensity = {0.2, 0.3, 0.5};
  CounterRng rng(9, StreamId::kBob, 3);
  const int n = 500'000;
  std::array<int, 3> counts{};
  double phase_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const QubitSpec s = sample_spec(rng, p);
    ++counts[static_cast<int>(s.intensity)];
    CHECK(s.global_phase >= 0.0);
    CHECK(s.global_phase < 2.0 * std::numbers::pi);
    phase_sum += s.global_phase;
  }
  for (int k = 0; k < 3; ++k) {
    const double q = p.p_intensity[k];
    CHECK(std::abs(counts[k] - n * q) < 5.0 * std::sqrt(n * q * (1.0 - q)));
  }
  const double sd = 2.0 * std::numbers::pi / std::sqrt(12.0 * n);
  CHECK(std::abs(phase_sum / n - std::numbers::pi) < 5.0 * sd);
}

TEST_CASE("identical streams give identical specs") {
  SourceParams p;
  CounterRng a(77, StreamId::kAlice, 123), b(77, StreamId::kAlice, 123);
  for (int i = 0; i < 1000; ++i) {
    const QubitSpec x = sample_spec(a, p), y = sample_spec(b, p);
    CHECK(x.tag_bits() == y.tag_bits());
    CHECK(x.global_phase == y.global_phase);
  }
}

TEST_CASE("tag bits round trip") {
  for (int b = 0; b < 2; ++b)
    for (int bit = 0; bit < 2; ++bit)
      for (Intensity i : kIntensities) {
        const QubitSpec s = spec(static_cast<Basis>(b), bit, i);
        const QubitSpec t = QubitSpec::from_tag_bits(s.tag_bits());
        CHECK(t.basis == s.basis);
        CHECK(t.bit == s.bit);
        CHECK(t.intensity == s.intensity);
        CHECK(s.tag_bits() < 16);
      }
  CHECK(QubitSpec::from_tag_bits(0b0101).intensity == Intensity::kDecoy);
  CHECK_THROWS_AS(QubitSpec::from_tag_bits(0b1100), std::invalid_argument);
}

TEST_CASE("encode examples") {
  const SourceParams p = ideal_source();
  const PulsePair z0 = encode(spec(Basis::kZ, 0, Intensity::kSignal), p);
  CHECK(z0.early.real() == doctest::Approx(std::sqrt(0.03)).epsilon(1e-15));
  CHECK(std::abs(z0.late) == 0.0);

  const PulsePair x1 = encode(spec(Basis::kX, 1, Intensity::kSignal), p);
  CHECK(x1.early.real() == doctest::Approx(std::sqrt(0.015)).epsilon(1e-15));
  CHECK(x1.late.real() == doctest::Approx(-std::sqrt(0.015)).epsilon(1e-15));
  CHECK(x1.mean_photon_number() == doctest::Approx(0.03).epsilon(1e-14));

  for (int b = 0; b < 2; ++b)
    for (int bit = 0; bit < 2; ++bit) {
      const PulsePair v = encode(spec(static_cast<Basis>(b), bit, Intensity::kVacuum, 1.3), SourceParams{});
      CHECK(v.early == cplx(0.0, 0.0));
      CHECK(v.late == cplx(0.0, 0.0));
    }
  CHECK(encode(spec(Basis::kZ, 0, Intensity::kSignal), p, 99).emission_slot == 99);
}

TEST_CASE("mean photon number equals class intensity up to leakage") {
  SourceParams p;
  p.mu_signal = 0.4;
  p.mu_decoy = 0.05;
  p.extinction_ratio_db = 30.0;
  CounterRng rng(1, StreamId::kAlice, 0);
  for (int i = 0; i < 2000; ++i) {
    const QubitSpec s = sample_spec(rng, p);
    const PulsePair pp = encode(s, p);
    const double mu = p.mean_photon_number(s.intensity);
    CHECK(std::abs(pp.mean_photon_number() - mu) <= 2.0 * mu * p.leakage() + 1e-15);
    CHECK(pp.mean_photon_number() >= mu * (1.0 - 1e-14));
    CHECK(pp.polarization.norm() == doctest::Approx(1.0));
  }
}

TEST_CASE("pi phase on the late bin maps X0 to X1") {
  const SourceParams p = ideal_source();
  for (double phi : {0.0, 0.7, 3.0, 5.9}) {
    PulsePair x0 = encode(spec(Basis::kX, 0, Intensity::kSignal, phi), p);
    const PulsePair x1 = encode(spec(Basis::kX, 1, Intensity::kSignal, phi), p);
    x0.late *= std::polar(1.0, std::numbers::pi);
    CHECK(std::abs(x0.early - x1.early) < 1e-15);
    CHECK(std::abs(x0.late - x1.late) < 1e-15);
  }
}

TEST_CASE("leakage inherits the global phase") {
  SourceParams p;
  p.extinction_ratio_db = 20.0;
  const PulsePair z1 = encode(spec(Basis::kZ, 1, Intensity::kSignal, 1.1), p);
  CHECK(std::abs(z1.early) == doctest::Approx(std::sqrt(0.03 * 0.01)));
  CHECK(std::arg(z1.early) == doctest::Approx(1.1));
  CHECK(std::arg(z1.late) == doctest::Approx(1.1));
}

TEST_CASE("source parameter validation") {
  SourceParams p;
  CHECK_NOTHROW(p.validate());
  p.mu_decoy = 0.05;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = SourceParams{};
  p.p_intensity = {0.3, 0.3, 0.3};
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = SourceParams{};
  p.extinction_ratio_db = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = SourceParams{};
  p.p_z = 1.5;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("single-photon modes are normalized") {
  for (int b = 0; b < 2; ++b)
    for (int bit = 0; bit < 2; ++bit) {
      const auto m = qubit_mode(static_cast<Basis>(b), static_cast<std::uint8_t>(bit), 1e-3);
      CHECK(std::norm(m[0]) + std::norm(m[1]) == doctest::Approx(1.0).epsilon(1e-15));
    }
}
