#include <cmath>
#include <numbers>

#include "doctest.h"
#include "mdiqkd/fock.h"
#include "mdiqkd/optics.h"
#include "mdiqkd/random.h"
#include "oracles.h"

using namespace mdiqkd;

namespace {

TimeBinState random_state(CounterRng& rng) {
  cplx e(rng.normal(), rng.normal()), l(rng.normal(), rng.normal());
  const double n = std::sqrt(std::norm(e) + std::norm(l));
  return {e / n, l / n};
}

}  // namespace

TEST_CASE("early and late photons: half psi-, half psi+") {
  const BsmOracleResult r = fock_bsm_oracle({1.0, 0.0}, {0.0, 1.0});
  CHECK(r.psi_minus() == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(r.psi_plus() == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(r.bunched == doctest::Approx(0.0));
}

TEST_CASE("identical |+> photons never give psi-") {
  const TimeBinState plus = bb84_state(Basis::kX, 0);
  const BsmOracleResult r = fock_bsm_oracle(plus, plus);
  CHECK(std::abs(r.psi_minus()) < 1e-15);
}

TEST_CASE("same-basis BB84 pairs average a quarter psi-") {
  double sum = 0.0;
  int n = 0;
  for (int b = 0; b < 2; ++b)
    for (int x = 0; x < 2; ++x)
      for (int y = 0; y < 2; ++y) {
        sum += fock_bsm_oracle(bb84_state(static_cast<Basis>(b), x), bb84_state(static_cast<Basis>(b), y)).psi_minus();
        ++n;
      }
  CHECK(std::abs(sum / n - 0.25) < 1e-15);
}

TEST_CASE("per-pair agreement with the 4-mode permanent expansion") {
  CounterRng rng(12, StreamId::kCalibration, 0);
  for (int i = 0; i < 200; ++i) {
    const TimeBinState a = random_state(rng), b = random_state(rng);
    const BsmOracleResult r = fock_bsm_oracle(a, b);
    const auto ref = oracle::two_photon_masks({a.early, a.late}, {b.early, b.late});
    for (unsigned m = 0; m < 16; ++m) CHECK(std::abs(r.by_click_mask[m] - ref[m]) < 1e-12);
  }
}

TEST_CASE("output distributions are normalized") {
  CounterRng rng(13, StreamId::kCalibration, 0);
  for (int ka = 0; ka <= 4; ++ka)
    for (int kb = 0; kb <= 4; ++kb) {
      const double overlap = rng.uniform();
      const FockDistribution d = fock_output_distribution(ka, kb, random_state(rng), random_state(rng), overlap);
      CHECK(d.total() == doctest::Approx(1.0).epsilon(1e-12));
      double masks = 0.0;
      for (double p : d.by_click_mask) masks += p;
      CHECK(masks == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("k photons on one input split binomially") {
  for (int k = 1; k <= 6; ++k) {
    const FockDistribution d = fock_output_distribution(k, 0, {1.0, 0.0}, {1.0, 0.0});
    for (int j = 0; j <= k; ++j) {
      Occupation occ{};
      occ[2 * slot_index(Detector::kD1, TimeBin::kEarly)] = static_cast<std::uint8_t>(j);
      occ[2 * slot_index(Detector::kD2, TimeBin::kEarly)] = static_cast<std::uint8_t>(k - j);
      const double binom = std::tgamma(k + 1.0) / (std::tgamma(j + 1.0) * std::tgamma(k - j + 1.0));
      CHECK(d.by_occupation.at(occ) == doctest::Approx(binom / std::pow(2.0, k)).epsilon(1e-13));
    }
  }
}

TEST_CASE("Hong-Ou-Mandel bunching depends on the overlap") {
  // Same-bin coincidence of one photon per input: (1 - overlap^2) / 2.
  for (double xi : {0.0, 0.3, 0.9, 1.0}) {
    const FockDistribution d = fock_output_distribution(1, 1, {1.0, 0.0}, {1.0, 0.0}, xi);
    CHECK(d.by_click_mask[kMaskD1Early | kMaskD2Early] == doctest::Approx((1 - xi * xi) / 2).epsilon(1e-13));
  }
}

TEST_CASE("rejects non-normalized states and invalid photon numbers") {
  CHECK_THROWS_AS(fock_bsm_oracle({1.0, 0.1}, {1.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(fock_output_distribution(-1, 0, {}, {}), std::invalid_argument);
  CHECK_THROWS_AS(fock_output_distribution(13, 12, {}, {}), std::invalid_argument);
  CHECK_THROWS_AS(fock_output_distribution(1, 1, {}, {}, 1.5), std::invalid_argument);
}
