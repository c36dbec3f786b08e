#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "decoy_synth.h"
#include "doctest.h"
#include "mdiqkd/decoy_lp.h"
#include "mdiqkd/random.h"

using namespace mdiqkd;

namespace {

// Minimum over all vertices of {A x <= b, x >= 0} by enumerating every
// choice of n active constraints.
double vertex_enumeration(const std::vector<double>& c, const std::vector<std::vector<double>>& a,
                          const std::vector<double>& b) {
  const int n = static_cast<int>(c.size());
  std::vector<std::vector<double>> rows = a;
  std::vector<double> rhs = b;
  for (int j = 0; j < n; ++j) {
    std::vector<double> r(n, 0.0);
    r[j] = -1.0;
    rows.push_back(r);
    rhs.push_back(0.0);
  }
  const int m = static_cast<int>(rows.size());
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> pick(n);
  const std::function<void(int, int)> rec = [&](int k, int start) {
    if (k == n) {
      Eigen::MatrixXd M(n, n);
      Eigen::VectorXd v(n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) M(i, j) = rows[pick[i]][j];
        v(i) = rhs[pick[i]];
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
      if (!lu.isInvertible()) return;
      const Eigen::VectorXd x = lu.solve(v);
      for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += rows[i][j] * x(j);
        if (s > rhs[i] + 1e-9) return;
      }
      double obj = 0.0;
      for (int j = 0; j < n; ++j) obj += c[j] * x(j);
      best = std::min(best, obj);
      return;
    }
    for (int i = start; i < m; ++i) {
      pick[k] = i;
      rec(k + 1, i + 1);
    }
  };
  rec(0, 0);
  return best;
}

DecoyInputs physical_inputs(double eta, double dark, double nu, double mu, double e_mis) {
  // Threshold-detector style yields: each photon independently detected.
  const auto yield = [=](int n, int m) {
    const double a = 1.0 - std::pow(1.0 - eta, n), b = 1.0 - std::pow(1.0 - eta, m);
    return std::min(1.0, 0.5 * a * b + 2.0 * dark * (1.0 - 0.5 * a * b));
  };
  const auto error = [=](int n, int m) { return n == 0 || m == 0 ? 0.5 : e_mis + 0.1 * (n + m - 2) / (n + m); };
  return synth::inputs({0.0, nu, mu}, {0.0, nu, mu}, yield, error);
}

}  // namespace

TEST_CASE("simplex: textbook problem") {
  const LpSolution s = simplex_minimize({-1, -1}, {{1, 2}, {3, 1}}, {4, 6});
  REQUIRE(s.feasible);
  CHECK(s.objective == doctest::Approx(-2.8).epsilon(1e-12));
  CHECK(s.x[0] == doctest::Approx(1.6).epsilon(1e-12));
  CHECK(s.x[1] == doctest::Approx(1.2).epsilon(1e-12));
}

TEST_CASE("simplex: lower bounds through negative right-hand sides") {
  const LpSolution s = simplex_minimize({1, 1}, {{-1, 0}, {0, -1}, {-1, -1}}, {-2, -1, -5});
  REQUIRE(s.feasible);
  CHECK(s.objective == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("simplex: infeasible and unbounded problems") {
  CHECK_FALSE(simplex_minimize({1}, {{1}, {-1}}, {1, -2}).feasible);
  CHECK_THROWS_AS(simplex_minimize({-1, 0}, {{1, -1}}, {1}), std::runtime_error);
  CHECK_THROWS_AS(simplex_minimize({1, 1}, {{1}}, {1}), std::invalid_argument);
}

TEST_CASE("simplex agrees with vertex enumeration on random problems") {
  CounterRng rng(55, StreamId::kCalibration, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 3, m = 5;
    std::vector<double> c(n), b(m);
    std::vector<std::vector<double>> a(m, std::vector<double>(n));
    for (double& v : c) v = rng.normal();
    for (int i = 0; i < m; ++i) {
      for (double& v : a[i]) v = rng.normal();
      b[i] = rng.normal() + 0.5;
    }
    // Box keeps every problem bounded.
    for (int j = 0; j < n; ++j) {
      std::vector<double> row(n, 0.0);
      row[j] = 1.0;
      a.push_back(row);
      b.push_back(3.0);
    }
    const double ref = vertex_enumeration(c, a, b);
    const LpSolution s = simplex_minimize(c, a, b);
    CHECK(s.feasible == std::isfinite(ref));
    if (s.feasible && std::isfinite(ref)) CHECK(s.objective == doctest::Approx(ref).epsilon(1e-9));
  }
}

TEST_CASE("LP bounds contain the truth and dominate the analytic bounds") {
  for (double eta : {0.05, 0.3, 0.9}) {
    for (double nu : {0.01, 0.05, 0.1}) {
      const double mu = 0.4;
      const DecoyInputs in = physical_inputs(eta, 1e-6, nu, mu, 0.02);
      const double y11 = 0.5 * eta * eta + 2e-6 * (1 - 0.5 * eta * eta);
      const LpDecoyBounds lp = decoy_lp_bounds(in);
      const DecoyBounds an = decoy_bounds(in);
      REQUIRE(lp.feasible);
      CHECK(lp.y11_z_lower <= y11 + lp.tolerance_y11_z + 1e-12);
      CHECK(lp.y11_x_lower <= y11 + lp.tolerance_y11_x + 1e-12);
      CHECK(lp.e11_x_upper >= 0.02 - lp.tolerance_e11_x - 1e-12);
      CHECK(lp.y11_z_lower >= an.y11_z_lower - lp.tolerance_y11_z - 1e-12);
      CHECK(lp.e11_x_upper <= an.e11_x_upper + lp.tolerance_e11_x + 1e-12);
    }
  }
}

TEST_CASE("LP oracle rejects a bad cutoff") {
  CHECK_THROWS_AS(decoy_lp_bounds(DecoyInputs{}, 1), std::invalid_argument);
}
