#include "mdiqkd/decoy_lp.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mdiqkd {
namespace {

using Real = long double;

constexpr Real kPivotEps = 1e-16L;
constexpr Real kFeasibilityEps = 1e-14L;

class Tableau {
 public:
  Tableau(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), t_((rows + 1) * (cols + 1)) {}

  Real& at(std::size_t r, std::size_t c) { return t_[r * (cols_ + 1) + c]; }
  Real& rhs(std::size_t r) { return at(r, cols_); }

  void pivot(std::size_t pr, std::size_t pc) {
    const Real p = at(pr, pc);
    for (std::size_t c = 0; c <= cols_; ++c) at(pr, c) /= p;
    for (std::size_t r = 0; r <= rows_; ++r) {
      if (r == pr) continue;
      const Real f = at(r, pc);
      if (f == 0.0L) continue;
      for (std::size_t c = 0; c <= cols_; ++c) at(r, c) -= f * at(pr, c);
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<Real> t_;
};

// Runs the simplex on the objective stored in row `rows` (reduced costs,
// rhs = -objective). Returns false if unbounded.
bool iterate(Tableau& t, std::vector<std::size_t>& basis, const std::vector<bool>& allowed) {
  const std::size_t m = t.rows();
  while (true) {
    std::size_t enter = t.cols();
    for (std::size_t j = 0; j < t.cols(); ++j) {
      if (allowed[j] && t.at(m, j) < -kPivotEps) {
        enter = j;
        break;
      }
    }
    if (enter == t.cols()) return true;
    std::size_t leave = m;
    Real best = std::numeric_limits<Real>::infinity();
    for (std::size_t i = 0; i < m; ++i) {
      const Real a = t.at(i, enter);
      if (a <= kPivotEps) continue;
      const Real ratio = t.rhs(i) / a;
      if (ratio < best || (ratio == best && basis[i] < basis[leave])) {
        best = ratio;
        leave = i;
      }
    }
    if (leave == m) return false;
    t.pivot(leave, enter);
    basis[leave] = enter;
  }
}

Real poisson(int n, double mean) {
  if (mean == 0.0) return n == 0 ? 1.0L : 0.0L;
  return std::exp(static_cast<Real>(n) * std::log(static_cast<Real>(mean)) - static_cast<Real>(mean) -
                  std::lgamma(static_cast<Real>(n) + 1.0L));
}

struct Pair {
  Intensity a;
  Intensity b;
};

constexpr Pair kDecoyPairs[] = {{Intensity::kDecoy, Intensity::kDecoy},
                                {Intensity::kDecoy, Intensity::kVacuum},
                                {Intensity::kVacuum, Intensity::kDecoy},
                                {Intensity::kVacuum, Intensity::kVacuum}};
constexpr Pair kSignalPairs[] = {{Intensity::kSignal, Intensity::kSignal},
                                 {Intensity::kSignal, Intensity::kVacuum},
                                 {Intensity::kVacuum, Intensity::kSignal}};

struct PairTerms {
  std::vector<double> coeff;  // over (n, m) flattened
  double tail = 0.0;          // probability mass beyond the cutoff
};

PairTerms pair_terms(double xa, double yb, int cutoff) {
  PairTerms p;
  const int k = cutoff + 1;
  p.coeff.resize(static_cast<std::size_t>(k * k));
  Real ca = 0.0L, cb = 0.0L;
  for (int n = 0; n < k; ++n) {
    ca += poisson(n, xa);
    cb += poisson(n, yb);
    for (int m = 0; m < k; ++m) {
      p.coeff[static_cast<std::size_t>(n * k + m)] = static_cast<double>(poisson(n, xa) * poisson(m, yb));
    }
  }
  p.tail = static_cast<double>(std::max(0.0L, 1.0L - std::min(ca, 1.0L) * std::min(cb, 1.0L)));
  return p;
}

// Optimizes the (1,1) variable subject to the interval constraints of the
// given pairs. `use_error_gain` selects QE intervals instead of Q.
LpSolution optimize_11(const DecoyInputs& in, Basis basis, bool use_error_gain, bool maximize,
                       std::vector<Pair> pairs, int cutoff) {
  const int k = cutoff + 1;
  const std::size_t nv = static_cast<std::size_t>(k * k);
  std::vector<std::vector<double>> a;
  std::vector<double> b;
  const auto& ia = in.intensities_a[static_cast<int>(basis)];
  const auto& ib = in.intensities_b[static_cast<int>(basis)];
  for (const Pair& p : pairs) {
    const PairTerms terms = pair_terms(ia[static_cast<int>(p.a)], ib[static_cast<int>(p.b)], cutoff);
    const CellMeasurement& cell = in.at(basis, p.a, p.b);
    const Interval& iv = use_error_gain ? cell.error_gain_interval : cell.gain_interval;
    double scale = 0.0;
    for (double c : terms.coeff) scale = std::max(scale, c);
    std::vector<double> row(nv);
    for (std::size_t j = 0; j < nv; ++j) row[j] = terms.coeff[j] / scale;
    a.push_back(row);
    b.push_back(iv.upper / scale);
    for (double& x : row) x = -x;
    a.push_back(row);
    b.push_back(-(iv.lower - terms.tail) / scale);
  }
  for (std::size_t j = 0; j < nv; ++j) {
    std::vector<double> row(nv, 0.0);
    row[j] = 1.0;
    a.push_back(std::move(row));
    b.push_back(1.0);
  }
  std::vector<double> c(nv, 0.0);
  c[static_cast<std::size_t>(k + 1)] = maximize ? -1.0 : 1.0;
  LpSolution s = simplex_minimize(c, a, b);
  if (maximize) s.objective = -s.objective;
  return s;
}

// Shift of an inclusion-exclusion combination when each pair's gain may
// move by its tail mass: sum |weight| * tail.
double tail_shift(const DecoyInputs& in, Basis basis, const std::vector<Pair>& pairs,
                  const std::vector<double>& weights, int cutoff) {
  const auto& ia = in.intensities_a[static_cast<int>(basis)];
  const auto& ib = in.intensities_b[static_cast<int>(basis)];
  double s = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const PairTerms t = pair_terms(ia[static_cast<int>(pairs[i].a)], ib[static_cast<int>(pairs[i].b)], cutoff);
    s += std::abs(weights[i]) * t.tail;
  }
  return s;
}

}  // namespace

LpSolution simplex_minimize(const std::vector<double>& c, const std::vector<std::vector<double>>& a,
                            const std::vector<double>& b) {
  const std::size_t m = a.size();
  const std::size_t n = c.size();
  if (b.size() != m) throw std::invalid_argument("simplex_minimize: row count mismatch");
  std::size_t n_art = 0;
  for (double bi : b) n_art += bi < 0.0 ? 1 : 0;
  const std::size_t slack0 = n;
  const std::size_t art0 = n + m;
  Tableau t(m, n + m + n_art);
  std::vector<std::size_t> basis(m);
  std::size_t next_art = art0;
  for (std::size_t i = 0; i < m; ++i) {
    if (a[i].size() != n) throw std::invalid_argument("simplex_minimize: column count mismatch");
    const Real sign = b[i] < 0.0 ? -1.0L : 1.0L;
    for (std::size_t j = 0; j < n; ++j) t.at(i, j) = sign * a[i][j];
    t.at(i, slack0 + i) = sign;
    t.rhs(i) = sign * b[i];
    if (sign > 0) {
      basis[i] = slack0 + i;
    } else {
      t.at(i, next_art) = 1.0L;
      basis[i] = next_art++;
    }
  }

  std::vector<bool> allowed(t.cols(), true);
  if (n_art > 0) {
    for (std::size_t i = 0; i < m; ++i) {
      if (basis[i] < art0) continue;
      for (std::size_t j = 0; j <= t.cols(); ++j) {
        if (j >= art0 && j < t.cols()) continue;
        t.at(m, j) -= t.at(i, j);
      }
    }
    if (!iterate(t, basis, allowed)) throw std::runtime_error("simplex_minimize: phase 1 unbounded");
    if (-t.rhs(m) > kFeasibilityEps) return {};
    for (std::size_t j = art0; j < t.cols(); ++j) allowed[j] = false;
    for (std::size_t i = 0; i < m; ++i) {
      if (basis[i] < art0) continue;
      for (std::size_t j = 0; j < art0; ++j) {
        if (std::abs(t.at(i, j)) > kPivotEps) {
          t.pivot(i, j);
          basis[i] = j;
          break;
        }
      }
    }
  }

  for (std::size_t j = 0; j <= t.cols(); ++j) t.at(m, j) = 0.0L;
  for (std::size_t j = 0; j < n; ++j) t.at(m, j) = c[j];
  for (std::size_t i = 0; i < m; ++i) {
    const Real cb = basis[i] < n ? static_cast<Real>(c[basis[i]]) : 0.0L;
    if (cb == 0.0L) continue;
    for (std::size_t j = 0; j <= t.cols(); ++j) t.at(m, j) -= cb * t.at(i, j);
  }
  if (!iterate(t, basis, allowed)) throw std::runtime_error("simplex_minimize: unbounded");

  LpSolution s;
  s.feasible = true;
  s.x.assign(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (basis[i] < n) s.x[basis[i]] = static_cast<double>(t.rhs(i));
  }
  Real obj = 0.0L;
  for (std::size_t j = 0; j < n; ++j) obj += static_cast<Real>(c[j]) * s.x[j];
  s.objective = static_cast<double>(obj);
  return s;
}

LpDecoyBounds decoy_lp_bounds(const DecoyInputs& inputs, int cutoff) {
  if (cutoff < 2 || cutoff > 30) throw std::invalid_argument("decoy_lp_bounds: cutoff out of range");
  inputs.validate();
  std::vector<Pair> yield_pairs(std::begin(kDecoyPairs), std::end(kDecoyPairs));
  yield_pairs.insert(yield_pairs.end(), std::begin(kSignalPairs), std::end(kSignalPairs));
  const std::vector<Pair> error_pairs(std::begin(kDecoyPairs), std::end(kDecoyPairs));

  LpDecoyBounds out;
  const LpSolution yz = optimize_11(inputs, Basis::kZ, false, false, yield_pairs, cutoff);
  const LpSolution yx = optimize_11(inputs, Basis::kX, false, false, yield_pairs, cutoff);
  const LpSolution zx = optimize_11(inputs, Basis::kX, true, true, error_pairs, cutoff);
  if (!yz.feasible || !yx.feasible || !zx.feasible) return out;
  out.feasible = true;
  out.y11_z_lower = std::max(0.0, yz.objective);
  out.y11_x_lower = std::max(0.0, yx.objective);
  out.z11_x_upper = std::max(0.0, zx.objective);
  out.e11_x_upper = out.y11_x_lower > 0.0 ? std::min(0.5, out.z11_x_upper / out.y11_x_lower) : 0.5;

  for (Basis basis : {Basis::kZ, Basis::kX}) {
    const auto& ia = inputs.intensities_a[static_cast<int>(basis)];
    const auto& ib = inputs.intensities_b[static_cast<int>(basis)];
    const double x = ia[1], y = ib[1], X = ia[2], Y = ib[2];
    const double ra = x / X, rb = y / Y;
    const double c = ra * rb * std::max(ra, rb);
    const std::vector<double> w = {std::exp(x + y), std::exp(x), std::exp(y), 1.0 + c,
                                   c * std::exp(X + Y), c * std::exp(X), c * std::exp(Y)};
    const double shift = tail_shift(inputs, basis, yield_pairs, w, cutoff) / (x * y - c * X * Y);
    (basis == Basis::kZ ? out.tolerance_y11_z : out.tolerance_y11_x) = shift;
  }
  const auto& ia = inputs.intensities_a[1];
  const auto& ib = inputs.intensities_b[1];
  const double x = ia[1], y = ib[1];
  const double z_shift =
      tail_shift(inputs, Basis::kX, error_pairs, {std::exp(x + y), std::exp(x), std::exp(y), 1.0}, cutoff) /
      (x * y);
  out.tolerance_e11_x = out.y11_x_lower > 0.0
                            ? (z_shift + out.e11_x_upper * out.tolerance_y11_x) / out.y11_x_lower
                            : 0.0;
  return out;
}

}  // namespace mdiqkd
