#include "mdiqkd/keyrate.h"

#include <charconv>
#include <cmath>
#include <stdexcept>

#include "mdiqkd/csv.h"

namespace mdiqkd {
namespace {

constexpr std::array<Basis, 2> kBases = {Basis::kZ, Basis::kX};

bool in_unit(double x) { return x >= 0.0 && x <= 1.0; }

struct Quad {
  double x, y, X, Y;  // decoy and signal intensities of A and B
};

Quad intensities(const DecoyInputs& in, Basis b) {
  const auto& a = in.intensities_a[static_cast<int>(b)];
  const auto& c = in.intensities_b[static_cast<int>(b)];
  return {a[1], c[1], a[2], c[2]};
}

// Checks that no cell with componentwise smaller intensities shows a gain
// above a larger cell's beyond the interval ends.
std::string ordering_violation(const DecoyInputs& in) {
  for (Basis b : kBases) {
    for (int ia = 0; ia < 3; ++ia) {
      for (int ib = 0; ib < 3; ++ib) {
        for (int ja = ia; ja < 3; ++ja) {
          for (int jb = ib; jb < 3; ++jb) {
            if (ja == ia && jb == ib) continue;
            const auto& lo = in.cells[static_cast<int>(b)][ia][ib];
            const auto& hi = in.cells[static_cast<int>(b)][ja][jb];
            if (lo.gain_interval.lower > hi.gain_interval.upper) {
              return std::string(to_string(b)) + "-basis gain of (" +
                     std::string(to_string(static_cast<Intensity>(ia))) + "," +
                     std::string(to_string(static_cast<Intensity>(ib))) + ") exceeds (" +
                     std::string(to_string(static_cast<Intensity>(ja))) + "," +
                     std::string(to_string(static_cast<Intensity>(jb))) + ")";
            }
          }
        }
      }
    }
  }
  return {};
}

double y11_lower(const DecoyInputs& in, Basis b) {
  const Quad q = intensities(in, b);
  const auto g = [&](Intensity ia, Intensity ib) -> const Interval& {
    return in.at(b, ia, ib).gain_interval;
  };
  using I = Intensity;
  const double s_decoy = std::exp(q.x + q.y) * g(I::kDecoy, I::kDecoy).lower -
                         std::exp(q.x) * g(I::kDecoy, I::kVacuum).upper -
                         std::exp(q.y) * g(I::kVacuum, I::kDecoy).upper +
                         g(I::kVacuum, I::kVacuum).lower;
  const double s_signal = std::exp(q.X + q.Y) * g(I::kSignal, I::kSignal).upper -
                          std::exp(q.X) * g(I::kSignal, I::kVacuum).lower -
                          std::exp(q.Y) * g(I::kVacuum, I::kSignal).lower +
                          g(I::kVacuum, I::kVacuum).upper;
  const double ra = q.x / q.X;
  const double rb = q.y / q.Y;
  const double c = ra * rb * std::max(ra, rb);
  const double y = (s_decoy - c * s_signal) / (q.x * q.y - c * q.X * q.Y);
  return std::max(0.0, y);
}

double e11_upper(const DecoyInputs& in, double y11_x) {
  const Quad q = intensities(in, Basis::kX);
  const auto t = [&](Intensity ia, Intensity ib) -> const Interval& {
    return in.at(Basis::kX, ia, ib).error_gain_interval;
  };
  using I = Intensity;
  const double numer = std::exp(q.x + q.y) * t(I::kDecoy, I::kDecoy).upper -
                       std::exp(q.x) * t(I::kDecoy, I::kVacuum).lower -
                       std::exp(q.y) * t(I::kVacuum, I::kDecoy).lower +
                       t(I::kVacuum, I::kVacuum).upper;
  if (!(y11_x > 0.0)) return 0.5;
  return std::clamp(numer / (q.x * q.y * y11_x), 0.0, 0.5);
}

CellMeasurement from_counts(std::uint64_t k, std::uint64_t e, std::uint64_t n, double z) {
  CellMeasurement m;
  if (n == 0) {
    m.gain_interval = {0.0, 1.0};
    m.error_gain_interval = {0.0, 1.0};
    return m;
  }
  m.gain = static_cast<double>(k) / static_cast<double>(n);
  m.error_gain = static_cast<double>(e) / static_cast<double>(n);
  m.gain_interval = wilson_interval(k, n, z);
  m.error_gain_interval = wilson_interval(e, n, z);
  return m;
}

}  // namespace

double binary_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("binary_entropy: p outside [0, 1]");
  if (p == 0.0 || p == 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

double key_rate_basic(double q_z, double e_x, double q_x, double f) {
  const double h = binary_entropy(e_x);
  return q_z * (1.0 - h) - q_x * f * h;
}

void DecoyInputs::validate() const {
  for (const auto* party : {&intensities_a, &intensities_b}) {
    for (const auto& row : *party) {
      if (!(row[0] == 0.0 && row[1] > 0.0 && row[2] > row[1])) {
        throw std::invalid_argument("decoy intensities must satisfy 0 = vacuum < decoy < signal");
      }
    }
  }
  for (const auto& basis : cells) {
    for (const auto& row : basis) {
      for (const CellMeasurement& c : row) {
        if (!in_unit(c.gain) || !in_unit(c.error_gain) || !in_unit(c.gain_interval.lower) ||
            !in_unit(c.gain_interval.upper) || !in_unit(c.error_gain_interval.lower) ||
            !in_unit(c.error_gain_interval.upper)) {
          throw std::invalid_argument("decoy gains and error gains must lie in [0, 1]");
        }
        if (c.gain_interval.lower > c.gain_interval.upper ||
            c.error_gain_interval.lower > c.error_gain_interval.upper) {
          throw std::invalid_argument("decoy interval with lower > upper");
        }
      }
    }
  }
}

std::array<std::array<double, 3>, 2> basis_intensities(const SourceParams& source) {
  std::array<std::array<double, 3>, 2> out{};
  for (Intensity i : kIntensities) {
    const double mu = source.mean_photon_number(i);
    out[0][static_cast<int>(i)] = mu * (1.0 + source.leakage());
    out[1][static_cast<int>(i)] = mu;
  }
  return out;
}

DecoyInputs decoy_inputs_from_tallies(const TallyCounters& tallies, const SourceParams& alice,
                                      const SourceParams& bob, double z) {
  DecoyInputs in;
  in.intensities_a = basis_intensities(alice);
  in.intensities_b = basis_intensities(bob);
  for (Basis b : kBases) {
    for (Intensity ia : kIntensities) {
      for (Intensity ib : kIntensities) {
        const TallyCell& c = tallies.cell(b, ia, ib);
        in.at(b, ia, ib) = from_counts(c.n_psi_minus, c.n_errors_psi_minus, c.n_sent, z);
      }
    }
  }
  return in;
}

DecoyInputs decoy_inputs_from_expectations(const std::array<CellExpectation, 18>& cells,
                                           const SourceParams& alice, const SourceParams& bob) {
  DecoyInputs in;
  in.intensities_a = basis_intensities(alice);
  in.intensities_b = basis_intensities(bob);
  for (Basis b : kBases) {
    for (Intensity ia : kIntensities) {
      for (Intensity ib : kIntensities) {
        const CellExpectation& e = cells[TallyCounters::index(b, ia, ib)];
        CellMeasurement& m = in.at(b, ia, ib);
        m.gain = e.gain;
        m.gain_interval = {e.gain, e.gain};
        m.error_gain = e.error_gain;
        m.error_gain_interval = {e.error_gain, e.error_gain};
      }
    }
  }
  return in;
}

DecoyBounds decoy_bounds(const DecoyInputs& inputs) {
  inputs.validate();
  DecoyBounds out;
  out.infeasible_reason = ordering_violation(inputs);
  if (!out.infeasible_reason.empty()) return out;
  out.feasible = true;
  out.y11_z_lower = y11_lower(inputs, Basis::kZ);
  out.y11_x_lower = y11_lower(inputs, Basis::kX);
  const Quad qz = intensities(inputs, Basis::kZ);
  out.q11_z_lower = qz.X * qz.Y * std::exp(-qz.X - qz.Y) * out.y11_z_lower;
  out.e11_x_upper = e11_upper(inputs, out.y11_x_lower);
  return out;
}

KeyRateReport key_rate_decoy(const DecoyBounds& bounds, double q_z_sig, double e_z_sig, double f,
                             double clock_rate_hz) {
  if (!(f >= 1.0)) throw std::domain_error("key_rate_decoy: f must be >= 1");
  KeyRateReport r;
  r.f = f;
  r.q_z_sig = q_z_sig;
  r.e_z_sig = e_z_sig;
  r.feasible = bounds.feasible;
  if (!bounds.feasible) return r;
  r.q11_z = bounds.q11_z_lower;
  r.e11_x = bounds.e11_x_upper;
  r.s_unclamped = r.q11_z * (1.0 - binary_entropy(r.e11_x)) - q_z_sig * f * binary_entropy(e_z_sig);
  r.s_per_pulse = std::max(0.0, r.s_unclamped);
  r.s_per_second = r.s_per_pulse * clock_rate_hz;
  return r;
}

KeyRateReport key_rate_from_inputs(const DecoyInputs& inputs, double f, double clock_rate_hz) {
  const DecoyBounds b = decoy_bounds(inputs);
  const CellMeasurement& sig = inputs.at(Basis::kZ, Intensity::kSignal, Intensity::kSignal);
  const double e = sig.gain > 0.0 ? sig.error_gain / sig.gain : 0.0;
  return key_rate_decoy(b, sig.gain, e, f, clock_rate_hz);
}

std::vector<double> parse_sweep(const std::string& spec) {
  double v[3];
  const char* p = spec.data();
  const char* end = spec.data() + spec.size();
  for (int i = 0; i < 3; ++i) {
    const auto res = std::from_chars(p, end, v[i]);
    if (res.ec != std::errc() || (i < 2 && (res.ptr == end || *res.ptr != ':')) ||
        (i == 2 && res.ptr != end)) {
      throw std::invalid_argument("sweep must be start:stop:step, got '" + spec + "'");
    }
    p = res.ptr + 1;
  }
  if (!(v[2] > 0.0) || !(v[1] >= v[0]) || !(v[0] >= 0.0)) {
    throw std::invalid_argument("sweep needs 0 <= start <= stop and step > 0");
  }
  std::vector<double> out;
  for (std::uint64_t k = 0;; ++k) {
    const double x = v[0] + static_cast<double>(k) * v[2];
    if (x > v[1] + 1e-9 * v[2]) break;
    out.push_back(x);
  }
  return out;
}

std::vector<CurvePoint> theory_curve(const SessionConfig& system, const std::vector<double>& losses_db,
                                     double f, int grid_points) {
  std::vector<CurvePoint> out(losses_db.size());
  const auto n = static_cast<std::int64_t>(losses_db.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) {
    SessionConfig cfg = system;
    cfg.channel_a.loss_db = losses_db[i] / 2.0;
    cfg.channel_b.loss_db = losses_db[i] / 2.0;
    const DecoyInputs in =
        decoy_inputs_from_expectations(expected_cells(cfg, grid_points), cfg.alice, cfg.bob);
    CurvePoint& pt = out[i];
    pt.loss_db = losses_db[i];
    pt.distance_km_020 = losses_db[i] / 0.2;
    pt.distance_km_016 = losses_db[i] / 0.16;
    pt.report = key_rate_from_inputs(in, f, cfg.alice.clock_rate_hz);
  }
  return out;
}

std::string curve_csv(const std::vector<CurvePoint>& points) {
  std::string s =
      "loss_db,distance_km_020,distance_km_016,Q11_lower,e11_upper,QZ_sig,eZ_sig,S_per_pulse,S_per_sec\n";
  for (const CurvePoint& p : points) {
    const KeyRateReport& r = p.report;
    s += fmt(p.loss_db) + ',' + fmt(p.distance_km_020) + ',' + fmt(p.distance_km_016) + ',' +
         fmt(r.q11_z) + ',' + fmt(r.e11_x) + ',' + fmt(r.q_z_sig) + ',' + fmt(r.e_z_sig) + ',' +
         fmt(r.s_per_pulse) + ',' + fmt(r.s_per_second) + '\n';
  }
  return s;
}

}  // namespace mdiqkd
