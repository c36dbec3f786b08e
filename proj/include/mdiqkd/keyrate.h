#pragma once

#include <array>
#include <string>
#include <vector>

#include "mdiqkd/session.h"
#include "mdiqkd/stats.h"

namespace mdiqkd {

// Throws std::domain_error outside [0, 1].
double binary_entropy(double p);

// S = Q_Z [1 - h2(e_X)] - Q_X f h2(e_X)
double key_rate_basic(double q_z, double e_x, double q_x, double f);

// One same-basis cell as seen by the decoy analysis: psi- gain Q and error
// gain QE (errors per sent pair), point values and intervals.
struct CellMeasurement {
  double gain = 0.0;
  Interval gain_interval{0.0, 0.0};
  double error_gain = 0.0;
  Interval error_gain_interval{0.0, 0.0};
};

struct DecoyInputs {
  // Mean photon numbers per party, [basis][Intensity]. Z-basis pulses
  // include the light leaking into the empty bin.
  std::array<std::array<double, 3>, 2> intensities_a{{{0.0, 0.01, 0.03}, {0.0, 0.01, 0.03}}};
  std::array<std::array<double, 3>, 2> intensities_b{{{0.0, 0.01, 0.03}, {0.0, 0.01, 0.03}}};
  // [basis][intensity A][intensity B]
  std::array<std::array<std::array<CellMeasurement, 3>, 3>, 2> cells{};

  CellMeasurement& at(Basis b, Intensity ia, Intensity ib) {
    return cells[static_cast<int>(b)][static_cast<int>(ia)][static_cast<int>(ib)];
  }
  const CellMeasurement& at(Basis b, Intensity ia, Intensity ib) const {
    return cells[static_cast<int>(b)][static_cast<int>(ia)][static_cast<int>(ib)];
  }

  // Throws std::invalid_argument: intensities must satisfy 0 = vacuum <
  // decoy < signal, all values and interval ends in [0, 1].
  void validate() const;
};

// Per-basis mean photon numbers of one party's three classes.
std::array<std::array<double, 3>, 2> basis_intensities(const SourceParams& source);

DecoyInputs decoy_inputs_from_tallies(const TallyCounters& tallies, const SourceParams& alice,
                                      const SourceParams& bob, double z);
// Exact expected values, zero-width intervals.
DecoyInputs decoy_inputs_from_expectations(const std::array<CellExpectation, 18>& cells,
                                           const SourceParams& alice, const SourceParams& bob);

struct DecoyBounds {
  bool feasible = false;
  std::string infeasible_reason;
  double y11_z_lower = 0.0;   // single-photon-pair yield, Z basis
  double y11_x_lower = 0.0;
  double q11_z_lower = 0.0;   // mu_a mu_b e^{-mu_a-mu_b} Y11_Z
  double e11_x_upper = 0.5;   // capped at 0.5
};

// Three-intensity analytic bounds. The yield lower bound combines the
// decoy-decoy and signal-signal pairs so that every multi-photon term enters
// with a non-positive coefficient; the error bound uses decoy pairs only.
DecoyBounds decoy_bounds(const DecoyInputs& inputs);

struct KeyRateReport {
  bool feasible = false;
  double s_per_pulse = 0.0;  // clamped at 0
  double s_unclamped = 0.0;
  double s_per_second = 0.0;
  double q11_z = 0.0;
  double e11_x = 0.0;
  double q_z_sig = 0.0;
  double e_z_sig = 0.0;
  double f = 1.16;
};

// S = Q11_Z [1 - h2(e11_X)] - Q_Z f h2(e_Z), from the signal-signal Z cell.
KeyRateReport key_rate_decoy(const DecoyBounds& bounds, double q_z_sig, double e_z_sig, double f,
                             double clock_rate_hz);

// Full pipeline on measured or expected cells.
KeyRateReport key_rate_from_inputs(const DecoyInputs& inputs, double f, double clock_rate_hz);

struct CurvePoint {
  double loss_db = 0.0;
  double distance_km_020 = 0.0;
  double distance_km_016 = 0.0;
  KeyRateReport report;
};

// Parses "start:stop:step" (dB, inclusive stop). Throws std::invalid_argument.
std::vector<double> parse_sweep(const std::string& spec);

// Closed-form curve: the total loss is split evenly between the two arms
// (replacing the configured channel losses), cell expectations come from the
// phase-averaged model and go through the decoy pipeline.
std::vector<CurvePoint> theory_curve(const SessionConfig& system, const std::vector<double>& losses_db,
                                     double f, int grid_points = 1024);

// Fixed header plus one row per point; shortest round-trip number format,
// independent of the locale.
std::string curve_csv(const std::vector<CurvePoint>& points);

}  // namespace mdiqkd
