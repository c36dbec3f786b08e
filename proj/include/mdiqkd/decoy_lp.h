#pragma once

#include <vector>

#include "mdiqkd/keyrate.h"

namespace mdiqkd {

struct LpSolution {
  bool feasible = false;
  double objective = 0.0;
  std::vector<double> x;
};

// minimize c.x subject to A x <= b, x >= 0. Dense two-phase tableau simplex
// with Bland's rule, extended precision. Throws std::runtime_error if the
// problem is unbounded.
LpSolution simplex_minimize(const std::vector<double>& c, const std::vector<std::vector<double>>& a,
                            const std::vector<double>& b);

// Photon-number-pair yields Y_nm (n, m <= cutoff, each in [0, 1]) constrained
// by the same gain intervals the analytic bound consumes; mass beyond the
// cutoff is absorbed by a slack of at most the Poisson tail probability.
struct LpDecoyBounds {
  bool feasible = false;
  double y11_z_lower = 0.0;
  double y11_x_lower = 0.0;
  double z11_x_upper = 0.0;   // max of Y11 e11 in the X basis
  double e11_x_upper = 0.5;   // z11_x_upper / y11_x_lower, capped at 0.5
  // How far the analytic combination can move when the truncated tail mass
  // is redistributed, per bound.
  double tolerance_y11_z = 0.0;
  double tolerance_y11_x = 0.0;
  double tolerance_e11_x = 0.0;
};

LpDecoyBounds decoy_lp_bounds(const DecoyInputs& inputs, int cutoff = 10);

}  // namespace mdiqkd
