// mdiqkd-calibrate: grid search over the unpublished detector and intensity
// parameters of the key-rate model. For every candidate it evaluates the
// closed-form curve at 16 dB and 24 dB total loss and bisects the loss at
// which the rate reaches zero, then prints the candidates ranked by distance
// to the targets (100 bit/s at 16 dB, cutoff near 80 dB).

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include "CLI11.hpp"
#include "mdiqkd/config.h"
#include "mdiqkd/csv.h"
#include "mdiqkd/keyrate.h"

namespace {

using namespace mdiqkd;

struct Candidate {
  double efficiency, dark, mu, nu;
  double s16_per_sec, s24, cutoff_db;
  double score;
};

double rate_at(const RunConfig& cfg, double loss, int grid) {
  return theory_curve(cfg.session, {loss}, cfg.analysis.f, grid).front().report.s_per_pulse;
}

double cutoff(const RunConfig& cfg, int grid) {
  double lo = 24.0, hi = 160.0;
  if (rate_at(cfg, lo, grid) <= 0.0) return lo;
  if (rate_at(cfg, hi, grid) > 0.0) return hi;
  for (int i = 0; i < 14; ++i) {
    const double mid = 0.5 * (lo + hi);
    (rate_at(cfg, mid, grid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<double> logspace(double a, double b, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(a * std::pow(b / a, n == 1 ? 0.0 : static_cast<double>(i) / (n - 1)));
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Key-rate model calibration scan"};
  std::string config_path;
  int grid = 256;
  int top = 10;
  std::vector<double> eff_range{0.05, 0.6};
  std::vector<double> dark_range{1e-8, 1e-5};
  std::vector<double> mu_range{0.1, 0.6};
  std::vector<double> nu_range{0.01, 0.1};
  int steps = 6;
  app.add_option("--config", config_path, "base configuration");
  app.add_option("--grid", grid, "phase grid points");
  app.add_option("--top", top, "candidates to print");
  app.add_option("--steps", steps, "grid points per parameter");
  app.add_option("--efficiency", eff_range, "min max")->expected(2);
  app.add_option("--dark", dark_range, "min max (log grid)")->expected(2);
  app.add_option("--mu", mu_range, "min max")->expected(2);
  app.add_option("--nu", nu_range, "min max")->expected(2);
  CLI11_PARSE(app, argc, argv);

  RunConfig base;
  try {
    std::string text;
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      std::ostringstream ss;
      ss << f.rdbuf();
      text = ss.str();
    }
    base = parse_config(text);
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }

  std::vector<Candidate> all;
  for (double eff : logspace(eff_range[0], eff_range[1], steps)) {
    for (double dark : logspace(dark_range[0], dark_range[1], steps)) {
      for (double mu : logspace(mu_range[0], mu_range[1], steps)) {
        for (double nu : logspace(nu_range[0], nu_range[1], std::max(2, steps - 2))) {
          if (nu >= mu) continue;
          RunConfig cfg = base;
          cfg.session.detector.efficiency = eff;
          cfg.session.detector.dark_click_prob = dark;
          for (SourceParams* s : {&cfg.session.alice, &cfg.session.bob}) {
            s->mu_signal = mu;
            s->mu_decoy = nu;
          }
          Candidate c{eff, dark, mu, nu, 0, 0, 0, 0};
          c.s16_per_sec = rate_at(cfg, 16.0, grid) * cfg.session.alice.clock_rate_hz;
          c.s24 = rate_at(cfg, 24.0, grid);
          c.cutoff_db = cutoff(cfg, grid);
          c.score = std::abs(std::log(std::max(c.s16_per_sec, 1e-12) / 100.0)) +
                    std::abs(c.cutoff_db - 80.0) / 10.0 + (c.s24 > 0.0 ? 0.0 : 10.0);
          all.push_back(c);
        }
      }
    }
  }
  std::sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) { return a.score < b.score; });
  std::cout << "efficiency,dark_click_prob,mu_signal,mu_decoy,S16_per_sec,S24_per_pulse,cutoff_db,score\n";
  for (int i = 0; i < std::min<int>(top, static_cast<int>(all.size())); ++i) {
    const Candidate& c = all[i];
    std::cout << fmt(c.efficiency) << ',' << fmt(c.dark) << ',' << fmt(c.mu) << ',' << fmt(c.nu) << ','
              << fmt(c.s16_per_sec) << ',' << fmt(c.s24) << ',' << fmt(c.cutoff_db) << ',' << fmt(c.score) << '\n';
  }
  return 0;
}
