#include "mdiqkd/experiments.h"

#include <openssl/crypto.h>
#include <openssl/evp.h>

#include <Eigen/Core>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "mdiqkd/csv.h"

#ifndef MDIQKD_VERSION
#define MDIQKD_VERSION "0.0.0"
#endif

namespace mdiqkd {
namespace {

using nlohmann::json;

json report_json(const KeyRateReport& r) {
  return {{"feasible", r.feasible},       {"S_per_pulse", r.s_per_pulse}, {"S_unclamped", r.s_unclamped},
          {"S_per_sec", r.s_per_second},  {"Q11_lower", r.q11_z},         {"e11_upper", r.e11_x},
          {"QZ_sig", r.q_z_sig},          {"eZ_sig", r.e_z_sig},          {"f", r.f}};
}

ExperimentResult run_hom(const RunConfig& cfg) {
  const auto points = hom_dip(cfg);
  ExperimentResult res;
  res.artifacts.push_back({"", hom_dip_csv(points)});
  const HomPoint* centre = &points.front();
  for (const HomPoint& p : points) {
    if (std::abs(p.delay_ps) < std::abs(centre->delay_ps)) centre = &p;
  }
  res.summary_json = json{{"points", points.size()},
                          {"centre_delay_ps", centre->delay_ps},
                          {"centre_visibility", centre->result.visibility},
                          {"centre_visibility_std_error", centre->result.std_error}}
                         .dump();
  return res;
}

ExperimentResult run_keyrate(const RunConfig& cfg) {
  const auto points = theory_curve(cfg.session, parse_sweep(cfg.keyrate.sweep), cfg.analysis.f,
                                   cfg.keyrate.grid_points);
  ExperimentResult res;
  res.artifacts.push_back({"", curve_csv(points)});
  json cutoff = nullptr;
  for (const CurvePoint& p : points) {
    if (p.report.s_per_pulse <= 0.0) {
      cutoff = p.loss_db;
      break;
    }
  }
  res.summary_json = json{{"points", points.size()}, {"first_zero_rate_loss_db", cutoff}}.dump();
  return res;
}

ExperimentResult run_session_experiment(const RunConfig& cfg) {
  SessionConfig sc = cfg.session;
  sc.keep_round_log = !cfg.run.round_log.empty();
  const SessionResult out = run_session(sc);
  ExperimentResult res;
  res.artifacts.push_back({"", session_csv(out.tallies, cfg.analysis.confidence_z)});
  if (sc.keep_round_log) {
    std::ostringstream log;
    write_round_log(log, out.round_log);
    res.artifacts.push_back({"round_log", log.str(), true});
  }

  const DecoyInputs in =
      decoy_inputs_from_tallies(out.tallies, sc.alice, sc.bob, cfg.analysis.confidence_z);
  const KeyRateReport report = key_rate_from_inputs(in, cfg.analysis.f, sc.alice.clock_rate_hz);
  if (!report.feasible) res.analysis_error = "decoy analysis infeasible: " + decoy_bounds(in).infeasible_reason;

  std::uint64_t psi_minus = 0, psi_plus = 0;
  for (const TallyCell& c : out.tallies.cells) {
    psi_minus += c.n_psi_minus;
    psi_plus += c.n_psi_plus;
  }
  const auto qber = [&](Basis b) -> json {
    const TallyCell& c = out.tallies.cell(b, Intensity::kSignal, Intensity::kSignal);
    if (c.n_psi_minus == 0) return nullptr;
    return static_cast<double>(c.n_errors_psi_minus) / static_cast<double>(c.n_psi_minus);
  };
  res.summary_json = json{{"rounds", out.tallies.rounds},
                          {"psi_minus_same_basis", psi_minus},
                          {"psi_plus_same_basis", psi_plus},
                          {"sifted_bits", out.sifted.size()},
                          {"qber_z_signal", qber(Basis::kZ)},
                          {"qber_x_signal", qber(Basis::kX)},
                          {"monitor_visibility", out.monitor.visibility()},
                          {"fifo_peak_depth", out.fifo_peak_depth},
                          {"key_rate", report_json(report)}}
                         .dump();
  return res;
}

ExperimentResult run_feedback(const RunConfig& cfg) {
  const auto& fb = cfg.session.feedback;
  const PlantSettings& plant = cfg.plant;
  const std::uint64_t seed = cfg.session.seed;
  const LoopTrace freq = simulate_frequency_loop(fb.frequency, plant.frequency, plant.steps, seed);
  const LoopTrace pol = simulate_polarization_loop(fb.polarization, plant.polarization, plant.steps, seed);
  TimingLoopParams tp = fb.timing;
  tp.acquire = plant.timing_acquire;
  TimingPlant timing = plant.timing;
  timing.interference = cfg.session.interference;
  timing.detectors = cfg.session.detector;
  const LoopTrace tim = simulate_timing_loop(tp, timing, plant.steps, seed);

  ExperimentResult res;
  res.artifacts.push_back({"frequency", loop_trace_csv(freq)});
  res.artifacts.push_back({"polarization", loop_trace_csv(pol)});
  res.artifacts.push_back({"timing", loop_trace_csv(tim)});
  const auto final_residual = [](const LoopTrace& t) { return t.empty() ? 0.0 : t.back().residual; };
  res.summary_json = json{{"steps", plant.steps},
                          {"frequency_final_residual_hz", final_residual(freq)},
                          {"polarization_final_loss", final_residual(pol)},
                          {"timing_final_residual_ps", final_residual(tim)}}
                         .dump();
  return res;
}

}  // namespace

std::vector<HomPoint> hom_dip(const RunConfig& config) {
  const HomSettings& h = config.hom;
  std::vector<HomPoint> out;
  for (std::uint64_t k = 0;; ++k) {
    const double d = h.delay_min_ps + static_cast<double>(k) * h.delay_step_ps;
    if (d > h.delay_max_ps + 1e-9 * h.delay_step_ps) break;
    InterferenceContext ctx = config.session.interference;
    ctx.relative_delay_ps = d;
    // Same seed at every delay: common random phases make the curve smooth.
    out.push_back({d, hom_visibility(h.mu, ctx, config.session.detector, h.trials, config.session.seed)});
  }
  return out;
}

std::string hom_dip_csv(const std::vector<HomPoint>& points) {
  std::string s = "delay_ps,coincidence_prob,coincidence_std_error,distinguishable_prob,visibility,visibility_std_error\n";
  for (const HomPoint& p : points) {
    const HomVisibility& v = p.result;
    s += fmt(p.delay_ps) + ',' + fmt(v.matched.probability) + ',' + fmt(v.matched.std_error) + ',' +
         fmt(v.distinguishable.probability) + ',' + fmt(v.visibility) + ',' + fmt(v.std_error) + '\n';
  }
  return s;
}

std::string session_csv(const TallyCounters& tallies, double z) {
  std::string s =
      "basis,intensity_a,intensity_b,n_sent,n_psi_minus,n_errors_psi_minus,n_psi_plus,n_errors_psi_plus,"
      "gain,gain_lower,gain_upper,qber,qber_lower,qber_upper\n";
  const auto est = estimate_gains(tallies, z);
  for (const CellEstimate& e : est) {
    const TallyCell& c = tallies.cell(e.basis, e.intensity_a, e.intensity_b);
    s += std::string(to_string(e.basis)) + ',' + std::string(to_string(e.intensity_a)) + ',' +
         std::string(to_string(e.intensity_b)) + ',' + fmt(c.n_sent) + ',' + fmt(c.n_psi_minus) + ',' +
         fmt(c.n_errors_psi_minus) + ',' + fmt(c.n_psi_plus) + ',' + fmt(c.n_errors_psi_plus) + ',';
    s += e.gain_missing ? ",,," : fmt(e.gain) + ',' + fmt(e.gain_interval.lower) + ',' + fmt(e.gain_interval.upper) + ',';
    s += e.error_missing ? ",," : fmt(e.error_rate) + ',' + fmt(e.error_interval.lower) + ',' + fmt(e.error_interval.upper);
    s += '\n';
  }
  return s;
}

std::string loop_trace_csv(const LoopTrace& trace) {
  std::string s = "step,disturbance,measurement,actuation,residual\n";
  for (const LoopTraceRow& r : trace) {
    s += fmt(r.step) + ',' + fmt(r.disturbance) + ',' + fmt(r.measurement) + ',' + fmt(r.actuation) + ',' +
         fmt(r.residual) + '\n';
  }
  return s;
}

ExperimentResult run_experiment(const std::string& subcommand, const RunConfig& config) {
  if (subcommand == "hom-dip") return run_hom(config);
  if (subcommand == "keyrate") return run_keyrate(config);
  if (subcommand == "session") return run_session_experiment(config);
  if (subcommand == "feedback") return run_feedback(config);
  throw std::invalid_argument("unknown subcommand '" + subcommand + "'");
}

std::string artifact_path(const std::string& out, const std::string& role) {
  if (role.empty()) return out;
  const auto slash = out.find_last_of('/');
  const auto dot = out.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return out + "_" + role;
  return out.substr(0, dot) + "_" + role + out.substr(dot);
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    s += hex[md[i] >> 4];
    s += hex[md[i] & 15];
  }
  return s;
}

std::string manifest_json(const std::string& subcommand, const RunConfig& config,
                          const std::vector<std::string>& files, const ExperimentResult& result) {
  const std::string text = render_config(config);
  json m;
  m["tool"] = "mdiqkd-sim";
  m["version"] = MDIQKD_VERSION;
  m["subcommand"] = subcommand;
  m["seed"] = config.session.seed;
  m["workers"] = config.run.workers;
  m["config_sha256"] = sha256_hex(text);
  m["config"] = text;
  m["outputs"] = files;
  m["summary"] = json::parse(result.summary_json.empty() ? "{}" : result.summary_json);
  if (!result.analysis_error.empty()) m["analysis_error"] = result.analysis_error;
  m["versions"] = {{"compiler", __VERSION__},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                 "." + std::to_string(EIGEN_MINOR_VERSION)},
                   {"openmp", _OPENMP},
                   {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                   {"openssl", OpenSSL_version(OPENSSL_VERSION)}};
  return m.dump(2) + '\n';
}

}  // namespace mdiqkd
