#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mdiqkd/feedback.h"
#include "mdiqkd/session.h"

namespace mdiqkd {

struct HomSettings {
  double mu = 0.03;
  std::uint64_t trials = 1'000'000;  // per delay point
  double delay_min_ps = -600.0;
  double delay_max_ps = 600.0;
  double delay_step_ps = 50.0;
};

struct KeyrateSettings {
  std::string sweep = "0:80:5";
  int grid_points = 1024;
};

struct AnalysisSettings {
  double f = 1.16;
  double confidence_z = 3.0;
};

// Stand-alone loop simulations of the feedback subcommand.
struct PlantSettings {
  std::uint64_t steps = 100'000;
  FrequencyPlant frequency;
  PolarizationPlant polarization;
  TimingPlant timing;
  bool timing_acquire = true;
};

struct RunSettings {
  std::uint64_t workers = 1;
  std::string round_log;  // empty: no binary log
};

struct RunConfig {
  SessionConfig session;
  // Channel polarization as a rotation vector (rad); the unitary in
  // session.channel_* is rebuilt from it.
  std::array<double, 3> polarization_a{0.0, 0.0, 0.0};
  std::array<double, 3> polarization_b{0.0, 0.0, 0.0};
  HomSettings hom;
  KeyrateSettings keyrate;
  AnalysisSettings analysis;
  PlantSettings plant;
  RunSettings run;
};

struct ConfigError {
  int line = 0;  // 0: not tied to a line (e.g. cross-field check on defaults)
  std::string key;
  std::string message;
};

class ConfigParseError : public std::runtime_error {
 public:
  explicit ConfigParseError(std::vector<ConfigError> errors);
  const std::vector<ConfigError>& errors() const { return errors_; }

 private:
  std::vector<ConfigError> errors_;
};

// Flat `section.key = value` lines, `#` starts a comment. `source.*` keys
// set both parties; `alice.*` / `bob.*` override them regardless of order.
// Collects every error before throwing ConfigParseError.
RunConfig parse_config(std::string_view text);

// Canonical text: every key, one per line, in registry order.
std::string render_config(const RunConfig& config);

bool operator==(const RunConfig& a, const RunConfig& b);

// Names of all accepted keys, in render order.
std::vector<std::string> config_keys();

}  // namespace mdiqkd
