#pragma once

#include <string>
#include <vector>

#include "mdiqkd/config.h"
#include "mdiqkd/keyrate.h"

namespace mdiqkd {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitRuntime = 2 };

// One output file; `role` is empty for the primary CSV and names the loop
// for the per-loop feedback traces.
struct Artifact {
  std::string role;
  std::string content;
  bool binary = false;
};

struct ExperimentResult {
  std::vector<Artifact> artifacts;
  std::string summary_json;  // JSON object embedded in the manifest
  // Set when the run finished but its analysis is unusable (e.g. the decoy
  // inputs are inconsistent); artifacts are still written.
  std::string analysis_error;
};

struct HomPoint {
  double delay_ps = 0.0;
  HomVisibility result;
};

std::vector<HomPoint> hom_dip(const RunConfig& config);
std::string hom_dip_csv(const std::vector<HomPoint>& points);

// Per-cell CSV of a session's tallies with Wilson intervals.
std::string session_csv(const TallyCounters& tallies, double z);

std::string loop_trace_csv(const LoopTrace& trace);

// Runs `hom-dip`, `keyrate`, `session` or `feedback`. Throws
// std::invalid_argument for an unknown subcommand and lets runtime failures
// propagate.
ExperimentResult run_experiment(const std::string& subcommand, const RunConfig& config);

// Output path of an artifact given the primary --out path:
// "dir/name.csv" + role "timing" -> "dir/name_timing.csv".
std::string artifact_path(const std::string& out, const std::string& role);

std::string sha256_hex(const std::string& data);

// Run manifest: configuration hash and canonical text, seed, parallelism,
// library versions, artifact list and the experiment summary.
std::string manifest_json(const std::string& subcommand, const RunConfig& config,
                          const std::vector<std::string>& files, const ExperimentResult& result);

}  // namespace mdiqkd
