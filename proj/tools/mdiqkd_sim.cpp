// mdiqkd-sim: command-line front end for the four experiments.
//
//   mdiqkd-sim <hom-dip|keyrate|session|feedback> --config <path> --seed <u64>
//              --rounds <n> --workers <k> --out <path> [--sweep a:b:c]
//
// Exit codes: 0 success, 1 configuration or usage error, 2 runtime error.
// Failures print one JSON object on stderr.

#include <omp.h>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mdiqkd/config.h"
#include "mdiqkd/experiments.h"

namespace {

using nlohmann::json;

int fail(int code, const std::string& kind, const std::string& message, json errors = json::array()) {
  json e{{"status", "error"}, {"kind", kind}, {"exit_code", code}, {"message", message}};
  if (!errors.empty()) e["errors"] = std::move(errors);
  std::cerr << e.dump() << '\n';
  return code;
}

void write_file(const std::string& path, const std::string& content, bool binary) {
  std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-bin MDI-QKD simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> rounds;
  std::optional<std::uint64_t> workers;
  std::string out;
  std::optional<std::string> sweep;

  for (const char* name : {"hom-dip", "keyrate", "session", "feedback"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "configuration file (flat section.key = value)");
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--rounds", rounds, "trials per delay / session rounds / loop steps");
    sub->add_option("--workers", workers, "OpenMP threads")->check(CLI::Range(1, 1024));
    sub->add_option("--out", out, "output CSV path")->required();
    if (std::string(name) == "keyrate") sub->add_option("--sweep", sweep, "total loss grid start:stop:step (dB)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(mdiqkd::kExitConfig, "usage", e.what());
  }
  const std::string subcommand = app.get_subcommands().front()->get_name();

  mdiqkd::RunConfig cfg;
  try {
    std::string text;
    if (!config_path.empty()) {
      std::ifstream f(config_path, std::ios::binary);
      if (!f) return fail(mdiqkd::kExitConfig, "config", "cannot read '" + config_path + "'");
      std::ostringstream ss;
      ss << f.rdbuf();
      text = ss.str();
    }
    cfg = mdiqkd::parse_config(text);
    if (seed) cfg.session.seed = *seed;
    if (workers) cfg.run.workers = *workers;
    if (sweep) {
      mdiqkd::parse_sweep(*sweep);
      cfg.keyrate.sweep = *sweep;
    }
    if (rounds) {
      if (*rounds < 1) throw std::invalid_argument("--rounds must be >= 1");
      if (subcommand == "hom-dip") cfg.hom.trials = std::max<std::uint64_t>(*rounds, 2);
      if (subcommand == "session") cfg.session.n_rounds = *rounds;
      if (subcommand == "feedback") cfg.plant.steps = *rounds;
    }
  } catch (const mdiqkd::ConfigParseError& e) {
    json errs = json::array();
    for (const auto& err : e.errors()) errs.push_back({{"line", err.line}, {"key", err.key}, {"message", err.message}});
    return fail(mdiqkd::kExitConfig, "config", e.what(), std::move(errs));
  } catch (const std::invalid_argument& e) {
    return fail(mdiqkd::kExitConfig, "config", e.what());
  }

  omp_set_num_threads(static_cast<int>(cfg.run.workers));
  try {
    const mdiqkd::ExperimentResult result = mdiqkd::run_experiment(subcommand, cfg);
    std::vector<std::string> files;
    for (const auto& a : result.artifacts) {
      const std::string path = a.role == "round_log" ? cfg.run.round_log : mdiqkd::artifact_path(out, a.role);
      write_file(path, a.content, a.binary);
      files.push_back(path);
    }
    write_file(out + ".manifest.json", mdiqkd::manifest_json(subcommand, cfg, files, result), false);
    if (!result.analysis_error.empty()) return fail(mdiqkd::kExitRuntime, "analysis", result.analysis_error);
  } catch (const std::exception& e) {
    return fail(mdiqkd::kExitRuntime, "runtime", e.what());
  }
  return mdiqkd::kExitOk;
}
