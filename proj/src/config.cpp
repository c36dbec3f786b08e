#include "mdiqkd/config.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>

#include "mdiqkd/csv.h"
#include "mdiqkd/keyrate.h"

namespace mdiqkd {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Setter = std::function<std::string(RunConfig&, std::string_view)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct KeyDef {
  std::string name;
  Setter set;
  Getter get;
  bool rendered = true;
  bool allow_empty = false;
  int pass = 1;  // source.* applies before party-specific keys
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::optional<double> to_double(std::string_view v) {
  double x = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(x)) return std::nullopt;
  return x;
}

std::optional<std::uint64_t> to_u64(std::string_view v) {
  std::uint64_t x = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) return std::nullopt;
  return x;
}

struct Range {
  double lo = -kInf;
  double hi = kInf;
  bool lo_open = false;
  bool hi_open = false;

  std::string check(double x) const {
    const bool ok_lo = lo_open ? x > lo : x >= lo;
    const bool ok_hi = hi_open ? x < hi : x <= hi;
    if (ok_lo && ok_hi) return {};
    std::string msg = "value " + fmt(x) + " out of range: must be ";
    if (lo != -kInf) msg += (lo_open ? "> " : ">= ") + fmt(lo);
    if (lo != -kInf && hi != kInf) msg += " and ";
    if (hi != kInf) msg += (hi_open ? "< " : "<= ") + fmt(hi);
    return msg;
  }
};

const Range kAny{};
const Range kNonNeg{0.0};
const Range kPositive{0.0, kInf, true};
const Range kUnit{0.0, 1.0};

template <class Field>
KeyDef real(std::string name, Field field, Range range = kAny,
            std::function<void(RunConfig&)> post = nullptr) {
  KeyDef k;
  k.name = std::move(name);
  k.set = [field, range, post](RunConfig& c, std::string_view v) -> std::string {
    const auto x = to_double(v);
    if (!x) return "type mismatch: expected a finite number, got '" + std::string(v) + "'";
    if (auto msg = range.check(*x); !msg.empty()) return msg;
    field(c) = *x;
    if (post) post(c);
    return {};
  };
  k.get = [field](const RunConfig& c) { return fmt(field(const_cast<RunConfig&>(c))); };
  return k;
}

template <class Field>
KeyDef integer(std::string name, Field field, std::uint64_t lo = 0,
               std::uint64_t hi = std::numeric_limits<std::uint64_t>::max()) {
  KeyDef k;
  k.name = std::move(name);
  k.set = [field, lo, hi](RunConfig& c, std::string_view v) -> std::string {
    const auto x = to_u64(v);
    if (!x) return "type mismatch: expected a non-negative integer, got '" + std::string(v) + "'";
    if (*x < lo || *x > hi) {
      return "value " + fmt(*x) + " out of range: must be in [" + fmt(lo) + ", " + fmt(hi) + "]";
    }
    using T = std::remove_reference_t<decltype(field(c))>;
    field(c) = static_cast<T>(*x);
    return {};
  };
  k.get = [field](const RunConfig& c) {
    return fmt(static_cast<std::uint64_t>(field(const_cast<RunConfig&>(c))));
  };
  return k;
}

template <class Field>
KeyDef boolean(std::string name, Field field) {
  KeyDef k;
  k.name = std::move(name);
  k.set = [field](RunConfig& c, std::string_view v) -> std::string {
    if (v == "true") {
      field(c) = true;
    } else if (v == "false") {
      field(c) = false;
    } else {
      return "type mismatch: expected true or false, got '" + std::string(v) + "'";
    }
    return {};
  };
  k.get = [field](const RunConfig& c) {
    return std::string(field(const_cast<RunConfig&>(c)) ? "true" : "false");
  };
  return k;
}

template <class Field>
KeyDef text(std::string name, Field field, std::function<std::string(std::string_view)> check = nullptr) {
  KeyDef k;
  k.name = std::move(name);
  k.set = [field, check](RunConfig& c, std::string_view v) -> std::string {
    if (check) {
      if (auto msg = check(v); !msg.empty()) return msg;
    }
    field(c) = std::string(v);
    return {};
  };
  k.get = [field](const RunConfig& c) { return field(const_cast<RunConfig&>(c)); };
  k.allow_empty = !check;
  return k;
}

void rebuild_polarization(RunConfig& c) {
  const auto& a = c.polarization_a;
  const auto& b = c.polarization_b;
  c.session.channel_a.polarization_unitary = su2_rotation(a[0], a[1], a[2]);
  c.session.channel_b.polarization_unitary = su2_rotation(b[0], b[1], b[2]);
}

using SourceField = std::function<double&(SourceParams&)>;

void add_source_keys(std::vector<KeyDef>& keys) {
  const std::vector<std::pair<std::string, std::pair<SourceField, Range>>> fields = {
      {"mu_signal", {[](SourceParams& s) -> double& { return s.mu_signal; }, kNonNeg}},
      {"mu_decoy", {[](SourceParams& s) -> double& { return s.mu_decoy; }, kNonNeg}},
      {"p_z", {[](SourceParams& s) -> double& { return s.p_z; }, kUnit}},
      {"p_bit_one", {[](SourceParams& s) -> double& { return s.p_bit_one; }, kUnit}},
      {"p_vacuum", {[](SourceParams& s) -> double& { return s.p_intensity[0]; }, kUnit}},
      {"p_decoy", {[](SourceParams& s) -> double& { return s.p_intensity[1]; }, kUnit}},
      {"p_signal", {[](SourceParams& s) -> double& { return s.p_intensity[2]; }, kUnit}},
      {"extinction_ratio_db", {[](SourceParams& s) -> double& { return s.extinction_ratio_db; }, kPositive}},
      {"clock_rate_hz", {[](SourceParams& s) -> double& { return s.clock_rate_hz; }, kPositive}},
  };
  for (const auto& [name, spec] : fields) {
    const SourceField f = spec.first;
    const Range r = spec.second;
    KeyDef both = real("source." + name, [f](RunConfig& c) -> double& { return f(c.session.alice); }, r,
                       [f](RunConfig& c) { f(c.session.bob) = f(c.session.alice); });
    both.rendered = false;
    both.pass = 0;
    keys.push_back(std::move(both));
  }
  for (const auto& [name, spec] : fields) {
    const SourceField f = spec.first;
    keys.push_back(real("alice." + name, [f](RunConfig& c) -> double& { return f(c.session.alice); }, spec.second));
  }
  for (const auto& [name, spec] : fields) {
    const SourceField f = spec.first;
    keys.push_back(real("bob." + name, [f](RunConfig& c) -> double& { return f(c.session.bob); }, spec.second));
  }
}

void add_channel_keys(std::vector<KeyDef>& keys, const std::string& section, bool is_a) {
  const auto ch = [is_a](RunConfig& c) -> ChannelState& {
    return is_a ? c.session.channel_a : c.session.channel_b;
  };
  const auto pol = [is_a](RunConfig& c) -> std::array<double, 3>& {
    return is_a ? c.polarization_a : c.polarization_b;
  };
  keys.push_back(real(section + ".loss_db", [ch](RunConfig& c) -> double& { return ch(c).loss_db; }, kNonNeg));
  keys.push_back(real(section + ".delay_ps", [ch](RunConfig& c) -> double& { return ch(c).delay_ps; }));
  keys.push_back(real(section + ".detuning_hz", [ch](RunConfig& c) -> double& { return ch(c).detuning_hz; }));
  const char* axes[] = {"x", "y", "z"};
  for (int i = 0; i < 3; ++i) {
    keys.push_back(real(section + ".polarization_" + axes[i] + "_rad",
                        [pol, i](RunConfig& c) -> double& { return pol(c)[i]; }, kAny, rebuild_polarization));
  }
}

const std::vector<KeyDef>& registry() {
  static const std::vector<KeyDef> keys = [] {
    std::vector<KeyDef> k;
    add_source_keys(k);
    add_channel_keys(k, "channel_a", true);
    add_channel_keys(k, "channel_b", false);

#define FIELD(expr) [](RunConfig& c) -> auto& { return c.expr; }
    k.push_back(real("detector.efficiency", FIELD(session.detector.efficiency), kUnit));
    k.push_back(real("detector.dark_click_prob", FIELD(session.detector.dark_click_prob), kUnit));
    k.push_back(real("detector.jitter_sigma_ps", FIELD(session.detector.jitter_sigma_ps), kNonNeg));
    k.push_back(real("detector.coincidence_window_ps", FIELD(session.detector.coincidence_window_ps), kPositive));

    k.push_back(real("interference.mode_overlap", FIELD(session.interference.mode_overlap), kUnit));
    k.push_back(real("interference.relative_delay_ps", FIELD(session.interference.relative_delay_ps)));
    k.push_back(real("interference.relative_detuning_hz", FIELD(session.interference.relative_detuning_hz)));
    k.push_back(real("interference.bin_width_ps", FIELD(session.interference.bin_width_ps), kPositive));
    k.push_back(real("interference.bin_separation_ps", FIELD(session.interference.bin_separation_ps), kPositive));
    k.push_back(real("interference.spectral_width_hz", FIELD(session.interference.spectral_width_hz), kPositive));
    k.push_back(boolean("interference.input_polarizers", FIELD(session.interference.input_polarizers)));

    {
      KeyDef e;
      e.name = "session.engine";
      e.set = [](RunConfig& c, std::string_view v) -> std::string {
        const auto engine = engine_from_string(v);
        if (!engine) {
          return "type mismatch: expected coherent, photon_number or single_photon, got '" +
                 std::string(v) + "'";
        }
        c.session.engine = *engine;
        return {};
      };
      e.get = [](const RunConfig& c) { return std::string(to_string(c.session.engine)); };
      k.push_back(std::move(e));
    }
    k.push_back(integer("session.rounds", FIELD(session.n_rounds), 1));
    k.push_back(integer("session.first_round", FIELD(session.first_round)));
    k.push_back(integer("session.batch_rounds", FIELD(session.batch_rounds), 1));
    k.push_back(integer("session.fifo_latency_rounds", FIELD(session.fifo_latency_rounds)));
    k.push_back(boolean("session.keep_sifted", FIELD(session.keep_sifted)));
    k.push_back(text("session.round_log", FIELD(run.round_log)));

    k.push_back(real("drift.polarization_step_rad", FIELD(session.drift.polarization_step_rad), kNonNeg));
    k.push_back(real("drift.delay_step_ps", FIELD(session.drift.delay_step_ps), kNonNeg));
    k.push_back(real("drift.frequency_step_hz", FIELD(session.drift.frequency_step_hz), kNonNeg));
    k.push_back(integer("drift.interval_rounds", FIELD(session.drift.interval_rounds), 1));

    k.push_back(boolean("feedback.enabled", FIELD(session.feedback.enabled)));
    k.push_back(real("feedback.frequency_kp", FIELD(session.feedback.frequency.kp), kNonNeg));
    k.push_back(real("feedback.frequency_ki", FIELD(session.feedback.frequency.ki), kNonNeg));
    k.push_back(real("feedback.frequency_kd", FIELD(session.feedback.frequency.kd), kNonNeg));
    k.push_back(real("feedback.frequency_resolution_hz", FIELD(session.feedback.frequency.resolution_hz), kPositive));
    k.push_back(real("feedback.beat_noise_hz", FIELD(session.feedback.beat_noise_hz), kNonNeg));
    k.push_back(real("feedback.polarization_probe_rad", FIELD(session.feedback.polarization.probe_rad), kPositive));
    k.push_back(real("feedback.polarization_min_probe_rad", FIELD(session.feedback.polarization.min_probe_rad), kPositive));
    k.push_back(real("feedback.polarization_max_probe_rad", FIELD(session.feedback.polarization.max_probe_rad), kPositive));
    k.push_back(real("feedback.polarization_grow", FIELD(session.feedback.polarization.grow), Range{1.0}));
    k.push_back(real("feedback.polarization_shrink", FIELD(session.feedback.polarization.shrink), Range{0.0, 1.0, true}));
    k.push_back(real("feedback.polarization_z", FIELD(session.feedback.polarization.z), kNonNeg));
    k.push_back(real("feedback.timing_resolution_ps", FIELD(session.feedback.timing.resolution_ps), kPositive));
    k.push_back(integer("feedback.timing_dither_steps", FIELD(session.feedback.timing.dither_steps), 1, 1000));
    k.push_back(integer("feedback.timing_scan_steps", FIELD(session.feedback.timing.scan_steps), 1, 100000));
    k.push_back(real("feedback.timing_z", FIELD(session.feedback.timing.z), kNonNeg));
    k.push_back(boolean("feedback.timing_acquire", FIELD(session.feedback.timing.acquire)));

    k.push_back(integer("plant.steps", FIELD(plant.steps), 1));
    k.push_back(real("plant.frequency_initial_hz", FIELD(plant.frequency.initial_detuning_hz)));
    k.push_back(real("plant.frequency_drift_step_hz", FIELD(plant.frequency.drift_step_hz), kNonNeg));
    k.push_back(real("plant.frequency_drift_rate_hz", FIELD(plant.frequency.drift_rate_hz)));
    k.push_back(real("plant.frequency_noise_hz", FIELD(plant.frequency.measurement_noise_hz), kNonNeg));
    k.push_back(real("plant.polarization_initial_transmission", FIELD(plant.polarization.initial_transmission), kUnit));
    k.push_back(real("plant.polarization_drift_step_rad", FIELD(plant.polarization.drift_step_rad), kNonNeg));
    k.push_back(real("plant.polarization_counts_per_step", FIELD(plant.polarization.counts_per_step), kPositive));
    k.push_back(real("plant.timing_initial_offset_ps", FIELD(plant.timing.initial_offset_ps)));
    k.push_back(real("plant.timing_drift_step_ps", FIELD(plant.timing.drift_step_ps), kNonNeg));
    k.push_back(real("plant.timing_mu", FIELD(plant.timing.mu), kPositive));
    k.push_back(real("plant.timing_pairs_per_step", FIELD(plant.timing.pairs_per_step), kPositive));
    k.push_back(boolean("plant.timing_acquire", FIELD(plant.timing_acquire)));

    k.push_back(real("hom.mu", FIELD(hom.mu), kPositive));
    k.push_back(integer("hom.trials", FIELD(hom.trials), 2));
    k.push_back(real("hom.delay_min_ps", FIELD(hom.delay_min_ps)));
    k.push_back(real("hom.delay_max_ps", FIELD(hom.delay_max_ps)));
    k.push_back(real("hom.delay_step_ps", FIELD(hom.delay_step_ps), kPositive));

    k.push_back(text("keyrate.sweep", FIELD(keyrate.sweep), [](std::string_view v) -> std::string {
      try {
        parse_sweep(std::string(v));
      } catch (const std::invalid_argument& e) {
        return e.what();
      }
      return {};
    }));
    k.push_back(integer("keyrate.grid_points", FIELD(keyrate.grid_points), 16, 1 << 20));

    k.push_back(real("analysis.f", FIELD(analysis.f), Range{1.0}));
    k.push_back(real("analysis.confidence_z", FIELD(analysis.confidence_z), kNonNeg));

    k.push_back(integer("run.seed", FIELD(session.seed)));
    k.push_back(integer("run.workers", FIELD(run.workers), 1, 1024));
#undef FIELD
    return k;
  }();
  return keys;
}

struct Entry {
  int line;
  const KeyDef* def;
  std::string value;
};

}  // namespace

ConfigParseError::ConfigParseError(std::vector<ConfigError> errors)
    : std::runtime_error([&] {
        std::string s;
        for (const auto& e : errors) {
          if (!s.empty()) s += "; ";
          s += "line " + std::to_string(e.line) + (e.key.empty() ? "" : " (" + e.key + ")") + ": " + e.message;
        }
        return s;
      }()),
      errors_(std::move(errors)) {}

RunConfig parse_config(std::string_view text) {
  std::map<std::string_view, const KeyDef*> by_name;
  for (const KeyDef& k : registry()) by_name[k.name] = &k;

  std::vector<ConfigError> errors;
  std::vector<Entry> entries;
  std::map<std::string, int> first_line;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      errors.push_back({line_no, "", "expected 'section.key = value'"});
      continue;
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    const auto it = by_name.find(key);
    if (it == by_name.end()) {
      errors.push_back({line_no, key, "unknown key"});
      continue;
    }
    if (auto [f, inserted] = first_line.emplace(key, line_no); !inserted) {
      errors.push_back({line_no, key, "duplicate key, first set on line " + std::to_string(f->second)});
      continue;
    }
    if (value.empty() && !it->second->allow_empty) {
      errors.push_back({line_no, key, "missing value"});
      continue;
    }
    entries.push_back({line_no, it->second, value});
  }

  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) { return a.def->pass < b.def->pass; });
  RunConfig cfg;
  for (const Entry& e : entries) {
    if (auto msg = e.def->set(cfg, e.value); !msg.empty()) errors.push_back({e.line, e.def->name, msg});
  }

  // Cross-field checks are reported at the last line that touched one of the
  // involved keys.
  const auto line_of = [&](std::initializer_list<std::string> keys) {
    int l = 0;
    for (const auto& k : keys) {
      if (auto it = first_line.find(k); it != first_line.end()) l = std::max(l, it->second);
    }
    return l;
  };
  const std::size_t n_local = errors.size();
  for (const auto& [party, src] : {std::pair<std::string, const SourceParams*>{"alice", &cfg.session.alice},
                                   std::pair<std::string, const SourceParams*>{"bob", &cfg.session.bob}}) {
    if (!(src->mu_decoy < src->mu_signal)) {
      errors.push_back({line_of({party + ".mu_decoy", party + ".mu_signal", "source.mu_decoy", "source.mu_signal"}),
                        party + ".mu_decoy", "must be smaller than " + party + ".mu_signal"});
    }
    const double total = src->p_intensity[0] + src->p_intensity[1] + src->p_intensity[2];
    if (std::abs(total - 1.0) > 1e-9) {
      errors.push_back({line_of({party + ".p_vacuum", party + ".p_decoy", party + ".p_signal", "source.p_vacuum",
                                 "source.p_decoy", "source.p_signal"}),
                        party + ".p_signal", "intensity probabilities sum to " + fmt(total) + ", not 1"});
    }
  }
  const InterferenceContext& ic = cfg.session.interference;
  if (!(ic.bin_separation_ps > ic.bin_width_ps)) {
    errors.push_back({line_of({"interference.bin_separation_ps", "interference.bin_width_ps"}),
                      "interference.bin_separation_ps", "must exceed interference.bin_width_ps"});
  }
  if (!(cfg.hom.delay_min_ps <= cfg.hom.delay_max_ps)) {
    errors.push_back({line_of({"hom.delay_min_ps", "hom.delay_max_ps"}), "hom.delay_max_ps",
                      "must be >= hom.delay_min_ps"});
  }
  const auto& pol = cfg.session.feedback.polarization;
  if (!(pol.min_probe_rad <= pol.probe_rad && pol.probe_rad <= pol.max_probe_rad)) {
    errors.push_back({line_of({"feedback.polarization_probe_rad", "feedback.polarization_min_probe_rad",
                               "feedback.polarization_max_probe_rad"}),
                      "feedback.polarization_probe_rad", "must lie between the min and max probe"});
  }
  if (cfg.session.engine != Engine::kCoherent && (cfg.session.feedback.enabled || cfg.session.drift.any())) {
    errors.push_back({line_of({"session.engine", "feedback.enabled", "drift.polarization_step_rad",
                               "drift.delay_step_ps", "drift.frequency_step_hz"}),
                      "session.engine", "drift and feedback require the coherent engine"});
  }
  if (errors.size() == n_local && errors.empty()) {
    try {
      cfg.session.validate();
    } catch (const std::invalid_argument& e) {
      errors.push_back({0, "", e.what()});
    }
  }
  if (!errors.empty()) {
    std::stable_sort(errors.begin(), errors.end(),
                     [](const ConfigError& a, const ConfigError& b) { return a.line < b.line; });
    throw ConfigParseError(std::move(errors));
  }
  return cfg;
}

std::string render_config(const RunConfig& config) {
  std::string out;
  for (const KeyDef& k : registry()) {
    if (!k.rendered) continue;
    out += k.name + " = " + k.get(config) + '\n';
  }
  return out;
}

bool operator==(const RunConfig& a, const RunConfig& b) { return render_config(a) == render_config(b); }

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const KeyDef& k : registry()) out.push_back(k.name);
  return out;
}

}  // namespace mdiqkd
