#include "mdiqkd/optics.h"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace mdiqkd {
namespace {

constexpr double kLn2 = std::numbers::ln2;
constexpr std::uint64_t kHomBlock = 1u << 16;

struct Moments {
  double sum = 0.0;
  double sum_sq = 0.0;
};

HomEstimate finish(const Moments& m, std::uint64_t n) {
  HomEstimate est;
  est.trials = n;
  if (n == 0) return est;
  const double mean = m.sum / static_cast<double>(n);
  const double var = n > 1 ? std::max(0.0, (m.sum_sq - m.sum * mean) / static_cast<double>(n - 1)) : 0.0;
  est.probability = mean;
  est.std_error = std::sqrt(var / static_cast<double>(n));
  return est;
}

// Conditional same-bin coincidence probability for one trial of random
// global phases.
double hom_trial(const PulsePair& a, const PulsePair& b, const InterferenceSetup& setup,
                 const DetectorModel& det, std::uint64_t seed, std::uint64_t trial) {
  CounterRng rng(seed, StreamId::kHom, trial);
  const cplx pa = std::polar(1.0, 2.0 * std::numbers::pi * rng.uniform());
  const cplx pb = std::polar(1.0, 2.0 * std::numbers::pi * rng.uniform());
  const SlotIntensities n =
      output_intensities(a.early * pa, a.late * pa, b.early * pb, b.late * pb, setup);
  return same_bin_coincidence(n, det);
}

}  // namespace

void ChannelState::validate() const {
  if (!(loss_db >= 0.0)) throw std::invalid_argument("channel loss_db must be >= 0");
  const Unitary2 defect = polarization_unitary.adjoint() * polarization_unitary - Unitary2::Identity();
  if (defect.cwiseAbs().maxCoeff() > 1e-12) {
    throw std::invalid_argument("channel polarization matrix is not unitary");
  }
  if (!std::isfinite(delay_ps) || !std::isfinite(detuning_hz)) {
    throw std::invalid_argument("channel delay and detuning must be finite");
  }
}

double ChannelState::transmission() const { return std::pow(10.0, -loss_db / 10.0); }

void DetectorModel::validate() const {
  if (!(efficiency >= 0.0 && efficiency <= 1.0)) {
    throw std::invalid_argument("detector efficiency must lie in [0, 1]");
  }
  if (!(dark_click_prob >= 0.0 && dark_click_prob <= 1.0)) {
    throw std::invalid_argument("dark_click_prob must lie in [0, 1]");
  }
  if (!(jitter_sigma_ps >= 0.0)) throw std::invalid_argument("jitter_sigma_ps must be >= 0");
  if (!(coincidence_window_ps > 0.0)) {
    throw std::invalid_argument("coincidence_window_ps must be positive");
  }
}

double DetectorModel::gate_pass_probability() const {
  if (jitter_sigma_ps == 0.0) return 1.0;
  return std::erf(coincidence_window_ps / (2.0 * std::sqrt(2.0) * jitter_sigma_ps));
}

void InterferenceContext::validate() const {
  if (!(mode_overlap >= 0.0 && mode_overlap <= 1.0)) {
    throw std::invalid_argument("mode_overlap must lie in [0, 1]");
  }
  if (!(bin_width_ps > 0.0)) throw std::invalid_argument("bin_width_ps must be positive");
  if (!(bin_separation_ps > bin_width_ps)) {
    throw std::invalid_argument("bin_separation_ps must exceed bin_width_ps");
  }
  if (!(spectral_width_hz > 0.0)) throw std::invalid_argument("spectral_width_hz must be positive");
  if (!std::isfinite(relative_delay_ps) || !std::isfinite(relative_detuning_hz)) {
    throw std::invalid_argument("relative delay and detuning must be finite");
  }
}

unsigned ClickSet::mask() const {
  unsigned m = 0;
  for (int i = 0; i < count; ++i) m |= 1u << slot_index(events[i].detector, events[i].bin);
  return m;
}

PulsePair propagate(const PulsePair& pulse, const ChannelState& channel) {
  PulsePair out = pulse;
  const double amplitude = std::pow(10.0, -channel.loss_db / 20.0);
  out.early *= amplitude;
  out.late *= amplitude;
  out.polarization = channel.polarization_unitary * pulse.polarization;
  out.arrival_offset_ps += channel.delay_ps;
  out.frequency_offset_hz += channel.detuning_hz;
  return out;
}

double temporal_overlap(double delay_ps, double width_ps) {
  const double r = delay_ps / width_ps;
  return std::exp(-kLn2 * r * r);
}

double spectral_overlap(double detuning_hz, double width_hz) {
  const double r = detuning_hz / width_hz;
  return std::exp(-kLn2 * r * r);
}

double effective_overlap(const InterferenceContext& ctx) {
  return ctx.mode_overlap * temporal_overlap(ctx.relative_delay_ps, ctx.bin_width_ps) *
         spectral_overlap(ctx.relative_detuning_hz, ctx.spectral_width_hz);
}

InterferenceSetup interference_setup(const PulsePair& a, const PulsePair& b,
                                     const InterferenceContext& ctx) {
  InterferenceContext local = ctx;
  local.relative_delay_ps += a.arrival_offset_ps - b.arrival_offset_ps;
  local.relative_detuning_hz += a.frequency_offset_hz - b.frequency_offset_hz;
  const double xi = effective_overlap(local);

  InterferenceSetup setup;
  if (ctx.input_polarizers) {
    setup.factor_a = a.polarization(0);
    setup.factor_b = b.polarization(0);
    setup.overlap = xi;
  } else {
    setup.overlap = xi * a.polarization.dot(b.polarization);  // conjugates the first
  }
  return setup;
}

SlotIntensities output_intensities(cplx a_early, cplx a_late, cplx b_early, cplx b_late,
                                   const InterferenceSetup& setup) {
  SlotIntensities n{};
  const cplx a[2] = {a_early * setup.factor_a, a_late * setup.factor_a};
  const cplx b[2] = {b_early * setup.factor_b, b_late * setup.factor_b};
  for (int bin = 0; bin < 2; ++bin) {
    const double mean = 0.5 * (std::norm(a[bin]) + std::norm(b[bin]));
    const double cross = std::real(std::conj(a[bin]) * b[bin] * setup.overlap);
    n[slot_index(Detector::kD1, static_cast<TimeBin>(bin))] = mean + cross;
    n[slot_index(Detector::kD2, static_cast<TimeBin>(bin))] = std::max(0.0, mean - cross);
  }
  return n;
}

double click_probability(double mean_photons, const DetectorModel& det) {
  return 1.0 - (1.0 - det.dark_click_prob) * std::exp(-det.efficiency * mean_photons);
}

double registered_click_probability(double mean_photons, const DetectorModel& det) {
  const double light = -std::expm1(-det.efficiency * mean_photons) * det.gate_pass_probability();
  return 1.0 - (1.0 - det.dark_click_prob) * (1.0 - light);
}

ClickSet sample_clicks(const SlotIntensities& n, const DetectorModel& det, double bin_separation_ps,
                       CounterRng& rng) {
  ClickSet clicks;
  const double half_gate = 0.5 * det.coincidence_window_ps;
  for (int slot = 0; slot < 4; ++slot) {
    const double centre = (slot & 1) ? bin_separation_ps : 0.0;
    bool hit = false;
    double t = 0.0;
    if (n[slot] > 0.0 && rng.uniform() < -std::expm1(-det.efficiency * n[slot])) {
      const double jitter = det.jitter_sigma_ps > 0.0 ? det.jitter_sigma_ps * rng.normal() : 0.0;
      if (std::abs(jitter) <= half_gate) {
        hit = true;
        t = centre + jitter;
      }
    }
    if (det.dark_click_prob > 0.0 && rng.uniform() < det.dark_click_prob) {
      const double dark_t = centre + (2.0 * rng.uniform() - 1.0) * half_gate;
      t = hit ? std::min(t, dark_t) : dark_t;
      hit = true;
    }
    if (hit) {
      clicks.add({static_cast<Detector>(slot >> 1), static_cast<TimeBin>(slot & 1), t});
    }
  }
  return clicks;
}

ClickSet interfere_and_click(const PulsePair& a, const PulsePair& b, const InterferenceContext& ctx,
                             const DetectorModel& det, CounterRng& rng) {
  if (a.emission_slot != b.emission_slot) {
    throw std::invalid_argument("interfere_and_click: pulses belong to different emission slots");
  }
  const InterferenceSetup setup = interference_setup(a, b, ctx);
  const SlotIntensities n = output_intensities(a.early, a.late, b.early, b.late, setup);
  return sample_clicks(n, det, ctx.bin_separation_ps, rng);
}

double same_bin_coincidence(const SlotIntensities& n, const DetectorModel& det) {
  const double e1 = registered_click_probability(n[0], det);
  const double l1 = registered_click_probability(n[1], det);
  const double e2 = registered_click_probability(n[2], det);
  const double l2 = registered_click_probability(n[3], det);
  return e1 * e2 + l1 * l2;
}

PatternProbabilities phase_averaged_patterns(const PulsePair& a, const PulsePair& b,
                                             const InterferenceContext& ctx, const DetectorModel& det,
                                             int grid_points) {
  if (grid_points < 1) throw std::invalid_argument("grid_points must be >= 1");
  const InterferenceSetup setup = interference_setup(a, b, ctx);
  PatternProbabilities out;
  const double w = 1.0 / grid_points;
  for (int k = 0; k < grid_points; ++k) {
    const cplx rot = std::polar(1.0, 2.0 * std::numbers::pi * (k + 0.5) * w);
    const SlotIntensities n = output_intensities(a.early, a.late, b.early * rot, b.late * rot, setup);
    std::array<double, 4> p;
    for (int s = 0; s < 4; ++s) p[s] = registered_click_probability(n[s], det);
    for (unsigned mask = 0; mask < 16; ++mask) {
      double prob = 1.0;
      for (int s = 0; s < 4; ++s) prob *= (mask >> s & 1u) ? p[s] : 1.0 - p[s];
      out.by_mask[mask] += w * prob;
    }
    out.same_bin_coincidence += w * (p[0] * p[2] + p[1] * p[3]);
  }
  return out;
}

PulsePair hom_probe_pulse(double mu) {
  PulsePair p;
  p.early = std::sqrt(mu);
  return p;
}

HomEstimate hom_coincidence_prob(const PulsePair& a, const PulsePair& b,
                                 const InterferenceContext& ctx, const DetectorModel& det,
                                 std::uint64_t n_trials, std::uint64_t seed) {
  if (n_trials < 1) throw std::invalid_argument("n_trials must be >= 1");
  const InterferenceSetup setup = interference_setup(a, b, ctx);
  const std::uint64_t n_blocks = (n_trials + kHomBlock - 1) / kHomBlock;
  std::vector<Moments> blocks(n_blocks);

#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t blk = 0; blk < static_cast<std::int64_t>(n_blocks); ++blk) {
    const std::uint64_t begin = static_cast<std::uint64_t>(blk) * kHomBlock;
    const std::uint64_t end = std::min(n_trials, begin + kHomBlock);
    Moments m;
    for (std::uint64_t i = begin; i < end; ++i) {
      const double c = hom_trial(a, b, setup, det, seed, i);
      m.sum += c;
      m.sum_sq += c * c;
    }
    blocks[blk] = m;
  }

  Moments total;
  for (const Moments& m : blocks) {
    total.sum += m.sum;
    total.sum_sq += m.sum_sq;
  }
  return finish(total, n_trials);
}

HomEstimate hom_coincidence_prob(double mu, const InterferenceContext& ctx,
                                 const DetectorModel& det, std::uint64_t n_trials,
                                 std::uint64_t seed) {
  const PulsePair p = hom_probe_pulse(mu);
  return hom_coincidence_prob(p, p, ctx, det, n_trials, seed);
}

HomEstimate hom_coincidence_prob_serial(const PulsePair& a, const PulsePair& b,
                                        const InterferenceContext& ctx, const DetectorModel& det,
                                        std::uint64_t n_trials, std::uint64_t seed) {
  if (n_trials < 1) throw std::invalid_argument("n_trials must be >= 1");
  const InterferenceSetup setup = interference_setup(a, b, ctx);
  Moments m;
  for (std::uint64_t i = 0; i < n_trials; ++i) {
    const double c = hom_trial(a, b, setup, det, seed, i);
    m.sum += c;
    m.sum_sq += c * c;
  }
  return finish(m, n_trials);
}

HomEstimate hom_coincidence_sampled(const PulsePair& a, const PulsePair& b,
                                    const InterferenceContext& ctx, const DetectorModel& det,
                                    std::uint64_t n_trials, std::uint64_t seed) {
  if (n_trials < 1) throw std::invalid_argument("n_trials must be >= 1");
  std::uint64_t hits = 0;
#pragma omp parallel for reduction(+ : hits) schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n_trials); ++i) {
    CounterRng rng(seed, StreamId::kHom, static_cast<std::uint64_t>(i));
    PulsePair pa = a;
    PulsePair pb = b;
    const cplx ra = std::polar(1.0, 2.0 * std::numbers::pi * rng.uniform());
    const cplx rb = std::polar(1.0, 2.0 * std::numbers::pi * rng.uniform());
    pa.early *= ra;
    pa.late *= ra;
    pb.early *= rb;
    pb.late *= rb;
    pb.emission_slot = pa.emission_slot;
    const unsigned m = interfere_and_click(pa, pb, ctx, det, rng).mask();
    const bool early = (m & kMaskD1Early) && (m & kMaskD2Early);
    const bool late = (m & kMaskD1Late) && (m & kMaskD2Late);
    hits += static_cast<std::uint64_t>(early) + static_cast<std::uint64_t>(late);
  }
  HomEstimate est;
  est.trials = n_trials;
  est.probability = static_cast<double>(hits) / static_cast<double>(n_trials);
  est.std_error = std::sqrt(std::max(est.probability, 1.0 / n_trials) / static_cast<double>(n_trials));
  return est;
}

HomVisibility hom_visibility(double mu, const InterferenceContext& ctx, const DetectorModel& det,
                             std::uint64_t n_trials, std::uint64_t seed) {
  if (n_trials < 2) throw std::invalid_argument("n_trials must be >= 2");
  const PulsePair p = hom_probe_pulse(mu);
  const InterferenceSetup matched = interference_setup(p, p, ctx);
  InterferenceSetup disjoint = matched;
  disjoint.overlap = 0.0;

  struct Pair {
    double c = 0, d = 0, cc = 0, dd = 0, cd = 0;
  };
  const std::uint64_t n_blocks = (n_trials + kHomBlock - 1) / kHomBlock;
  std::vector<Pair> blocks(n_blocks);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t blk = 0; blk < static_cast<std::int64_t>(n_blocks); ++blk) {
    const std::uint64_t begin = static_cast<std::uint64_t>(blk) * kHomBlock;
    const std::uint64_t end = std::min(n_trials, begin + kHomBlock);
    Pair s;
    for (std::uint64_t i = begin; i < end; ++i) {
      const double c = hom_trial(p, p, matched, det, seed, i);
      const double d = hom_trial(p, p, disjoint, det, seed, i);
      s.c += c;
      s.d += d;
      s.cc += c * c;
      s.dd += d * d;
      s.cd += c * d;
    }
    blocks[blk] = s;
  }
  Pair t;
  for (const Pair& s : blocks) {
    t.c += s.c;
    t.d += s.d;
    t.cc += s.cc;
    t.dd += s.dd;
    t.cd += s.cd;
  }

  const double n = static_cast<double>(n_trials);
  const double mc = t.c / n;
  const double md = t.d / n;
  const double vc = std::max(0.0, (t.cc - n * mc * mc) / (n - 1));
  const double vd = std::max(0.0, (t.dd - n * md * md) / (n - 1));
  const double cov = (t.cd - n * mc * md) / (n - 1);

  HomVisibility out;
  out.matched = {mc, std::sqrt(vc / n), n_trials};
  out.distinguishable = {md, std::sqrt(vd / n), n_trials};
  if (md > 0.0) {
    out.visibility = 1.0 - mc / md;
    // Delta method for the ratio mc/md.
    const double r = mc / md;
    const double var_r = (vc - 2.0 * r * cov + r * r * vd) / (md * md * n);
    out.std_error = std::sqrt(std::max(0.0, var_r));
  }
  return out;
}

}  // namespace mdiqkd
