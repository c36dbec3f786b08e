#include "mdiqkd/session.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "mdiqkd/fock.h"

namespace mdiqkd {
namespace {

constexpr std::uint8_t kUnknownPhotons = 0xff;
constexpr int kCachedPhotons = 6;

struct RoundOutcome {
  std::uint8_t tag_a = 0;
  std::uint8_t tag_b = 0;
  std::uint8_t bell = 0;
  std::uint8_t photons_a = kUnknownPhotons;
  std::uint8_t photons_b = kUnknownPhotons;
  double same_bin = 0.0;
  double same_bin_dist = 0.0;
  double singles = 0.0;
};

// Output click-mask distributions of the photon-number engines, cached for
// small photon numbers. Index: state A (basis*2+bit), state B, k_a, k_b.
class PhotonTables {
 public:
  PhotonTables(const SourceParams& alice, const SourceParams& bob, double overlap)
      : overlap_(overlap), cache_(16 * 32 * 32) {
    for (int s = 0; s < 4; ++s) {
      const auto ma = qubit_mode(static_cast<Basis>(s >> 1), s & 1, alice.leakage());
      const auto mb = qubit_mode(static_cast<Basis>(s >> 1), s & 1, bob.leakage());
      modes_a_[s] = {ma[0], ma[1]};
      modes_b_[s] = {mb[0], mb[1]};
    }
    for (int sa = 0; sa < 4; ++sa) {
      for (int sb = 0; sb < 4; ++sb) {
        for (int ka = 0; ka <= kCachedPhotons; ++ka) {
          for (int kb = 0; ka + kb <= kCachedPhotons; ++kb) {
            cache_[key(sa, sb, ka, kb)] = cumulative(sa, sb, ka, kb);
          }
        }
      }
    }
  }

  unsigned sample(int sa, int sb, int ka, int kb, double u) const {
    if (ka + kb <= kCachedPhotons) return pick(cache_[key(sa, sb, ka, kb)], u);
    return pick(cumulative(sa, sb, ka, kb), u);
  }

 private:
  using Cdf = std::array<double, 16>;

  static int key(int sa, int sb, int ka, int kb) { return ((sa * 4 + sb) * 32 + ka) * 32 + kb; }

  Cdf cumulative(int sa, int sb, int ka, int kb) const {
    const FockDistribution d = fock_output_distribution(ka, kb, modes_a_[sa], modes_b_[sb], overlap_);
    Cdf c{};
    double run = 0.0;
    for (unsigned m = 0; m < 16; ++m) {
      run += d.by_click_mask[m];
      c[m] = run;
    }
    return c;
  }

  static unsigned pick(const Cdf& c, double u) {
    const double x = u * c[15];
    for (unsigned m = 0; m < 15; ++m) {
      if (x < c[m]) return m;
    }
    return 15;
  }

  double overlap_;
  std::array<TimeBinState, 4> modes_a_;
  std::array<TimeBinState, 4> modes_b_;
  std::vector<Cdf> cache_;
};

// Everything constant during one batch.
struct BatchPhysics {
  InterferenceSetup setup;
  InterferenceSetup setup_dist;
  double amp_a = 1.0;
  double amp_b = 1.0;
  double click_transmission_a = 1.0;  // photon engines: channel * polarizer * efficiency
  double click_transmission_b = 1.0;
  double gate_pass = 1.0;
  const PhotonTables* tables = nullptr;
};

double registered(double n, const DetectorModel& det, double gate_pass) {
  const double light = -std::expm1(-det.efficiency * n) * gate_pass;
  return 1.0 - (1.0 - det.dark_click_prob) * (1.0 - light);
}

void monitors(const SlotIntensities& n, const SlotIntensities& n0, const DetectorModel& det,
              double gate_pass, RoundOutcome& o) {
  std::array<double, 4> p;
  std::array<double, 4> p0;
  for (int s = 0; s < 4; ++s) {
    p[s] = registered(n[s], det, gate_pass);
    p0[s] = registered(n0[s], det, gate_pass);
  }
  o.same_bin = p[0] * p[2] + p[1] * p[3];
  o.same_bin_dist = p0[0] * p0[2] + p0[1] * p0[3];
  o.singles = p[0] + p[1] + p[2] + p[3];
}

std::uint32_t thin(std::uint32_t n, double t, CounterRng& rng) {
  std::uint32_t k = 0;
  for (std::uint32_t i = 0; i < n; ++i) k += rng.uniform() < t ? 1u : 0u;
  return k;
}

RoundOutcome simulate_round(const SessionConfig& cfg, const BatchPhysics& phys, std::uint64_t r) {
  CounterRng rng_a(cfg.seed, StreamId::kAlice, r);
  CounterRng rng_b(cfg.seed, StreamId::kBob, r);
  CounterRng rng_c(cfg.seed, StreamId::kCharlie, r);
  const QubitSpec sa = sample_spec(rng_a, cfg.alice);
  const QubitSpec sb = sample_spec(rng_b, cfg.bob);
  const PulsePair pa = encode(sa, cfg.alice, r);
  const PulsePair pb = encode(sb, cfg.bob, r);

  RoundOutcome o;
  o.tag_a = sa.tag_bits();
  o.tag_b = sb.tag_bits();
  const DetectorModel& det = cfg.detector;
  const double sep = cfg.interference.bin_separation_ps;

  ClickSet clicks;
  if (cfg.engine == Engine::kCoherent) {
    const cplx ae = pa.early * phys.amp_a, al = pa.late * phys.amp_a;
    const cplx be = pb.early * phys.amp_b, bl = pb.late * phys.amp_b;
    const SlotIntensities n = output_intensities(ae, al, be, bl, phys.setup);
    clicks = sample_clicks(n, det, sep, rng_c);
    monitors(n, output_intensities(ae, al, be, bl, phys.setup_dist), det, phys.gate_pass, o);
  } else {
    CounterRng src_a(cfg.seed, StreamId::kAliceSource, r);
    CounterRng src_b(cfg.seed, StreamId::kBobSource, r);
    const auto emitted = [&](const QubitSpec& s, const PulsePair& p, CounterRng& rng) -> std::uint32_t {
      if (s.intensity == Intensity::kVacuum) return 0;
      if (cfg.engine == Engine::kSinglePhoton) return 1;
      return rng.poisson(p.mean_photon_number());
    };
    const std::uint32_t na = emitted(sa, pa, src_a);
    const std::uint32_t nb = emitted(sb, pb, src_b);
    o.photons_a = static_cast<std::uint8_t>(std::min<std::uint32_t>(na, 254));
    o.photons_b = static_cast<std::uint8_t>(std::min<std::uint32_t>(nb, 254));
    const std::uint32_t ka = thin(na, phys.click_transmission_a, src_a);
    const std::uint32_t kb = thin(nb, phys.click_transmission_b, src_b);
    unsigned mask = 0;
    if (ka + kb > 0) {
      const int state_a = static_cast<int>(sa.basis) * 2 + sa.bit;
      const int state_b = static_cast<int>(sb.basis) * 2 + sb.bit;
      mask = phys.tables->sample(state_a, state_b, static_cast<int>(ka), static_cast<int>(kb),
                                 rng_c.uniform());
    }
    for (int slot = 0; slot < 4; ++slot) {
      bool hit = (mask >> slot & 1u) && rng_c.uniform() < phys.gate_pass;
      if (det.dark_click_prob > 0.0 && rng_c.uniform() < det.dark_click_prob) hit = true;
      if (hit) {
        clicks.add({static_cast<Detector>(slot >> 1), static_cast<TimeBin>(slot & 1),
                    (slot & 1) ? sep : 0.0});
      }
    }
  }
  if (auto ann = coincidence_logic(clicks, det.coincidence_window_ps, sep, r)) {
    o.bell = static_cast<std::uint8_t>(ann->bell_state);
  }
  return o;
}

struct Pending {
  std::uint64_t round = 0;
  BellState bell = BellState::kPsiMinus;
  std::uint8_t photons_a = kUnknownPhotons;
  std::uint8_t photons_b = kUnknownPhotons;
};

struct BatchSums {
  double x = 0, y = 0, xx = 0, yy = 0, xy = 0;  // same-bin (x) vs distinguishable (y)
  double s = 0, ss = 0;                          // singles
  std::uint64_t n = 0;
};

// Sequential protocol bookkeeping: FIFO delay lines, sifting, tallies.
class Bookkeeper {
 public:
  Bookkeeper(const SessionConfig& cfg, SessionResult& out)
      : cfg_(cfg), out_(out), fifo_a_(cfg.fifo_latency_rounds), fifo_b_(cfg.fifo_latency_rounds) {}

  void record(std::uint64_t r, const RoundOutcome& o, BatchSums& sums) {
    const QubitSpec sa = QubitSpec::from_tag_bits(o.tag_a);
    const QubitSpec sb = QubitSpec::from_tag_bits(o.tag_b);
    TallyCounters& t = out_.tallies;
    ++t.rounds;
    if (sa.basis == sb.basis) {
      ++t.cell(sa.basis, sa.intensity, sb.intensity).n_sent;
      if (o.photons_a == 1 && o.photons_b == 1) ++t.single_photon[static_cast<int>(sa.basis)].n_sent;
    } else {
      ++t.mixed_basis.n_sent;
    }
    fifo_a_.push({r, o.tag_a});
    fifo_b_.push({r, o.tag_b});
    if (o.bell != 0) pending_.push_back({r, static_cast<BellState>(o.bell), o.photons_a, o.photons_b});
    while (!pending_.empty() && pending_.front().round + cfg_.fifo_latency_rounds <= r) {
      deliver(pending_.front());
      pending_.pop_front();
    }
    fifo_a_.expire(r);
    fifo_b_.expire(r);

    out_.monitor.same_bin += o.same_bin;
    out_.monitor.same_bin_distinguishable += o.same_bin_dist;
    out_.monitor.singles += o.singles;
    ++out_.monitor.rounds;
    sums.x += o.same_bin;
    sums.y += o.same_bin_dist;
    sums.xx += o.same_bin * o.same_bin;
    sums.yy += o.same_bin_dist * o.same_bin_dist;
    sums.xy += o.same_bin * o.same_bin_dist;
    sums.s += o.singles;
    sums.ss += o.singles * o.singles;
    ++sums.n;
  }

  void finish() {
    while (!pending_.empty()) {
      deliver(pending_.front());
      pending_.pop_front();
    }
    out_.fifo_peak_depth = std::max(fifo_a_.peak_depth(), fifo_b_.peak_depth());
  }

 private:
  void deliver(const Pending& p) {
    const auto ra = fifo_a_.take(p.round);
    const auto rb = fifo_b_.take(p.round);
    if (!ra || !rb) throw std::logic_error("announcement for a round no longer buffered");
    const QubitSpec sa = ra->spec();
    const QubitSpec sb = rb->spec();
    TallyCounters& t = out_.tallies;
    if (cfg_.keep_round_log) {
      out_.round_log.push_back({p.round, ra->bits, rb->bits, static_cast<std::uint8_t>(p.bell)});
    }
    if (sa.basis != sb.basis) {
      if (p.bell == BellState::kPsiMinus) {
        ++t.mixed_basis.n_psi_minus;
      } else {
        ++t.mixed_basis.n_psi_plus;
      }
      return;
    }
    const std::uint8_t bob_bit = sb.bit ^ (bob_flips(p.bell, sb.basis) ? 1 : 0);
    const bool error = sa.bit != bob_bit;
    TallyCell& c = t.cell(sa.basis, sa.intensity, sb.intensity);
    if (p.bell == BellState::kPsiMinus) {
      ++c.n_psi_minus;
      c.n_errors_psi_minus += error ? 1 : 0;
      if (p.photons_a == 1 && p.photons_b == 1) {
        PhotonTally& pt = t.single_photon[static_cast<int>(sa.basis)];
        ++pt.n_announced;
        pt.n_errors += error ? 1 : 0;
      }
      if (cfg_.keep_sifted) {
        out_.sifted.push_back({p.round, sa.basis, sa.intensity, sb.intensity, sa.bit, bob_bit});
      }
    } else {
      ++c.n_psi_plus;
      c.n_errors_psi_plus += error ? 1 : 0;
    }
  }

  const SessionConfig& cfg_;
  SessionResult& out_;
  TagFifo fifo_a_;
  TagFifo fifo_b_;
  std::deque<Pending> pending_;
};

// Physical channels, controller corrections and loop states across batches.
class ChannelControl {
 public:
  explicit ChannelControl(const SessionConfig& cfg)
      : cfg_(cfg),
        phys_a_(cfg.channel_a),
        phys_b_(cfg.channel_b),
        pol_a_(cfg.feedback.polarization),
        pol_b_(cfg.feedback.polarization),
        timing_(cfg.feedback.timing) {
    freq_.params = cfg.feedback.frequency;
  }

  ChannelState effective_a() const {
    ChannelState c = phys_a_;
    c.polarization_unitary = ctrl_a_ * phys_a_.polarization_unitary;
    c.delay_ps += static_cast<double>(timing_.position) * cfg_.feedback.timing.resolution_ps;
    c.detuning_hz += freq_correction_;
    return c;
  }

  ChannelState effective_b() const {
    ChannelState c = phys_b_;
    c.polarization_unitary = ctrl_b_ * phys_b_.polarization_unitary;
    return c;
  }

  void control(std::uint64_t batch, const BatchSums& s) {
    if (!cfg_.feedback.enabled || s.n == 0) return;
    CounterRng rng(cfg_.seed, StreamId::kControl, batch);

    const ChannelState a = effective_a();
    const ChannelState b = effective_b();
    const double beat = a.detuning_hz - b.detuning_hz + cfg_.interference.relative_detuning_hz +
                        cfg_.feedback.beat_noise_hz * rng.normal();
    auto [freq, df] = frequency_lock_step(freq_, beat);
    freq_ = freq;
    freq_correction_ += df.value();

    if (s.y > 0.0) {
      const double ratio = s.x / s.y;
      const double resid = s.xx - 2.0 * ratio * s.xy + ratio * ratio * s.yy;
      const double se = std::sqrt(std::max(resid, 0.0)) / s.y;
      timing_ = timing_control_step(timing_, {ratio, se}).first;
    }

    const double n = static_cast<double>(s.n);
    const double mean = s.s / n;
    const double var = n > 1 ? std::max(0.0, (s.ss - s.s * mean) / (n - 1.0)) : 0.0;
    const RateMeasurement singles{mean, std::sqrt(var / n)};
    // Full base/plus/minus cycles alternate between the two parties.
    if ((batch / 3) % 2 == 0) {
      auto [st, rot] = polarization_control_step(pol_a_, singles);
      pol_a_ = st;
      ctrl_a_ = rot;
    } else {
      auto [st, rot] = polarization_control_step(pol_b_, singles);
      pol_b_ = st;
      ctrl_b_ = rot;
    }
  }

  // Applies the drift increments whose boundaries fall in (begin, end].
  void drift(std::uint64_t begin, std::uint64_t end) {
    const DriftSettings& d = cfg_.drift;
    if (!d.any()) return;
    const DriftProcess pol{DriftKind::kPolarizationWalk, d.polarization_step_rad, d.interval_rounds};
    const DriftProcess del{DriftKind::kDelayWalk, d.delay_step_ps, d.interval_rounds};
    const DriftProcess frq{DriftKind::kFrequencyWalk, d.frequency_step_hz, d.interval_rounds};
    // Increment j happens at the boundary of round j * interval.
    for (std::uint64_t j = begin / d.interval_rounds + 1; j <= end / d.interval_rounds; ++j) {
      CounterRng r0(cfg_.seed, StreamId::kDrift, 4 * j);
      CounterRng r1(cfg_.seed, StreamId::kDrift, 4 * j + 1);
      CounterRng r2(cfg_.seed, StreamId::kDrift, 4 * j + 2);
      CounterRng r3(cfg_.seed, StreamId::kDrift, 4 * j + 3);
      phys_a_ = drift_step(phys_a_, pol, r0);
      phys_b_ = drift_step(phys_b_, pol, r1);
      phys_a_ = drift_step(phys_a_, del, r2);
      phys_a_ = drift_step(phys_a_, frq, r3);
    }
  }

 private:
  const SessionConfig& cfg_;
  ChannelState phys_a_;
  ChannelState phys_b_;
  Unitary2 ctrl_a_ = Unitary2::Identity();
  Unitary2 ctrl_b_ = Unitary2::Identity();
  double freq_correction_ = 0.0;
  FrequencyLoopState freq_;
  PolarizationLoopState pol_a_;
  PolarizationLoopState pol_b_;
  TimingLoopState timing_;
};

BatchPhysics batch_physics(const SessionConfig& cfg, const ChannelState& a, const ChannelState& b,
                           const PhotonTables* tables) {
  BatchPhysics p;
  PulsePair probe;
  probe.early = 1.0;
  const PulsePair pa = propagate(probe, a);
  const PulsePair pb = propagate(probe, b);
  p.setup = interference_setup(pa, pb, cfg.interference);
  p.setup_dist = p.setup;
  p.setup_dist.overlap = 0.0;
  p.amp_a = std::abs(pa.early);
  p.amp_b = std::abs(pb.early);
  p.click_transmission_a = std::norm(pa.early * p.setup.factor_a) * cfg.detector.efficiency;
  p.click_transmission_b = std::norm(pb.early * p.setup.factor_b) * cfg.detector.efficiency;
  p.gate_pass = cfg.detector.gate_pass_probability();
  p.tables = tables;
  return p;
}

SessionResult run(const SessionConfig& cfg, bool parallel) {
  cfg.validate();
  SessionResult out;
  Bookkeeper books(cfg, out);
  ChannelControl control(cfg);

  std::optional<PhotonTables> tables;
  if (cfg.engine != Engine::kCoherent) {
    const BatchPhysics p0 = batch_physics(cfg, control.effective_a(), control.effective_b(), nullptr);
    tables.emplace(cfg.alice, cfg.bob, std::min(1.0, std::abs(p0.setup.overlap)));
  }
  const PhotonTables* table_ptr = tables ? &*tables : nullptr;

  const std::uint64_t begin = cfg.first_round;
  const std::uint64_t end = cfg.first_round + cfg.n_rounds;
  std::vector<RoundOutcome> outcomes;
  for (std::uint64_t start = begin; start < end; start += cfg.batch_rounds) {
    const std::uint64_t stop = std::min(end, start + cfg.batch_rounds);
    const std::uint64_t batch = start / cfg.batch_rounds;
    const ChannelState eff_a = control.effective_a();
    const ChannelState eff_b = control.effective_b();
    const BatchPhysics phys = batch_physics(cfg, eff_a, eff_b, table_ptr);

    BatchSums sums;
    if (parallel) {
      outcomes.resize(stop - start);
      const auto count = static_cast<std::int64_t>(stop - start);
#pragma omp parallel for schedule(static)
      for (std::int64_t i = 0; i < count; ++i) {
        outcomes[i] = simulate_round(cfg, phys, start + static_cast<std::uint64_t>(i));
      }
      for (std::int64_t i = 0; i < count; ++i) books.record(start + i, outcomes[i], sums);
    } else {
      for (std::uint64_t r = start; r < stop; ++r) books.record(r, simulate_round(cfg, phys, r), sums);
    }

    BatchRecord rec;
    rec.batch = batch;
    const InterferenceSetup& su = phys.setup;
    rec.relative_delay_ps = eff_a.delay_ps - eff_b.delay_ps + cfg.interference.relative_delay_ps;
    rec.relative_detuning_hz =
        eff_a.detuning_hz - eff_b.detuning_hz + cfg.interference.relative_detuning_hz;
    rec.transmission_a = std::norm(su.factor_a);
    rec.transmission_b = std::norm(su.factor_b);
    rec.visibility = sums.y > 0.0 ? 1.0 - sums.x / sums.y : 0.0;
    out.batches.push_back(rec);

    control.control(batch, sums);
    control.drift(start, stop);
  }
  books.finish();
  return out;
}

}  // namespace

std::string_view to_string(Engine engine) {
  switch (engine) {
    case Engine::kCoherent:
      return "coherent";
    case Engine::kPhotonNumber:
      return "photon_number";
    case Engine::kSinglePhoton:
      return "single_photon";
  }
  return "?";
}

std::optional<Engine> engine_from_string(std::string_view name) {
  for (Engine e : {Engine::kCoherent, Engine::kPhotonNumber, Engine::kSinglePhoton}) {
    if (to_string(e) == name) return e;
  }
  return std::nullopt;
}

std::optional<BsmAnnouncement> coincidence_logic(const ClickSet& clicks, double window_ps,
                                                 double bin_separation_ps,
                                                 std::uint64_t round_index) {
  if (clicks.count != 2) return std::nullopt;
  const DetectionEvent* early = &clicks.events[0];
  const DetectionEvent* late = &clicks.events[1];
  if (early->bin == late->bin) return std::nullopt;
  if (early->bin == TimeBin::kLate) std::swap(early, late);
  if (std::abs(late->time_ps - early->time_ps - bin_separation_ps) > window_ps) return std::nullopt;
  const BellState s = early->detector == late->detector ? BellState::kPsiPlus : BellState::kPsiMinus;
  return BsmAnnouncement{round_index, s};
}

bool bob_flips(BellState state, Basis basis) {
  return state == BellState::kPsiMinus || basis == Basis::kZ;
}

TallyCell& TallyCell::operator+=(const TallyCell& o) {
  n_sent += o.n_sent;
  n_psi_minus += o.n_psi_minus;
  n_errors_psi_minus += o.n_errors_psi_minus;
  n_psi_plus += o.n_psi_plus;
  n_errors_psi_plus += o.n_errors_psi_plus;
  return *this;
}

bool TallyCell::ordered() const {
  return n_errors_psi_minus <= n_psi_minus && n_errors_psi_plus <= n_psi_plus &&
         n_psi_minus + n_psi_plus <= n_sent;
}

TallyCounters& TallyCounters::merge(const TallyCounters& other) {
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i] += other.cells[i];
  mixed_basis += other.mixed_basis;
  for (std::size_t b = 0; b < 2; ++b) {
    single_photon[b].n_sent += other.single_photon[b].n_sent;
    single_photon[b].n_announced += other.single_photon[b].n_announced;
    single_photon[b].n_errors += other.single_photon[b].n_errors;
  }
  rounds += other.rounds;
  return *this;
}

bool TallyCounters::invariants_hold() const {
  std::uint64_t sent = mixed_basis.n_sent;
  for (const TallyCell& c : cells) {
    if (!c.ordered()) return false;
    sent += c.n_sent;
  }
  if (mixed_basis.n_psi_minus + mixed_basis.n_psi_plus > mixed_basis.n_sent) return false;
  for (const PhotonTally& p : single_photon) {
    if (p.n_errors > p.n_announced || p.n_announced > p.n_sent) return false;
  }
  return sent == rounds;
}

void SessionConfig::validate() const {
  alice.validate();
  bob.validate();
  channel_a.validate();
  channel_b.validate();
  detector.validate();
  interference.validate();
  if (n_rounds < 1) throw std::invalid_argument("session rounds must be >= 1");
  if (batch_rounds < 1) throw std::invalid_argument("session batch_rounds must be >= 1");
  if (first_round > UINT64_MAX - n_rounds) throw std::invalid_argument("round range overflows");
  if (drift.interval_rounds < 1) throw std::invalid_argument("drift interval_rounds must be >= 1");
  if (!(drift.polarization_step_rad >= 0.0 && drift.delay_step_ps >= 0.0 &&
        drift.frequency_step_hz >= 0.0)) {
    throw std::invalid_argument("drift steps must be >= 0");
  }
  if (engine != Engine::kCoherent && (feedback.enabled || drift.any())) {
    throw std::invalid_argument("drift and feedback require the coherent engine");
  }
  if (feedback.enabled && !(feedback.beat_noise_hz >= 0.0)) {
    throw std::invalid_argument("feedback beat_noise_hz must be >= 0");
  }
}

void write_round_log(std::ostream& out, const std::vector<RoundLogRecord>& records) {
  std::array<char, kRoundLogRecordBytes> buf;
  for (const RoundLogRecord& r : records) {
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((r.round_index >> (8 * i)) & 0xff);
    buf[8] = static_cast<char>(r.tag_a);
    buf[9] = static_cast<char>(r.tag_b);
    buf[10] = static_cast<char>(r.bell_code);
    out.write(buf.data(), buf.size());
  }
}

std::vector<RoundLogRecord> read_round_log(std::istream& in) {
  std::vector<RoundLogRecord> out;
  std::array<unsigned char, kRoundLogRecordBytes> buf;
  while (true) {
    in.read(reinterpret_cast<char*>(buf.data()), buf.size());
    const auto got = in.gcount();
    if (got == 0) break;
    if (got != static_cast<std::streamsize>(buf.size())) {
      throw std::runtime_error("round log truncated mid-record");
    }
    RoundLogRecord r;
    for (int i = 0; i < 8; ++i) r.round_index |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    r.tag_a = buf[8];
    r.tag_b = buf[9];
    r.bell_code = buf[10];
    out.push_back(r);
  }
  return out;
}

double MonitorSums::visibility() const {
  return same_bin_distinguishable > 0.0 ? 1.0 - same_bin / same_bin_distinguishable : 0.0;
}

void TagFifo::push(const TagRecord& record) {
  records_.push_back(record);
  peak_ = std::max(peak_, records_.size());
}

void TagFifo::expire(std::uint64_t now) {
  while (!records_.empty() && records_.front().round_index + latency_ <= now) records_.pop_front();
}

std::optional<TagRecord> TagFifo::take(std::uint64_t round) {
  while (!records_.empty() && records_.front().round_index < round) records_.pop_front();
  if (records_.empty() || records_.front().round_index != round) return std::nullopt;
  const TagRecord r = records_.front();
  records_.pop_front();
  return r;
}

SessionResult run_session(const SessionConfig& config) { return run(config, true); }

SessionResult run_session_serial(const SessionConfig& config) { return run(config, false); }

std::array<CellEstimate, 18> estimate_gains(const TallyCounters& tallies, double z) {
  std::array<CellEstimate, 18> out;
  for (Basis basis : {Basis::kZ, Basis::kX}) {
    for (Intensity ia : kIntensities) {
      for (Intensity ib : kIntensities) {
        const TallyCell& c = tallies.cell(basis, ia, ib);
        CellEstimate& e = out[TallyCounters::index(basis, ia, ib)];
        e.basis = basis;
        e.intensity_a = ia;
        e.intensity_b = ib;
        e.n_sent = c.n_sent;
        e.n_announced = c.n_psi_minus;
        e.n_errors = c.n_errors_psi_minus;
        e.gain_missing = c.n_sent == 0;
        e.error_missing = c.n_psi_minus == 0;
        if (!e.gain_missing) {
          const double n = static_cast<double>(c.n_sent);
          e.gain = static_cast<double>(c.n_psi_minus) / n;
          e.error_gain = static_cast<double>(c.n_errors_psi_minus) / n;
          e.gain_interval = wilson_interval(c.n_psi_minus, c.n_sent, z);
          e.error_gain_interval = wilson_interval(c.n_errors_psi_minus, c.n_sent, z);
        }
        if (!e.error_missing) {
          e.error_rate = static_cast<double>(c.n_errors_psi_minus) / static_cast<double>(c.n_psi_minus);
          e.error_interval = wilson_interval(c.n_errors_psi_minus, c.n_psi_minus, z);
        }
      }
    }
  }
  return out;
}

std::array<CellExpectation, 18> expected_cells(const SessionConfig& config, int grid_points) {
  std::array<CellExpectation, 18> out{};
  const auto p_bit = [](const SourceParams& s, int bit) { return bit ? s.p_bit_one : 1.0 - s.p_bit_one; };
  for (Basis basis : {Basis::kZ, Basis::kX}) {
    for (Intensity ia : kIntensities) {
      for (Intensity ib : kIntensities) {
        CellExpectation& e = out[TallyCounters::index(basis, ia, ib)];
        for (int bit_a = 0; bit_a < 2; ++bit_a) {
          for (int bit_b = 0; bit_b < 2; ++bit_b) {
            const double w = p_bit(config.alice, bit_a) * p_bit(config.bob, bit_b);
            if (w == 0.0) continue;
            QubitSpec sa{basis, static_cast<std::uint8_t>(bit_a), ia, 0.0};
            QubitSpec sb{basis, static_cast<std::uint8_t>(bit_b), ib, 0.0};
            const PulsePair pa = propagate(encode(sa, config.alice), config.channel_a);
            const PulsePair pb = propagate(encode(sb, config.bob), config.channel_b);
            const PatternProbabilities pp =
                phase_averaged_patterns(pa, pb, config.interference, config.detector, grid_points);
            const double minus = pp.psi_minus();
            e.gain += w * minus;
            // psi-: Bob flips in both bases, so equal raw bits are errors.
            if (bit_a == bit_b) e.error_gain += w * minus;
            e.psi_plus += w * pp.psi_plus();
          }
        }
      }
    }
  }
  return out;
}

}  // namespace mdiqkd
