#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "mdiqkd/encoding.h"
#include "mdiqkd/feedback.h"
#include "mdiqkd/optics.h"
#include "mdiqkd/stats.h"

namespace mdiqkd {

// How a round's detection pattern is produced.
//  coherent       - field amplitudes through the beamsplitter, per-slot
//                   Poissonian clicks (the physical model).
//  photon_number  - explicit photon numbers per pulse, exact Fock output
//                   statistics; records the emitted photon numbers.
//  single_photon  - as photon_number with every non-vacuum pulse carrying
//                   exactly one photon.
enum class Engine : std::uint8_t { kCoherent, kPhotonNumber, kSinglePhoton };

std::string_view to_string(Engine engine);
std::optional<Engine> engine_from_string(std::string_view name);

enum class BellState : std::uint8_t { kPsiMinus = 1, kPsiPlus = 2 };

// What a party keeps per emitted pulse until Charlie's announcement arrives.
struct TagRecord {
  std::uint64_t round_index = 0;
  std::uint8_t bits = 0;  // QubitSpec::tag_bits(), four bits

  static TagRecord from_spec(std::uint64_t round, const QubitSpec& spec) {
    return {round, spec.tag_bits()};
  }
  QubitSpec spec() const { return QubitSpec::from_tag_bits(bits); }
};

struct BsmAnnouncement {
  std::uint64_t round_index = 0;
  BellState bell_state = BellState::kPsiMinus;
};

// Two clicks in orthogonal time bins, separated by the bin separation within
// the window: different detectors -> psi-, same detector -> psi+. Everything
// else, including more than two clicks, is not announced.
std::optional<BsmAnnouncement> coincidence_logic(const ClickSet& clicks, double window_ps,
                                                 double bin_separation_ps,
                                                 std::uint64_t round_index = 0);

// Bob's post-processing: psi- flips in both bases, psi+ flips in Z only.
bool bob_flips(BellState state, Basis basis);

struct TallyCell {
  std::uint64_t n_sent = 0;
  std::uint64_t n_psi_minus = 0;
  std::uint64_t n_errors_psi_minus = 0;
  std::uint64_t n_psi_plus = 0;
  std::uint64_t n_errors_psi_plus = 0;

  TallyCell& operator+=(const TallyCell& o);
  bool operator==(const TallyCell&) const = default;
  bool ordered() const;
};

// Announced psi- rounds in which both pulses carried exactly one photon.
struct PhotonTally {
  std::uint64_t n_sent = 0;
  std::uint64_t n_announced = 0;
  std::uint64_t n_errors = 0;

  bool operator==(const PhotonTally&) const = default;
};

struct TallyCounters {
  // Same-basis cells indexed by (basis, intensity A, intensity B).
  std::array<TallyCell, 18> cells{};
  // Rounds with different bases: only sent / announced are meaningful.
  TallyCell mixed_basis;
  // Indexed by basis; filled only by the photon-number engines.
  std::array<PhotonTally, 2> single_photon{};
  std::uint64_t rounds = 0;

  static std::size_t index(Basis basis, Intensity a, Intensity b) {
    return static_cast<std::size_t>(basis) * 9 + static_cast<std::size_t>(a) * 3 +
           static_cast<std::size_t>(b);
  }
  TallyCell& cell(Basis basis, Intensity a, Intensity b) { return cells[index(basis, a, b)]; }
  const TallyCell& cell(Basis basis, Intensity a, Intensity b) const {
    return cells[index(basis, a, b)];
  }

  TallyCounters& merge(const TallyCounters& other);
  bool invariants_hold() const;
  bool operator==(const TallyCounters&) const = default;
};

struct DriftSettings {
  double polarization_step_rad = 0.0;  // both channels, per axis
  double delay_step_ps = 0.0;          // channel A
  double frequency_step_hz = 0.0;      // channel A
  std::uint64_t interval_rounds = 8192;

  bool any() const {
    return polarization_step_rad > 0.0 || delay_step_ps > 0.0 || frequency_step_hz > 0.0;
  }
};

struct FeedbackSettings {
  bool enabled = false;
  FrequencyLoopParams frequency;
  double beat_noise_hz = 2e6;
  PolarizationLoopParams polarization;
  TimingLoopParams timing{27.8, 1, 36, 3.0, false};
};

struct SessionConfig {
  SourceParams alice;
  SourceParams bob;
  ChannelState channel_a;
  ChannelState channel_b;
  DetectorModel detector;
  InterferenceContext interference;
  Engine engine = Engine::kCoherent;
  std::uint64_t n_rounds = 1'000'000;
  std::uint64_t first_round = 0;
  std::uint64_t seed = 1;
  // Channel state and controllers change only between batches.
  std::uint64_t batch_rounds = 8192;
  std::uint64_t fifo_latency_rounds = 4000;
  DriftSettings drift;
  FeedbackSettings feedback;
  bool keep_sifted = true;
  bool keep_round_log = false;

  // Throws std::invalid_argument before any round runs.
  void validate() const;
};

struct SiftedBit {
  std::uint64_t round_index = 0;
  Basis basis = Basis::kZ;
  Intensity intensity_a = Intensity::kSignal;
  Intensity intensity_b = Intensity::kSignal;
  std::uint8_t alice_bit = 0;
  std::uint8_t bob_bit = 0;  // after the flip rule

  bool operator==(const SiftedBit&) const = default;
};

// Binary round log: one 11-byte record per announced round, little-endian
// u64 round index, A tag bits, B tag bits, Bell code (1 psi-, 2 psi+).
struct RoundLogRecord {
  std::uint64_t round_index = 0;
  std::uint8_t tag_a = 0;
  std::uint8_t tag_b = 0;
  std::uint8_t bell_code = 0;

  bool operator==(const RoundLogRecord&) const = default;
};

inline constexpr std::size_t kRoundLogRecordBytes = 11;

void write_round_log(std::ostream& out, const std::vector<RoundLogRecord>& records);
// Throws std::runtime_error on a truncated stream.
std::vector<RoundLogRecord> read_round_log(std::istream& in);

// Expected-value monitors accumulated from per-round slot intensities
// (coherent engine only).
struct MonitorSums {
  double same_bin = 0.0;                  // E[same-bin D1/D2 coincidences]
  double same_bin_distinguishable = 0.0;  // same with the overlap forced to 0
  double singles = 0.0;                   // E[registered clicks]
  std::uint64_t rounds = 0;

  // 1 - same_bin / same_bin_distinguishable.
  double visibility() const;
};

struct BatchRecord {
  std::uint64_t batch = 0;
  double relative_delay_ps = 0.0;
  double relative_detuning_hz = 0.0;
  double transmission_a = 1.0;  // behind the input polarizer
  double transmission_b = 1.0;
  double visibility = 0.0;      // from this batch's monitors
};

struct SessionResult {
  TallyCounters tallies;
  std::vector<SiftedBit> sifted;
  std::vector<RoundLogRecord> round_log;
  MonitorSums monitor;
  std::vector<BatchRecord> batches;
  std::size_t fifo_peak_depth = 0;
};

// Delay line of tag records. Records stay for `latency` rounds after their
// own round and are then dropped unless an announcement claimed them.
class TagFifo {
 public:
  explicit TagFifo(std::uint64_t latency) : latency_(latency) {}

  void push(const TagRecord& record);
  // Drops records whose retention ended before `now`.
  void expire(std::uint64_t now);
  // Removes and returns the record for `round`; nullopt if it is absent.
  std::optional<TagRecord> take(std::uint64_t round);

  std::size_t depth() const { return records_.size(); }
  std::size_t peak_depth() const { return peak_; }

 private:
  std::uint64_t latency_;
  std::deque<TagRecord> records_;
  std::size_t peak_ = 0;
};

SessionResult run_session(const SessionConfig& config);
// Single-threaded reference: one round at a time through the same
// per-round physics, no batching of the kernel.
SessionResult run_session_serial(const SessionConfig& config);

struct CellEstimate {
  Basis basis = Basis::kZ;
  Intensity intensity_a = Intensity::kSignal;
  Intensity intensity_b = Intensity::kSignal;
  std::uint64_t n_sent = 0;
  std::uint64_t n_announced = 0;
  std::uint64_t n_errors = 0;
  bool gain_missing = true;   // n_sent == 0
  bool error_missing = true;  // n_announced == 0
  double gain = 0.0;
  Interval gain_interval{0.0, 1.0};
  double error_rate = 0.0;
  Interval error_interval{0.0, 1.0};
  double error_gain = 0.0;  // n_errors / n_sent
  Interval error_gain_interval{0.0, 1.0};
};

// psi- gains and error rates for every same-basis cell, with Wilson
// intervals at z standard deviations.
std::array<CellEstimate, 18> estimate_gains(const TallyCounters& tallies, double z);

// Expected psi- gain and error gain per same-basis cell for the coherent
// model with static channels, averaging bits by their probabilities and the
// relative phase on a midpoint grid.
struct CellExpectation {
  double gain = 0.0;
  double error_gain = 0.0;
  double psi_plus = 0.0;
};

std::array<CellExpectation, 18> expected_cells(const SessionConfig& config, int grid_points = 1024);

}  // namespace mdiqkd
