// Discrete-event simulation of two APs running Co-BF or legacy TXOPs over DCF contention.
#pragma once

#include "cobf/channel.hpp"
#include "cobf/csi_codec.hpp"
#include "cobf/json_io.hpp"
#include "cobf/mac/dcf.hpp"
#include "cobf/mac/params.hpp"
#include "cobf/mac/traffic.hpp"
#include "cobf/precoder.hpp"

#include <deque>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cobf::mac {

enum class Mode { cobf_st, cobf_ae, legacy80, legacy40 };
enum class TxopMode { cobf, legacy, declined };

const char* to_string(Mode m);
const char* to_string(TxopMode m);
Mode parse_mode(const std::string& s);

struct TxopRecord {
  ApId owner;
  TxopMode mode = TxopMode::legacy;
  double t_start = 0.0;
  double t_end = 0.0;
  double sounding_airtime = 0.0;
  double data_airtime = 0.0;
  std::uint64_t csi_bits = 0;
  std::vector<StaId> scheduled;
  std::vector<int> mcs;
  std::vector<int> delivered;
  std::vector<int> failed;

  double duration() const { return t_end - t_start; }
};

/// Writes the CSV header / one row. STA lists are ';'-separated.
void write_txop_csv_header(std::ostream& os);
void write_txop_csv_row(std::ostream& os, const TxopRecord& r, int deployment);

struct StaPlacement {
  ApId ap;
  Vec3 position;
};

/// Rooms hosting AP 0 and AP 1 and the STAs of both BSSs (AP 0's STAs first).
struct Deployment {
  std::vector<int> ap_rooms;
  std::vector<StaPlacement> stas;
};

struct SimConfig {
  Mode mode = Mode::cobf_st;
  MacParams mac;
  ChannelConfig channel;
  NoiseConfig noise;
  GivensConfig givens = GivensConfig::conf1();
  /// Required for cobf_ae.
  std::optional<LearnedCompressorProfile> profile;
  TrafficConfig traffic;
  bool full_buffer = false;
  /// Full-buffer queues are topped up to this many packets.
  int full_buffer_level = 1100;
  double duration = 10.0;
  McsTable mcs = McsTable::standard();
  PerModel per;
  double mobility_step = 0.1;
  double direction_period = 2.0;
  /// Re-check packet conservation after every event.
  bool check_conservation = true;

  void validate() const;
};

struct RunCounters {
  std::uint64_t generated = 0;
  std::uint64_t received = 0;
  std::uint64_t dropped = 0;
  std::uint64_t collisions = 0;
  std::uint64_t events = 0;
};

struct DeploymentResult {
  int deployment = 0;
  std::uint64_t seed = 0;
  int stas_per_ap = 0;
  /// Received packets in reception order.
  std::vector<Packet> received;
  std::vector<std::uint64_t> delivered_bits;  // per STA
  std::vector<std::uint64_t> generated_per_sta;
  std::vector<TxopRecord> txops;
  RunCounters counters;
  std::uint64_t queued_at_end = 0;
  /// Packets of a TXOP still in the air at the horizon.
  std::uint64_t inflight_at_end = 0;
};

/// HoL state of a STA with a nonempty queue.
struct HolEntry {
  StaId sta;
  ApId ap;
  double t_hol = 0.0;
};

/// Up to `max_per_bss` STAs per BSS ordered by oldest head-of-line packet, ties to the lowest
/// sta id. BSSs without backlogged STAs are absent.
std::map<ApId, std::vector<StaId>> schedule_stas(std::span<const HolEntry> backlog, std::size_t max_per_bss);

/// Frame-level timing of one sounding exchange. Each round is one NDPA / NDP / BFRP
/// sequence followed by the feedback frames of its STAs, given as report bits per STA.
struct SoundingTimeline {
  double duration = 0.0;             // first frame start to the start of the next frame
  std::vector<double> ndp_offsets;   // per round, from the exchange start
  std::uint64_t total_bits = 0;
  double feedback_airtime = 0.0;     // sum of feedback frame durations
};

SoundingTimeline sounding_timeline(const MacParams& p, bool joint, const std::vector<std::vector<std::uint64_t>>& rounds,
                                   const McsTable& table = McsTable::standard());

/// Time from the start of an RTS to the start of the A-MPDU.
double rts_cts_airtime(const MacParams& p);

class Simulator {
 public:
  Simulator(const SimConfig& cfg, const Deployment& dep, std::uint64_t seed);
  ~Simulator();

  /// Runs until cfg.duration and returns packets, records and counters.
  DeploymentResult run(std::ostream* trace = nullptr);

  // Individual steps, exposed for tests. They advance the simulator's internal state as the
  // event loop would.
  void enqueue(StaId sta, double t_arr, int count = 1);
  TxopRecord run_cobf_txop(ApId coordinating, ApId coordinated, double now);
  TxopRecord run_legacy_txop(ApId ap, double now);
  /// Installs CSI for a link as if it had been sounded at `t`.
  void sound_link_now(LinkId link, double t);
  std::optional<double> csi_timestamp(LinkId link) const;
  /// True channel of a link evolved to `t`.
  const ChannelTensor<double>& channel_at(LinkId link, double t);
  const DcfState& dcf(ApId ap) const;
  DcfState& dcf_mut(ApId ap);
  std::size_t queue_size(StaId sta) const;
  const RunCounters& counters() const;
  std::uint64_t inflight() const;
  int num_stas() const;
  /// SINR terms of the most recent data transmission, per served STA.
  const std::map<StaId, SinrTerms>& last_sinr_terms() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cobf::mac
