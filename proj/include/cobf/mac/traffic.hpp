// Batch Poisson downlink traffic and per-STA packet queues.
#pragma once

#include "cobf/common.hpp"

#include <deque>
#include <optional>
#include <vector>

namespace cobf::mac {

struct Packet {
  std::uint64_t id = 0;
  StaId dest;
  int size_bytes = 1500;
  double t_arr = 0.0;
  std::optional<double> t_rec;
  int retry_count = 0;
};

/// Latency t_rec - t_arr. Throws PreconditionError for packets that were never received.
double packet_latency(const Packet& p);

struct TrafficConfig {
  double load_bps = 0.0;
  double mean_batch = 8.0;
  int payload_bytes = 1500;

  void validate() const;
  double packet_rate() const { return load_bps / (8.0 * payload_bytes); }
  double batch_rate() const { return packet_rate() / mean_batch; }
};

struct Batch {
  double time = 0.0;
  int size = 0;
};

/// Draws batches one at a time: Exp(lambda_b) gaps, sizes 1 + Geometric(1/B) so the mean is B.
class BatchArrivals {
 public:
  BatchArrivals(const TrafficConfig& cfg, std::uint64_t seed, double start = 0.0);
  /// Next batch; nullopt when the load is zero.
  std::optional<Batch> next();

 private:
  TrafficConfig cfg_;
  Rng rng_;
  double t_;
};

/// All batches arriving in [0, horizon).
std::vector<Batch> bpp_generate(const TrafficConfig& cfg, double horizon, std::uint64_t seed);

}  // namespace cobf::mac
