#include "cobf/mac/traffic.hpp"

namespace cobf::mac {

double packet_latency(const Packet& p) {
  if (!p.t_rec) throw PreconditionError("packet_latency: packet was not received");
  return *p.t_rec - p.t_arr;
}

void TrafficConfig::validate() const {
  if (!(load_bps >= 0.0)) throw ConfigError("traffic: load must be nonnegative");
  if (!(mean_batch >= 1.0)) throw ConfigError("traffic: mean batch size must be at least 1");
  if (payload_bytes < 1) throw ConfigError("traffic: payload must be positive");
}

BatchArrivals::BatchArrivals(const TrafficConfig& cfg, std::uint64_t seed, double start)
    : cfg_(cfg), rng_(seed), t_(start) {
  cfg_.validate();
}

std::optional<Batch> BatchArrivals::next() {
  if (cfg_.load_bps == 0.0) return std::nullopt;
  t_ += std::exponential_distribution<double>(cfg_.batch_rate())(rng_);
  int size = 1;
  if (cfg_.mean_batch > 1.0) size += std::geometric_distribution<int>(1.0 / cfg_.mean_batch)(rng_);
  return Batch{t_, size};
}

std::vector<Batch> bpp_generate(const TrafficConfig& cfg, double horizon, std::uint64_t seed) {
  if (!(horizon > 0.0)) throw PreconditionError("bpp_generate: horizon must be positive");
  BatchArrivals gen(cfg, seed);
  std::vector<Batch> out;
  for (auto b = gen.next(); b && b->time < horizon; b = gen.next()) out.push_back(*b);
  return out;
}

}  // namespace cobf::mac
