// Seeded batch execution, metric aggregation and result files.
#pragma once

#include "cobf/harness/scenario.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cobf::harness {

/// A received packet reduced to what the result files need.
struct PacketRow {
  int sta = 0;
  double t_arr = 0.0;
  double t_rec = 0.0;
};

struct DeploymentOutcome {
  int index = 0;
  std::uint64_t seed = 0;
  std::vector<PacketRow> packets;
  std::vector<mac::TxopRecord> txops;
  std::vector<std::uint64_t> delivered_bits;
  std::vector<std::uint64_t> generated;
  mac::RunCounters counters;
  std::uint64_t queued_at_end = 0;
  std::uint64_t inflight_at_end = 0;
};

struct DeploymentSummary {
  int index = 0;
  std::uint64_t seed = 0;
  std::optional<double> latency_median_ms;
  std::optional<double> latency_p99_ms;
  double mean_sta_throughput_mbps = 0.0;
  double mean_sounding_ms = 0.0;
  std::uint64_t received = 0;
  std::uint64_t dropped = 0;
};

struct MetricsSummary {
  std::string scenario;
  std::string mode;
  std::string load;
  int stas_per_ap = 0;
  int deployments = 0;
  double duration = 0.0;
  double offered_load_mbps = 0.0;
  /// Set when no packet was received; latency fields are then unset.
  bool saturated = false;
  std::optional<double> latency_median_ms;
  std::optional<double> latency_p99_ms;
  double mean_sta_throughput_mbps = 0.0;
  /// Sounding airtime of every TXOP that sounded, in ms.
  std::vector<double> sounding_overhead_ms;
  double mean_sounding_per_txop_ms = 0.0;
  std::map<std::string, std::uint64_t> txop_counts;
  std::uint64_t generated = 0;
  std::uint64_t received = 0;
  std::uint64_t dropped = 0;
  std::uint64_t queued_at_end = 0;
  std::uint64_t inflight_at_end = 0;
  std::uint64_t collisions = 0;
  std::vector<DeploymentSummary> per_deployment;
};

struct BatchResult {
  Scenario scenario;
  std::vector<DeploymentOutcome> deployments;  // sorted by index
  MetricsSummary summary;
};

/// Nearest-rank percentile (0 < q <= 100) of an ascending-sorted sample.
double nearest_rank(std::span<const double> sorted, double q);

struct BatchOptions {
  /// Worker threads; 0 picks the hardware concurrency.
  int threads = 0;
  /// Writes deployment_<i>.ndjson event traces here when set.
  std::optional<std::filesystem::path> trace_dir;
};

DeploymentOutcome run_deployment(const Scenario& s, const mac::SimConfig& cfg, int index,
                                 std::ostream* trace = nullptr);

/// Runs every deployment and folds the outcomes in deployment order.
BatchResult run_batch(const Scenario& s, const BatchOptions& opt = {});

MetricsSummary summarize(const Scenario& s, std::span<const DeploymentOutcome> outcomes);

void to_json(nlohmann::json& j, const MetricsSummary& m);

/// Writes summary.json, latency.csv, txops.csv and manifest.json into `dir`. `config_text`
/// is the scenario file content hashed into the manifest.
void emit_results(const BatchResult& r, const std::filesystem::path& dir, const std::string& config_text);

std::string sha256_hex(const std::string& data);

}  // namespace cobf::harness
