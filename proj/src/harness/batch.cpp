#include "cobf/harness/batch.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace cobf::harness {

double nearest_rank(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw PreconditionError("nearest_rank: empty sample");
  if (!(q > 0.0 && q <= 100.0)) throw PreconditionError("nearest_rank: q must be in (0, 100]");
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

DeploymentOutcome run_deployment(const Scenario& s, const mac::SimConfig& cfg, int index, std::ostream* trace) {
  const std::uint64_t seed = deployment_seed(s.master_seed, index);
  const mac::Deployment dep = make_deployment(cfg.channel.scene, s.stas_per_ap, seed);
  mac::Simulator sim(cfg, dep, seed);
  mac::DeploymentResult r = sim.run(trace);
  DeploymentOutcome o;
  o.index = index;
  o.seed = seed;
  o.packets.reserve(r.received.size());
  for (const mac::Packet& p : r.received) o.packets.push_back({p.dest.value, p.t_arr, *p.t_rec});
  o.txops = std::move(r.txops);
  o.delivered_bits = std::move(r.delivered_bits);
  o.generated = std::move(r.generated_per_sta);
  o.counters = r.counters;
  o.queued_at_end = r.queued_at_end;
  o.inflight_at_end = r.inflight_at_end;
  return o;
}

BatchResult run_batch(const Scenario& s, const BatchOptions& opt) {
  const mac::SimConfig cfg = s.sim_config();
  const int n = s.num_deployments;
  int threads = opt.threads > 0 ? opt.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, n);
  if (opt.trace_dir) std::filesystem::create_directories(*opt.trace_dir);

  BatchResult out;
  out.scenario = s;
  out.deployments.resize(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        if (opt.trace_dir) {
          std::ofstream os(*opt.trace_dir / ("deployment_" + std::to_string(i) + ".ndjson"), std::ios::binary);
          out.deployments[static_cast<std::size_t>(i)] = run_deployment(s, cfg, i, &os);
        } else {
          out.deployments[static_cast<std::size_t>(i)] = run_deployment(s, cfg, i);
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  out.summary = summarize(s, out.deployments);
  return out;
}

namespace {

std::vector<double> sorted_latencies_ms(const std::vector<PacketRow>& packets) {
  std::vector<double> l;
  l.reserve(packets.size());
  for (const PacketRow& p : packets) l.push_back((p.t_rec - p.t_arr) * 1e3);
  std::sort(l.begin(), l.end());
  return l;
}

}  // namespace

MetricsSummary summarize(const Scenario& s, std::span<const DeploymentOutcome> outcomes) {
  std::vector<const DeploymentOutcome*> order;
  for (const auto& o : outcomes) order.push_back(&o);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->index < b->index; });

  MetricsSummary m;
  m.scenario = s.name;
  m.mode = mac::to_string(s.mode);
  m.load = to_string(s.load);
  m.stas_per_ap = s.stas_per_ap;
  m.deployments = static_cast<int>(order.size());
  m.duration = s.duration;
  m.offered_load_mbps = offered_load_bps(s.stas_per_ap, s.load) / 1e6;
  for (const char* mode : {"cobf", "legacy", "declined->legacy"}) m.txop_counts[mode] = 0;

  std::vector<double> pooled;
  double throughput_sum = 0.0;
  std::size_t sta_count = 0;
  double sounding_sum = 0.0;
  std::size_t txop_total = 0;
  for (const DeploymentOutcome* o : order) {
    DeploymentSummary d;
    d.index = o->index;
    d.seed = o->seed;
    const auto lat = sorted_latencies_ms(o->packets);
    if (!lat.empty()) {
      d.latency_median_ms = nearest_rank(lat, 50.0);
      d.latency_p99_ms = nearest_rank(lat, 99.0);
    }
    pooled.insert(pooled.end(), lat.begin(), lat.end());
    double dep_tp = 0.0;
    for (std::uint64_t bits : o->delivered_bits) dep_tp += static_cast<double>(bits) / s.duration / 1e6;
    if (!o->delivered_bits.empty()) d.mean_sta_throughput_mbps = dep_tp / static_cast<double>(o->delivered_bits.size());
    throughput_sum += dep_tp;
    sta_count += o->delivered_bits.size();
    double dep_sounding = 0.0;
    for (const mac::TxopRecord& r : o->txops) {
      ++m.txop_counts[mac::to_string(r.mode)];
      if (r.sounding_airtime > 0.0) m.sounding_overhead_ms.push_back(r.sounding_airtime * 1e3);
      dep_sounding += r.sounding_airtime * 1e3;
    }
    if (!o->txops.empty()) d.mean_sounding_ms = dep_sounding / static_cast<double>(o->txops.size());
    sounding_sum += dep_sounding;
    txop_total += o->txops.size();
    d.received = o->counters.received;
    d.dropped = o->counters.dropped;
    m.generated += o->counters.generated;
    m.received += o->counters.received;
    m.dropped += o->counters.dropped;
    m.collisions += o->counters.collisions;
    m.queued_at_end += o->queued_at_end;
    m.inflight_at_end += o->inflight_at_end;
    m.per_deployment.push_back(d);
  }
  std::sort(pooled.begin(), pooled.end());
  if (pooled.empty()) {
    m.saturated = true;
  } else {
    m.latency_median_ms = nearest_rank(pooled, 50.0);
    m.latency_p99_ms = nearest_rank(pooled, 99.0);
  }
  if (sta_count) m.mean_sta_throughput_mbps = throughput_sum / static_cast<double>(sta_count);
  if (txop_total) m.mean_sounding_per_txop_ms = sounding_sum / static_cast<double>(txop_total);
  return m;
}

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

void to_json(nlohmann::json& j, const MetricsSummary& m) {
  nlohmann::json per = nlohmann::json::array();
  for (const DeploymentSummary& d : m.per_deployment)
    per.push_back({{"index", d.index},
                   {"seed", d.seed},
                   {"latency_median_ms", opt(d.latency_median_ms)},
                   {"latency_p99_ms", opt(d.latency_p99_ms)},
                   {"mean_sta_throughput_mbps", d.mean_sta_throughput_mbps},
                   {"mean_sounding_ms", d.mean_sounding_ms},
                   {"received", d.received},
                   {"dropped", d.dropped}});
  j = {{"scenario", m.scenario},
       {"mode", m.mode},
       {"load", m.load},
       {"stas_per_ap", m.stas_per_ap},
       {"deployments", m.deployments},
       {"duration_s", m.duration},
       {"offered_load_mbps", m.offered_load_mbps},
       {"saturated", m.saturated},
       {"latency_median_ms", opt(m.latency_median_ms)},
       {"latency_p99_ms", opt(m.latency_p99_ms)},
       {"mean_sta_throughput_mbps", m.mean_sta_throughput_mbps},
       {"mean_sounding_per_txop_ms", m.mean_sounding_per_txop_ms},
       {"sounding_overhead_ms", m.sounding_overhead_ms},
       {"txop_counts", m.txop_counts},
       {"packets", {{"generated", m.generated},
                    {"received", m.received},
                    {"dropped", m.dropped},
                    {"queued_at_end", m.queued_at_end},
                    {"in_flight_at_end", m.inflight_at_end}}},
       {"collisions", m.collisions},
       {"per_deployment", per}};
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << content;
  if (!os) throw Error("write failed: " + path.string());
}

std::string g9(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

}  // namespace

void emit_results(const BatchResult& r, const std::filesystem::path& dir, const std::string& config_text) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());

  std::map<std::string, std::string> files;
  files["summary.json"] = nlohmann::json(r.summary).dump(2) + "\n";

  std::ostringstream lat;
  lat << "deployment,sta,t_arr,t_rec,latency_ms\n";
  for (const DeploymentOutcome& o : r.deployments)
    for (const PacketRow& p : o.packets)
      lat << o.index << ',' << p.sta << ',' << g9(p.t_arr) << ',' << g9(p.t_rec) << ','
          << g9((p.t_rec - p.t_arr) * 1e3) << '\n';
  files["latency.csv"] = lat.str();

  std::ostringstream tx;
  mac::write_txop_csv_header(tx);
  for (const DeploymentOutcome& o : r.deployments)
    for (const mac::TxopRecord& rec : o.txops) mac::write_txop_csv_row(tx, rec, o.index);
  files["txops.csv"] = tx.str();

  nlohmann::json manifest = {{"tool", "cobfsim"},
                             {"version", "1.0.0"},
                             {"config_hash", sha256_hex(config_text)},
                             {"resolved_config_hash", sha256_hex(nlohmann::json(r.scenario).dump())},
                             {"master_seed", r.scenario.master_seed},
                             {"deployments", r.scenario.num_deployments},
                             {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                           "." + std::to_string(EIGEN_MINOR_VERSION)},
                             {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                                   std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                   std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
  nlohmann::json hashes = nlohmann::json::object();
  for (const auto& [name, content] : files) hashes[name] = sha256_hex(content);
  manifest["files"] = hashes;
  files["manifest.json"] = manifest.dump(2) + "\n";

  for (const auto& [name, content] : files) write_file(dir / name, content);
}

}  // namespace cobf::harness
