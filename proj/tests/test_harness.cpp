#include "cobf/harness/batch.hpp"

#include <catch2/catch.hpp>

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

using namespace cobf;
using namespace cobf::harness;

namespace {

std::filesystem::path data_dir() { return COBF_DATA_DIR; }

std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("cobf_test_harness_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Scenario small(mac::Mode m = mac::Mode::cobf_st) {
  Scenario s;
  s.name = "small";
  s.mode = m;
  s.stas_per_ap = 2;
  s.load = LoadLevel::medium;
  s.num_deployments = 3;
  s.duration = 0.05;
  s.master_seed = 4;
  return s;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("nearest rank percentiles") {
  std::vector<double> x(100);
  for (int i = 0; i < 100; ++i) x[i] = i + 1;
  CHECK(nearest_rank(x, 50) == 50);
  CHECK(nearest_rank(x, 99) == 99);
  CHECK(nearest_rank(x, 100) == 100);
  CHECK(nearest_rank(x, 0.5) == 1);
  const std::vector<double> three = {1.0, 2.0, 3.0};
  CHECK(nearest_rank(three, 50) == 2);
  CHECK(nearest_rank(three, 99) == 3);
  CHECK(nearest_rank(std::vector<double>{7.0}, 99) == 7.0);
  CHECK_THROWS_AS(nearest_rank(std::vector<double>{}, 50), PreconditionError);
  CHECK_THROWS_AS(nearest_rank(three, 0), PreconditionError);
}

TEST_CASE("nearest rank agrees with a counting oracle") {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(1 + trial * 7);
    for (double& v : x) v = u(rng);
    std::sort(x.begin(), x.end());
    for (double q : {1.0, 25.0, 50.0, 90.0, 99.0}) {
      // Smallest sample with at least q% of the sample at or below it.
      double expect = x.back();
      for (double v : x) {
        const auto below = std::count_if(x.begin(), x.end(), [&](double w) { return w <= v; });
        if (100.0 * static_cast<double>(below) >= q * static_cast<double>(x.size())) {
          expect = v;
          break;
        }
      }
      CHECK(nearest_rank(x, q) == expect);
    }
  }
}

TEST_CASE("offered load table") {
  CHECK(offered_load_bps(2, LoadLevel::high) == 177e6);
  CHECK(offered_load_bps(4, LoadLevel::high) == 93e6);
  CHECK(offered_load_bps(6, LoadLevel::high) == 63e6);
  CHECK(offered_load_bps(2, LoadLevel::medium) == 88.5e6);
  CHECK(offered_load_bps(6, LoadLevel::medium) == 31.5e6);
  CHECK(offered_load_bps(4, LoadLevel::full_buffer) == 0.0);
  CHECK_THROWS_AS(offered_load_bps(3, LoadLevel::high), ConfigError);
}

TEST_CASE("JSON scenario parsing") {
  const auto s = parse_scenario(R"({"name": "x", "mode": "legacy40", "stas_per_ap": 4, "load": "medium",
                                    "num_deployments": 7, "duration": 2.5, "master_seed": 99,
                                    "mac": {"cw_min": 32, "frames": {"rts": 24}}})",
                                false);
  CHECK(s.name == "x");
  CHECK(s.mode == mac::Mode::legacy40);
  CHECK(s.stas_per_ap == 4);
  CHECK(s.load == LoadLevel::medium);
  CHECK(s.num_deployments == 7);
  CHECK(s.duration == 2.5);
  CHECK(s.master_seed == 99);
  CHECK(s.mac.cw_min == 32);
  CHECK(s.mac.cw_max == 1024);
  CHECK(s.mac.frames.rts == 24);
  CHECK(s.mac.frames.cts == 14);

  // A round trip through to_json reproduces the scenario.
  const auto again = parse_scenario(nlohmann::json(s).dump(), false);
  CHECK(nlohmann::json(again) == nlohmann::json(s));
}

TEST_CASE("TOML scenario parsing") {
  const auto s = parse_scenario(R"(
name = "t"
mode = "cobf_ae"
profile = "profiles/eta_1_4.json"
stas_per_ap = 6
load = "full_buffer"
duration = 1.0

[mac]
txop_limit = 4e-3
)",
                                true, data_dir());
  CHECK(s.mode == mac::Mode::cobf_ae);
  CHECK(s.load == LoadLevel::full_buffer);
  CHECK(s.mac.txop_limit == 4e-3);
  CHECK(s.profile == (data_dir() / "profiles" / "eta_1_4.json").lexically_normal());
  const auto cfg = s.sim_config();
  CHECK(cfg.full_buffer);
  CHECK(cfg.profile);
}

TEST_CASE("scenario errors") {
  CHECK_THROWS_AS(parse_scenario(R"({"nmae": "typo"})", false), ConfigError);
  CHECK_THROWS_AS(parse_scenario(R"({"mac": {"cwmin": 8}})", false), ConfigError);
  CHECK_THROWS_AS(parse_scenario(R"({"mode": "cobf"})", false), ConfigError);
  CHECK_THROWS_AS(parse_scenario(R"({"load": "low"})", false), ConfigError);
  CHECK_THROWS_AS(parse_scenario(R"({"stas_per_ap": 3})", false), ConfigError);
  CHECK_THROWS_AS(parse_scenario(R"({"mode": "cobf_ae"})", false), ConfigError);
  CHECK_THROWS_AS(parse_scenario(R"({"duration": "long"})", false), ConfigError);
  CHECK_THROWS_AS(parse_scenario("{", false), ConfigError);
  CHECK_THROWS_AS(parse_scenario("name = ", true), ConfigError);
  CHECK_THROWS_AS(load_scenario("/nonexistent/scenario.json"), ConfigError);
  Scenario ae = small(mac::Mode::cobf_ae);
  ae.profile = "/nonexistent/profile.json";
  CHECK_THROWS_AS(ae.sim_config(), ConfigError);
}

TEST_CASE("shipped scenarios load") {
  int n = 0;
  for (const auto& e : std::filesystem::directory_iterator(COBF_SCENARIO_DIR)) {
    const auto s = load_scenario(e.path());
    CHECK_NOTHROW(s.sim_config());
    ++n;
  }
  CHECK(n >= 4);
}

TEST_CASE("deployments place one AP per room and STAs inside") {
  const SceneLayout scene;
  std::set<std::pair<int, int>> pairs;
  for (int i = 0; i < 200; ++i) {
    const auto d = make_deployment(scene, 6, deployment_seed(1, i));
    REQUIRE(d.ap_rooms.size() == 2);
    CHECK(d.ap_rooms[0] != d.ap_rooms[1]);
    pairs.insert({d.ap_rooms[0], d.ap_rooms[1]});
    REQUIRE(d.stas.size() == 12);
    for (std::size_t k = 0; k < d.stas.size(); ++k) {
      const auto& s = d.stas[k];
      CHECK(s.ap.value == (k < 6 ? 0 : 1));
      const int room = d.ap_rooms[static_cast<std::size_t>(s.ap.value)];
      CHECK(scene.room_of(s.position) == room);
      const Vec3 rel = s.position - scene.room_origin(room);
      CHECK(rel.x() >= scene.wall_clearance);
      CHECK(rel.x() <= scene.room_length - scene.wall_clearance);
      CHECK(rel.y() >= scene.wall_clearance);
      CHECK(rel.y() <= scene.room_width - scene.wall_clearance);
      CHECK(rel.z() >= scene.sta_height_min);
      CHECK(rel.z() <= scene.sta_height_max);
    }
  }
  // All 12 ordered room pairs of a 2x2 floor show up.
  CHECK(pairs.size() == 12);
  const auto a = make_deployment(scene, 2, 77);
  const auto b = make_deployment(scene, 2, 77);
  CHECK(a.stas[3].position == b.stas[3].position);
  CHECK(deployment_seed(1, 0) != deployment_seed(1, 1));
  CHECK(deployment_seed(1, 0) != deployment_seed(2, 0));
}

TEST_CASE("summary of hand-built outcomes") {
  Scenario s = small();
  s.duration = 2.0;
  DeploymentOutcome a;
  a.index = 0;
  a.packets = {{0, 0.0, 0.001}, {1, 0.0, 0.003}, {0, 1.0, 1.002}};
  a.delivered_bits = {24000, 12000};
  mac::TxopRecord t;
  t.mode = mac::TxopMode::cobf;
  t.sounding_airtime = 2e-3;
  a.txops = {t, t};
  a.txops[1].sounding_airtime = 0.0;
  a.counters.received = 3;
  DeploymentOutcome b;
  b.index = 1;
  b.packets = {{2, 0.5, 0.504}};
  b.delivered_bits = {12000, 0};
  t.mode = mac::TxopMode::declined;
  t.sounding_airtime = 1e-3;
  b.txops = {t};
  b.counters.received = 1;
  b.counters.dropped = 2;

  const std::vector<DeploymentOutcome> v = {a, b};
  const auto m = summarize(s, v);
  CHECK(m.deployments == 2);
  // Pooled latencies 1, 2, 2, 4 ms.
  CHECK(*m.latency_median_ms == Approx(2.0));
  CHECK(*m.latency_p99_ms == Approx(4.0));
  // (24000 + 12000 + 12000 + 0) bits / 2 s / 4 STAs.
  CHECK(m.mean_sta_throughput_mbps == Approx(48000.0 / 2.0 / 4.0 / 1e6));
  CHECK(m.sounding_overhead_ms == std::vector<double>{2.0, 1.0});
  CHECK(m.mean_sounding_per_txop_ms == Approx(1.0));
  CHECK(m.txop_counts.at("cobf") == 2);
  CHECK(m.txop_counts.at("declined->legacy") == 1);
  CHECK(m.txop_counts.at("legacy") == 0);
  CHECK(m.received == 4);
  CHECK(m.dropped == 2);
  CHECK(*m.per_deployment[0].latency_median_ms == Approx(2.0));
  CHECK(*m.per_deployment[1].latency_p99_ms == Approx(4.0));
  CHECK(m.offered_load_mbps == Approx(88.5));
  CHECK_FALSE(m.saturated);

  const std::vector<DeploymentOutcome> empty_packets = {DeploymentOutcome{}};
  const auto sat = summarize(s, empty_packets);
  CHECK(sat.saturated);
  CHECK_FALSE(sat.latency_p99_ms);
  CHECK(nlohmann::json(sat).at("latency_p99_ms").is_null());
}

TEST_CASE("aggregation does not depend on completion order") {
  const Scenario s = small();
  auto r = run_batch(s, {1, {}});
  std::vector<DeploymentOutcome> shuffled = r.deployments;
  std::reverse(shuffled.begin(), shuffled.end());
  CHECK(nlohmann::json(summarize(s, shuffled)) == nlohmann::json(r.summary));
  const auto threaded = run_batch(s, {3, {}});
  CHECK(nlohmann::json(threaded.summary) == nlohmann::json(r.summary));
}

TEST_CASE("result files and manifest") {
  const Scenario s = small();
  const auto r = run_batch(s);
  const auto dir = scratch("emit");
  const std::string config = nlohmann::json(s).dump();
  emit_results(r, dir / "a", config);
  emit_results(run_batch(s), dir / "b", config);
  emit_results(r, dir / "c", config + " ");

  for (const char* f : {"summary.json", "latency.csv", "txops.csv", "manifest.json"})
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));

  std::size_t txops = 0, packets = 0;
  for (const auto& o : r.deployments) {
    txops += o.txops.size();
    packets += o.packets.size();
  }
  REQUIRE(txops > 0);
  CHECK(count_lines(slurp(dir / "a" / "txops.csv")) == txops + 1);
  CHECK(count_lines(slurp(dir / "a" / "latency.csv")) == packets + 1);

  const auto ma = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  const auto mc = nlohmann::json::parse(slurp(dir / "c" / "manifest.json"));
  CHECK(ma.at("config_hash") == sha256_hex(config));
  CHECK(ma.at("config_hash") != mc.at("config_hash"));
  CHECK(ma.at("files") == mc.at("files"));
  for (const auto& [name, hash] : ma.at("files").items()) CHECK(hash == sha256_hex(slurp(dir / "a" / name)));
  CHECK(ma.at("master_seed") == 4);

  const auto sum = nlohmann::json::parse(slurp(dir / "a" / "summary.json"));
  const auto& p = sum.at("packets");
  CHECK(p.at("generated").get<std::uint64_t>() ==
        p.at("received").get<std::uint64_t>() + p.at("dropped").get<std::uint64_t>() +
            p.at("queued_at_end").get<std::uint64_t>() + p.at("in_flight_at_end").get<std::uint64_t>());
}

TEST_CASE("sha256 known answers") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("full buffer ignores the traffic model") {
  Scenario s = small(mac::Mode::legacy40);
  s.load = LoadLevel::full_buffer;
  s.num_deployments = 1;
  const auto a = run_batch(s);
  s.mean_batch = 3.0;
  const auto b = run_batch(s);
  CHECK(a.summary.mean_sta_throughput_mbps == b.summary.mean_sta_throughput_mbps);
  CHECK(a.summary.mean_sta_throughput_mbps > 10.0);
  CHECK(a.summary.offered_load_mbps == 0.0);
}

TEST_CASE("traces are written per deployment") {
  const Scenario s = small();
  const auto dir = scratch("trace");
  BatchOptions opt;
  opt.trace_dir = dir;
  run_batch(s, opt);
  for (int i = 0; i < s.num_deployments; ++i) {
    std::ifstream is(dir / ("deployment_" + std::to_string(i) + ".ndjson"));
    std::string line;
    REQUIRE(std::getline(is, line));
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("t"));
    CHECK(j.contains("kind"));
  }
}
