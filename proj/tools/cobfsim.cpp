// cobfsim: Co-BF MAC simulator command line.
//
//   simulate --scenario <file> --out <dir> [--seed N] [--deployments N] [--trace]
//   report --in <dir>
//   profile-validate <file>
//   export-channels --out <file> [--samples N] [--seed N] [--scenario <file>]
//
// Exit codes: 0 success, 2 configuration error, 3 runtime assertion.

#include "cobf/harness/batch.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

std::string read_text(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw cobf::ConfigError("cannot open " + p.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string ms(const nlohmann::json& v) {
  if (v.is_null()) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v.get<double>());
  return buf;
}

void print_report(const nlohmann::json& s, std::ostream& os) {
  os << "scenario        " << s.at("scenario").get<std::string>() << "\n"
     << "mode            " << s.at("mode").get<std::string>() << "\n"
     << "stas per AP     " << s.at("stas_per_ap").get<int>() << "\n"
     << "load            " << s.at("load").get<std::string>() << "\n"
     << "deployments     " << s.at("deployments").get<int>() << "\n"
     << "latency median  " << ms(s.at("latency_median_ms")) << " ms\n"
     << "latency p99     " << ms(s.at("latency_p99_ms")) << " ms\n"
     << "throughput/STA  " << ms(s.at("mean_sta_throughput_mbps")) << " Mb/s\n"
     << "sounding/TXOP   " << ms(s.at("mean_sounding_per_txop_ms")) << " ms\n";
  for (const auto& [mode, n] : s.at("txop_counts").items()) os << "txops " << mode << ": " << n.get<std::uint64_t>() << "\n";
  const auto& p = s.at("packets");
  os << "packets         generated " << p.at("generated").get<std::uint64_t>() << ", received "
     << p.at("received").get<std::uint64_t>() << ", dropped " << p.at("dropped").get<std::uint64_t>() << ", queued "
     << p.at("queued_at_end").get<std::uint64_t>() << "\n"
     << "collisions      " << s.at("collisions").get<std::uint64_t>() << "\n";
  if (s.at("saturated").get<bool>()) os << "no packet was received (saturated)\n";
}

int export_channels(const std::filesystem::path& out, int samples, std::uint64_t seed,
                    const std::optional<std::filesystem::path>& scenario) {
  cobf::ChannelConfig cfg;
  if (scenario) cfg = cobf::harness::load_scenario(*scenario).channel;
  cfg.validate();
  const cobf::SceneLayout& scene = cfg.scene;
  std::vector<cobf::DatasetSample> data;
  data.reserve(static_cast<std::size_t>(samples));
  cobf::Rng rng(cobf::derive_seed(seed, cobf::stream::kTopology));
  std::uniform_int_distribution<int> room(0, scene.num_rooms() - 1);
  const double c = scene.wall_clearance;
  std::uniform_real_distribution<double> ux(c, scene.room_length - c), uy(c, scene.room_width - c),
      uz(scene.sta_height_min, scene.sta_height_max);
  for (int i = 0; i < samples; ++i) {
    const int sta_room = room(rng);
    const int ap_room = room(rng);
    const double x = ux(rng), y = uy(rng), z = uz(rng);
    const cobf::Vec3 pos = scene.room_origin(sta_room) + cobf::Vec3(x, y, z);
    cobf::DatasetSample s;
    s.channel = cobf::generate_channel<double>(cfg, pos, scene.ap_position(ap_room),
                                               cobf::derive_seed(seed, cobf::stream::kChannel, static_cast<std::uint64_t>(i)));
    s.channel.sta = cobf::StaId{i};
    s.channel.ap = cobf::ApId{ap_room};
    s.channel.profile.reset();
    s.room = sta_room;
    data.push_back(std::move(s));
  }
  cobf::write_channel_dataset(out, data, cfg);
  std::cout << "wrote " << samples << " channels to " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Co-BF MAC simulator"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "run a scenario batch and write result files");
  std::filesystem::path scenario_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> deployments;
  bool trace = false;
  int threads = 0;
  sim->add_option("--scenario", scenario_path, "scenario file (.json or .toml)")->required();
  sim->add_option("--out", out_dir, "output directory")->required();
  sim->add_option("--seed", seed, "override the master seed");
  sim->add_option("--deployments", deployments, "override the number of deployments")->check(CLI::PositiveNumber);
  sim->add_flag("--trace", trace, "write per-deployment NDJSON event traces");
  sim->add_option("--threads", threads, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);

  auto* report = app.add_subcommand("report", "print the summary of a result directory");
  std::filesystem::path in_dir;
  report->add_option("--in", in_dir, "result directory")->required();

  auto* validate = app.add_subcommand("profile-validate", "check a learned compressor profile");
  std::filesystem::path profile_path;
  validate->add_option("file", profile_path, "profile JSON")->required();

  auto* exporter = app.add_subcommand("export-channels", "write a channel dataset for autoencoder training");
  std::filesystem::path export_out;
  int samples = 1000;
  std::uint64_t export_seed = 1;
  std::optional<std::filesystem::path> export_scenario;
  exporter->add_option("--out", export_out, "dataset file")->required();
  exporter->add_option("--samples", samples, "number of channel samples")->check(CLI::PositiveNumber);
  exporter->add_option("--seed", export_seed, "seed");
  exporter->add_option("--scenario", export_scenario, "take the channel configuration from a scenario");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }

  try {
    if (*sim) {
      const std::string text = read_text(scenario_path);
      cobf::harness::Scenario s = cobf::harness::load_scenario(scenario_path);
      if (seed) s.master_seed = *seed;
      if (deployments) s.num_deployments = *deployments;
      cobf::harness::BatchOptions opt;
      opt.threads = threads;
      if (trace) opt.trace_dir = out_dir / "traces";
      const auto result = cobf::harness::run_batch(s, opt);
      std::string overrides;
      if (seed) overrides += "\n--seed " + std::to_string(*seed);
      if (deployments) overrides += "\n--deployments " + std::to_string(*deployments);
      cobf::harness::emit_results(result, out_dir, text + overrides);
      print_report(nlohmann::json(result.summary), std::cout);
    } else if (*report) {
      print_report(nlohmann::json::parse(read_text(in_dir / "summary.json")), std::cout);
    } else if (*validate) {
      const auto p = cobf::validate_profile_file(profile_path);
      std::cout << profile_path.string() << ": ok (eta " << p.eta << ", latent_dim " << p.latent_dim << ")\n";
    } else if (*exporter) {
      return export_channels(export_out, samples, export_seed, export_scenario);
    }
  } catch (const cobf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return 0;
}
