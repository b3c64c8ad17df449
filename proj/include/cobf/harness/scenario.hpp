// Scenario files (JSON or TOML), deployment topology and seed splitting.
#pragma once

#include "cobf/mac/simulator.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace cobf::mac {

void to_json(nlohmann::json& j, const MacParams& p);
void from_json(const nlohmann::json& j, MacParams& p);

}  // namespace cobf::mac

namespace cobf::harness {

enum class LoadLevel { high, medium, full_buffer };

const char* to_string(LoadLevel l);

/// Per-STA offered load in b/s: 177/93/63 Mb/s for 2/4/6 STAs per AP at high load, half at
/// medium, zero for full buffer.
double offered_load_bps(int stas_per_ap, LoadLevel level);

struct Scenario {
  std::string name = "scenario";
  mac::Mode mode = mac::Mode::cobf_st;
  /// 802.11 codebook for cobf_st: "conf1" or "conf2".
  std::string givens = "conf1";
  /// Learned compressor profile for cobf_ae; relative paths resolve against the scenario file.
  std::filesystem::path profile;
  int stas_per_ap = 2;
  LoadLevel load = LoadLevel::high;
  int num_deployments = 50;
  double duration = 10.0;
  std::uint64_t master_seed = 1;
  double mean_batch = 8.0;
  int full_buffer_level = 1100;
  mac::MacParams mac;
  ChannelConfig channel;
  NoiseConfig noise;
  std::filesystem::path mcs_table;

  void validate() const;
  /// Resolves files and builds the simulator configuration. Throws ConfigError.
  mac::SimConfig sim_config() const;
};

void to_json(nlohmann::json& j, const Scenario& s);
void from_json(const nlohmann::json& j, Scenario& s);

/// Reads a .json or .toml scenario; relative file references are made absolute.
Scenario load_scenario(const std::filesystem::path& path);
/// Parses scenario text; `toml` selects the format, `base` anchors relative paths.
Scenario parse_scenario(const std::string& text, bool toml, const std::filesystem::path& base = {});

/// Seed of deployment `index` derived from the master seed.
std::uint64_t deployment_seed(std::uint64_t master, int index);

/// Two of the scene's rooms chosen uniformly, one AP each, and `stas_per_ap` STAs placed
/// uniformly in each room away from the walls at a random height.
mac::Deployment make_deployment(const SceneLayout& scene, int stas_per_ap, std::uint64_t seed);

}  // namespace cobf::harness
