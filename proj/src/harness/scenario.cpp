#include "cobf/harness/scenario.hpp"

#include <toml.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace cobf::mac {

using json_detail::read;
using json_detail::reject_unknown;

void to_json(nlohmann::json& j, const MacParams& p) {
  const FrameSizes& f = p.frames;
  j = {{"txop_limit", p.txop_limit},
       {"cw_min", p.cw_min},
       {"cw_max", p.cw_max},
       {"payload_bytes", p.payload_bytes},
       {"mac_header_bits", p.mac_header_bits},
       {"mpdu_delimiter_bits", p.mpdu_delimiter_bits},
       {"service_bits", p.service_bits},
       {"tail_bits", p.tail_bits},
       {"uhr_preamble", p.uhr_preamble},
       {"legacy_preamble", p.legacy_preamble},
       {"legacy_rate", p.legacy_rate},
       {"sifs", p.sifs},
       {"difs", p.difs},
       {"slot", p.slot},
       {"csi_max_age", p.csi_max_age},
       {"subcarrier_spacing", p.subcarrier_spacing},
       {"guard_interval", p.guard_interval},
       {"ltf_duration", p.ltf_duration},
       {"n_ltf", p.n_ltf},
       {"retry_limit", p.retry_limit},
       {"max_stas_per_bss", p.max_stas_per_bss},
       {"feedback_mcs", p.feedback_mcs},
       {"feedback_data_subcarriers", p.feedback_data_subcarriers},
       {"data_subcarriers_80", p.data_subcarriers_80},
       {"data_subcarriers_40", p.data_subcarriers_40},
       {"frames",
        {{"version", f.version},
         {"rts", f.rts},
         {"cts", f.cts},
         {"block_ack", f.block_ack},
         {"cobf_invite", f.cobf_invite},
         {"cobf_response", f.cobf_response},
         {"sounding_invite", f.sounding_invite},
         {"sounding_response", f.sounding_response},
         {"ndpa_base", f.ndpa_base},
         {"ndpa_per_sta", f.ndpa_per_sta},
         {"bfrp_base", f.bfrp_base},
         {"bfrp_per_sta", f.bfrp_per_sta},
         {"trigger_base", f.trigger_base},
         {"trigger_per_sta", f.trigger_per_sta}}}};
}

void from_json(const nlohmann::json& j, MacParams& p) {
  reject_unknown(j,
                 {"txop_limit", "cw_min", "cw_max", "payload_bytes", "mac_header_bits", "mpdu_delimiter_bits",
                  "service_bits", "tail_bits", "uhr_preamble", "legacy_preamble", "legacy_rate", "sifs", "difs", "slot",
                  "csi_max_age", "subcarrier_spacing", "guard_interval", "ltf_duration", "n_ltf", "retry_limit",
                  "max_stas_per_bss", "feedback_mcs", "feedback_data_subcarriers", "data_subcarriers_80",
                  "data_subcarriers_40", "frames"},
                 "mac");
  read(j, "txop_limit", p.txop_limit);
  read(j, "cw_min", p.cw_min);
  read(j, "cw_max", p.cw_max);
  read(j, "payload_bytes", p.payload_bytes);
  read(j, "mac_header_bits", p.mac_header_bits);
  read(j, "mpdu_delimiter_bits", p.mpdu_delimiter_bits);
  read(j, "service_bits", p.service_bits);
  read(j, "tail_bits", p.tail_bits);
  read(j, "uhr_preamble", p.uhr_preamble);
  read(j, "legacy_preamble", p.legacy_preamble);
  read(j, "legacy_rate", p.legacy_rate);
  read(j, "sifs", p.sifs);
  read(j, "difs", p.difs);
  read(j, "slot", p.slot);
  read(j, "csi_max_age", p.csi_max_age);
  read(j, "subcarrier_spacing", p.subcarrier_spacing);
  read(j, "guard_interval", p.guard_interval);
  read(j, "ltf_duration", p.ltf_duration);
  read(j, "n_ltf", p.n_ltf);
  read(j, "retry_limit", p.retry_limit);
  read(j, "max_stas_per_bss", p.max_stas_per_bss);
  read(j, "feedback_mcs", p.feedback_mcs);
  read(j, "feedback_data_subcarriers", p.feedback_data_subcarriers);
  read(j, "data_subcarriers_80", p.data_subcarriers_80);
  read(j, "data_subcarriers_40", p.data_subcarriers_40);
  if (const auto it = j.find("frames"); it != j.end()) {
    const auto& fj = *it;
    FrameSizes& f = p.frames;
    reject_unknown(fj,
                   {"version", "rts", "cts", "block_ack", "cobf_invite", "cobf_response", "sounding_invite",
                    "sounding_response", "ndpa_base", "ndpa_per_sta", "bfrp_base", "bfrp_per_sta", "trigger_base",
                    "trigger_per_sta"},
                   "mac.frames");
    read(fj, "version", f.version);
    read(fj, "rts", f.rts);
    read(fj, "cts", f.cts);
    read(fj, "block_ack", f.block_ack);
    read(fj, "cobf_invite", f.cobf_invite);
    read(fj, "cobf_response", f.cobf_response);
    read(fj, "sounding_invite", f.sounding_invite);
    read(fj, "sounding_response", f.sounding_response);
    read(fj, "ndpa_base", f.ndpa_base);
    read(fj, "ndpa_per_sta", f.ndpa_per_sta);
    read(fj, "bfrp_base", f.bfrp_base);
    read(fj, "bfrp_per_sta", f.bfrp_per_sta);
    read(fj, "trigger_base", f.trigger_base);
    read(fj, "trigger_per_sta", f.trigger_per_sta);
  }
}

}  // namespace cobf::mac

namespace cobf::harness {

using json_detail::read;
using json_detail::reject_unknown;

const char* to_string(LoadLevel l) {
  switch (l) {
    case LoadLevel::high: return "high";
    case LoadLevel::medium: return "medium";
    case LoadLevel::full_buffer: return "full_buffer";
  }
  return "unknown";
}

namespace {

LoadLevel parse_load(const std::string& s) {
  for (LoadLevel l : {LoadLevel::high, LoadLevel::medium, LoadLevel::full_buffer})
    if (s == to_string(l)) return l;
  throw ConfigError("unknown load level '" + s + "'");
}

nlohmann::json toml_to_json(const toml::node& n) {
  if (const auto* t = n.as_table()) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : *t) j[std::string(k.str())] = toml_to_json(v);
    return j;
  }
  if (const auto* a = n.as_array()) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& v : *a) j.push_back(toml_to_json(v));
    return j;
  }
  if (const auto* v = n.as_string()) return v->get();
  if (const auto* v = n.as_integer()) return v->get();
  if (const auto* v = n.as_floating_point()) return v->get();
  if (const auto* v = n.as_boolean()) return v->get();
  throw ConfigError("scenario: unsupported TOML value type");
}

}  // namespace

double offered_load_bps(int stas_per_ap, LoadLevel level) {
  if (level == LoadLevel::full_buffer) return 0.0;
  double high = 0.0;
  switch (stas_per_ap) {
    case 2: high = 177e6; break;
    case 4: high = 93e6; break;
    case 6: high = 63e6; break;
    default: throw ConfigError("load table covers 2, 4 or 6 STAs per AP");
  }
  return level == LoadLevel::high ? high : high / 2.0;
}

void Scenario::validate() const {
  if (stas_per_ap != 2 && stas_per_ap != 4 && stas_per_ap != 6)
    throw ConfigError("scenario: stas_per_ap must be 2, 4 or 6");
  if (num_deployments < 1) throw ConfigError("scenario: num_deployments must be positive");
  if (!(duration > 0.0)) throw ConfigError("scenario: duration must be positive");
  if (!(mean_batch >= 1.0)) throw ConfigError("scenario: mean_batch must be at least 1");
  if (givens != "conf1" && givens != "conf2") throw ConfigError("scenario: givens must be conf1 or conf2");
  if (mode == mac::Mode::cobf_ae && profile.empty()) throw ConfigError("scenario: cobf_ae needs a profile path");
  if (channel.scene.num_rooms() < 2) throw ConfigError("scenario: the scene needs at least two rooms");
  mac.validate();
  channel.validate();
}

mac::SimConfig Scenario::sim_config() const {
  validate();
  mac::SimConfig c;
  c.mode = mode;
  c.mac = mac;
  c.channel = channel;
  c.noise = noise;
  c.givens = givens == "conf2" ? GivensConfig::conf2() : GivensConfig::conf1();
  if (mode == mac::Mode::cobf_ae) c.profile = validate_profile_file(profile);
  c.traffic.load_bps = offered_load_bps(stas_per_ap, load);
  c.traffic.mean_batch = mean_batch;
  c.traffic.payload_bytes = mac.payload_bytes;
  c.full_buffer = load == LoadLevel::full_buffer;
  c.full_buffer_level = full_buffer_level;
  c.duration = duration;
  if (!mcs_table.empty()) c.mcs = McsTable::load(mcs_table);
  c.validate();
  return c;
}

void to_json(nlohmann::json& j, const Scenario& s) {
  j = {{"name", s.name},
       {"mode", mac::to_string(s.mode)},
       {"givens", s.givens},
       {"profile", s.profile.string()},
       {"stas_per_ap", s.stas_per_ap},
       {"load", to_string(s.load)},
       {"num_deployments", s.num_deployments},
       {"duration", s.duration},
       {"master_seed", s.master_seed},
       {"mean_batch", s.mean_batch},
       {"full_buffer_level", s.full_buffer_level},
       {"mac", s.mac},
       {"channel", s.channel},
       {"noise", s.noise},
       {"mcs_table", s.mcs_table.string()}};
}

void from_json(const nlohmann::json& j, Scenario& s) {
  reject_unknown(j,
                 {"name", "mode", "givens", "profile", "stas_per_ap", "load", "num_deployments", "duration",
                  "master_seed", "mean_batch", "full_buffer_level", "mac", "channel", "noise", "mcs_table"},
                 "scenario");
  read(j, "name", s.name);
  if (const auto it = j.find("mode"); it != j.end()) s.mode = mac::parse_mode(it->get<std::string>());
  read(j, "givens", s.givens);
  if (const auto it = j.find("profile"); it != j.end()) s.profile = it->get<std::string>();
  read(j, "stas_per_ap", s.stas_per_ap);
  if (const auto it = j.find("load"); it != j.end()) s.load = parse_load(it->get<std::string>());
  read(j, "num_deployments", s.num_deployments);
  read(j, "duration", s.duration);
  read(j, "master_seed", s.master_seed);
  read(j, "mean_batch", s.mean_batch);
  read(j, "full_buffer_level", s.full_buffer_level);
  read(j, "mac", s.mac);
  read(j, "channel", s.channel);
  read(j, "noise", s.noise);
  if (const auto it = j.find("mcs_table"); it != j.end()) s.mcs_table = it->get<std::string>();
}

Scenario parse_scenario(const std::string& text, bool toml, const std::filesystem::path& base) {
  Scenario s;
  try {
    nlohmann::json j;
    if (toml) {
      j = toml_to_json(toml::parse(text));
    } else {
      j = nlohmann::json::parse(text);
    }
    s = j.get<Scenario>();
  } catch (const toml::parse_error& e) {
    throw ConfigError(std::string("scenario TOML: ") + std::string(e.description()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  for (auto* p : {&s.profile, &s.mcs_table})
    if (!p->empty() && p->is_relative() && !base.empty()) *p = (base / *p).lexically_normal();
  s.validate();
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open scenario " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  const bool toml = path.extension() == ".toml";
  return parse_scenario(ss.str(), toml, std::filesystem::absolute(path).parent_path());
}

std::uint64_t deployment_seed(std::uint64_t master, int index) {
  return derive_seed(master, stream::kDeployment, static_cast<std::uint64_t>(index));
}

mac::Deployment make_deployment(const SceneLayout& scene, int stas_per_ap, std::uint64_t seed) {
  scene.validate();
  if (scene.num_rooms() < 2) throw PreconditionError("make_deployment: need at least two rooms");
  Rng rng(derive_seed(seed, stream::kTopology));
  std::vector<int> rooms(static_cast<std::size_t>(scene.num_rooms()));
  std::iota(rooms.begin(), rooms.end(), 0);
  // Partial Fisher-Yates with explicit draws; std::shuffle's algorithm is unspecified.
  for (int i = 0; i < 2; ++i) {
    const int j = std::uniform_int_distribution<int>(i, scene.num_rooms() - 1)(rng);
    std::swap(rooms[i], rooms[j]);
  }
  mac::Deployment d;
  d.ap_rooms = {rooms[0], rooms[1]};
  const double c = scene.wall_clearance;
  std::uniform_real_distribution<double> ux(c, scene.room_length - c);
  std::uniform_real_distribution<double> uy(c, scene.room_width - c);
  std::uniform_real_distribution<double> uz(scene.sta_height_min, scene.sta_height_max);
  for (int a = 0; a < 2; ++a)
    for (int i = 0; i < stas_per_ap; ++i) {
      const double x = ux(rng);
      const double y = uy(rng);
      const double z = uz(rng);
      d.stas.push_back({ApId{a}, scene.room_origin(d.ap_rooms[a]) + Vec3(x, y, z)});
    }
  return d;
}

}  // namespace cobf::harness
