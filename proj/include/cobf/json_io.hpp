// JSON (de)serialization of configuration and interchange types. Readers accept partial
// objects: absent keys keep their defaults, unknown keys are rejected.
#pragma once

#include "cobf/channel.hpp"
#include "cobf/csi_codec.hpp"

#include <nlohmann/json.hpp>

#include <initializer_list>
#include <string>

namespace cobf {

namespace json_detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError(std::string(what) + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& field) {
  if (const auto it = j.find(key); it != j.end()) it->get_to(field);
}

}  // namespace json_detail

inline void to_json(nlohmann::json& j, const SceneLayout& s) {
  j = {{"room_length", s.room_length},       {"room_width", s.room_width},         {"room_height", s.room_height},
       {"corridor_width", s.corridor_width}, {"rooms_x", s.rooms_x},               {"rooms_y", s.rooms_y},
       {"wall_clearance", s.wall_clearance}, {"sta_height_min", s.sta_height_min}, {"sta_height_max", s.sta_height_max}};
}

inline void from_json(const nlohmann::json& j, SceneLayout& s) {
  json_detail::reject_unknown(j,
                              {"room_length", "room_width", "room_height", "corridor_width", "rooms_x", "rooms_y",
                               "wall_clearance", "sta_height_min", "sta_height_max"},
                              "scene");
  json_detail::read(j, "room_length", s.room_length);
  json_detail::read(j, "room_width", s.room_width);
  json_detail::read(j, "room_height", s.room_height);
  json_detail::read(j, "corridor_width", s.corridor_width);
  json_detail::read(j, "rooms_x", s.rooms_x);
  json_detail::read(j, "rooms_y", s.rooms_y);
  json_detail::read(j, "wall_clearance", s.wall_clearance);
  json_detail::read(j, "sta_height_min", s.sta_height_min);
  json_detail::read(j, "sta_height_max", s.sta_height_max);
}

inline void to_json(nlohmann::json& j, const ChannelConfig& c) {
  j = {{"n_sc", c.n_sc},
       {"n_t", c.n_t},
       {"array_rows", c.array_rows},
       {"carrier_frequency", c.carrier_frequency},
       {"bandwidth", c.bandwidth},
       {"subcarrier_spacing", c.subcarrier_spacing},
       {"num_clusters", c.num_clusters},
       {"delay_spread", c.delay_spread},
       {"rician_k_db", c.rician_k_db},
       {"pathloss_exponent", c.pathloss_exponent},
       {"reference_loss_db", c.reference_loss_db},
       {"wall_loss_db", c.wall_loss_db},
       {"sta_speed", c.sta_speed},
       {"power_tolerance_db", c.power_tolerance_db},
       {"scene", c.scene}};
}

inline void from_json(const nlohmann::json& j, ChannelConfig& c) {
  json_detail::reject_unknown(j,
                              {"n_sc", "n_t", "array_rows", "carrier_frequency", "bandwidth", "subcarrier_spacing",
                               "num_clusters", "delay_spread", "rician_k_db", "pathloss_exponent", "reference_loss_db",
                               "wall_loss_db", "sta_speed", "power_tolerance_db", "scene"},
                              "channel");
  json_detail::read(j, "n_sc", c.n_sc);
  json_detail::read(j, "n_t", c.n_t);
  json_detail::read(j, "array_rows", c.array_rows);
  json_detail::read(j, "carrier_frequency", c.carrier_frequency);
  json_detail::read(j, "bandwidth", c.bandwidth);
  json_detail::read(j, "subcarrier_spacing", c.subcarrier_spacing);
  json_detail::read(j, "num_clusters", c.num_clusters);
  json_detail::read(j, "delay_spread", c.delay_spread);
  json_detail::read(j, "rician_k_db", c.rician_k_db);
  json_detail::read(j, "pathloss_exponent", c.pathloss_exponent);
  json_detail::read(j, "reference_loss_db", c.reference_loss_db);
  json_detail::read(j, "wall_loss_db", c.wall_loss_db);
  json_detail::read(j, "sta_speed", c.sta_speed);
  json_detail::read(j, "power_tolerance_db", c.power_tolerance_db);
  json_detail::read(j, "scene", c.scene);
}

NLOHMANN_JSON_SERIALIZE_ENUM(NoiseBandwidth, {{NoiseBandwidth::per_subcarrier, "per_subcarrier"},
                                              {NoiseBandwidth::full_band, "full_band"}})

/// Noise settings as they appear in scenario files; pilot energy is given as a PSD.
struct NoiseConfig {
  double noise_density_dbm_hz = -174.0;
  double noise_figure_db = 7.0;
  int n_ltf = 16;
  double pilot_psd_dbm_per_mhz = 5.0;
  NoiseBandwidth convention = NoiseBandwidth::per_subcarrier;

  LsNoiseParams resolve(const ChannelConfig& cfg) const {
    LsNoiseParams p = LsNoiseParams::from_psd(cfg, pilot_psd_dbm_per_mhz);
    p.noise_density_dbm_hz = noise_density_dbm_hz;
    p.noise_figure_db = noise_figure_db;
    p.n_ltf = n_ltf;
    p.convention = convention;
    p.validate();
    return p;
  }
};

inline void to_json(nlohmann::json& j, const NoiseConfig& n) {
  j = {{"noise_density_dbm_hz", n.noise_density_dbm_hz},
       {"noise_figure_db", n.noise_figure_db},
       {"n_ltf", n.n_ltf},
       {"pilot_psd_dbm_per_mhz", n.pilot_psd_dbm_per_mhz},
       {"convention", n.convention}};
}

inline void from_json(const nlohmann::json& j, NoiseConfig& n) {
  json_detail::reject_unknown(
      j, {"noise_density_dbm_hz", "noise_figure_db", "n_ltf", "pilot_psd_dbm_per_mhz", "convention"}, "noise");
  json_detail::read(j, "noise_density_dbm_hz", n.noise_density_dbm_hz);
  json_detail::read(j, "noise_figure_db", n.noise_figure_db);
  json_detail::read(j, "n_ltf", n.n_ltf);
  json_detail::read(j, "pilot_psd_dbm_per_mhz", n.pilot_psd_dbm_per_mhz);
  json_detail::read(j, "convention", n.convention);
}

inline void to_json(nlohmann::json& j, const LearnedCompressorProfile& p) {
  j = {{"eta", p.eta},
       {"latent_dim", p.latent_dim},
       {"conditions",
        {{"los", {{"corr_mean", p.los.mean}, {"corr_p1", p.los.p1}}},
         {"nlos", {{"corr_mean", p.nlos.mean}, {"corr_p1", p.nlos.p1}}}}},
       {"size_bits",
        {{"median", p.size_bits.median}, {"min", p.size_bits.min}, {"max", p.size_bits.max}, {"stdev", p.size_bits.stdev}}},
       {"n_vs", p.n_vs},
       {"n_t", p.n_t},
       {"n_g", p.n_g}};
}

inline void from_json(const nlohmann::json& j, LearnedCompressorProfile& p) {
  json_detail::reject_unknown(j, {"eta", "latent_dim", "conditions", "size_bits", "n_vs", "n_t", "n_g"}, "profile");
  j.at("eta").get_to(p.eta);
  j.at("latent_dim").get_to(p.latent_dim);
  const auto& cond = j.at("conditions");
  json_detail::reject_unknown(cond, {"los", "nlos"}, "profile.conditions");
  for (auto [key, stats] : {std::pair{"los", &p.los}, std::pair{"nlos", &p.nlos}}) {
    const auto& c = cond.at(key);
    json_detail::reject_unknown(c, {"corr_mean", "corr_p1"}, "profile condition");
    c.at("corr_mean").get_to(stats->mean);
    c.at("corr_p1").get_to(stats->p1);
  }
  const auto& s = j.at("size_bits");
  json_detail::reject_unknown(s, {"median", "min", "max", "stdev"}, "profile.size_bits");
  s.at("median").get_to(p.size_bits.median);
  s.at("min").get_to(p.size_bits.min);
  s.at("max").get_to(p.size_bits.max);
  s.at("stdev").get_to(p.size_bits.stdev);
  json_detail::read(j, "n_vs", p.n_vs);
  json_detail::read(j, "n_t", p.n_t);
  json_detail::read(j, "n_g", p.n_g);
}

}  // namespace cobf
