#include "cobf/channel.hpp"

#include "cobf/json_io.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace cobf {

Vec3 SceneLayout::room_origin(int room) const {
  const int cx = room % rooms_x;
  const int cy = room / rooms_x;
  return {cx * (room_length + corridor_width), cy * (room_width + corridor_width), 0.0};
}

Vec3 SceneLayout::ap_position(int room) const {
  return room_origin(room) + Vec3(room_length / 2.0, room_width / 2.0, room_height);
}

int SceneLayout::room_of(const Vec3& p) const {
  constexpr double eps = 1e-9;
  if (p.z() < -eps || p.z() > room_height + eps) return -1;
  for (int r = 0; r < num_rooms(); ++r) {
    const Vec3 o = room_origin(r);
    if (p.x() >= o.x() - eps && p.x() <= o.x() + room_length + eps && p.y() >= o.y() - eps &&
        p.y() <= o.y() + room_width + eps)
      return r;
  }
  return -1;
}

bool SceneLayout::contains(const Vec3& p) const { return room_of(p) >= 0; }

int SceneLayout::walls_between(int room_a, int room_b) const {
  const int dx = std::abs(room_a % rooms_x - room_b % rooms_x);
  const int dy = std::abs(room_a / rooms_x - room_b / rooms_x);
  return 2 * (dx + dy);
}

void SceneLayout::validate() const {
  if (!(room_length > 0 && room_width > 0 && room_height > 0 && corridor_width >= 0))
    throw ConfigError("scene: room dimensions must be positive");
  if (rooms_x < 1 || rooms_y < 1) throw ConfigError("scene: need at least one room");
  if (!(wall_clearance >= 0 && 2 * wall_clearance < std::min(room_length, room_width)))
    throw ConfigError("scene: wall clearance leaves no usable floor area");
  if (!(sta_height_min > 0 && sta_height_min <= sta_height_max && sta_height_max <= room_height))
    throw ConfigError("scene: invalid STA height range");
}

void ChannelConfig::validate() const {
  if (n_sc < 1 || n_t < 1) throw ConfigError("channel: n_sc and n_t must be positive");
  if (array_rows < 1 || n_t % array_rows != 0) throw ConfigError("channel: n_t must be a multiple of array_rows");
  if (num_clusters < 1) throw ConfigError("channel: num_clusters must be positive");
  if (!(delay_spread > 0)) throw ConfigError("channel: delay_spread must be positive");
  if (!(carrier_frequency > 0 && bandwidth > 0 && subcarrier_spacing > 0))
    throw ConfigError("channel: frequencies must be positive");
  if (n_sc * subcarrier_spacing > bandwidth * (1.0 + 1e-12))
    throw ConfigError("channel: n_sc * subcarrier_spacing exceeds the bandwidth");
  if (!(pathloss_exponent > 0 && sta_speed >= 0 && power_tolerance_db > 0 && wall_loss_db >= 0))
    throw ConfigError("channel: invalid propagation parameters");
  scene.validate();
}

double ChannelConfig::pathloss_db(double distance, int walls) const {
  return reference_loss_db + 10.0 * pathloss_exponent * std::log10(std::max(distance, 1.0)) + walls * wall_loss_db;
}

Eigen::VectorXcd steering_vector(const ChannelConfig& cfg, const Vec3& u) {
  const int cols = cfg.n_t / cfg.array_rows;
  Eigen::VectorXcd a(cfg.n_t);
  for (int m = 0; m < cfg.array_rows; ++m)
    for (int n = 0; n < cols; ++n) a(m * cols + n) = std::polar(1.0, kPi * (m * u.x() + n * u.y()));
  return a;
}

LsNoiseParams LsNoiseParams::from_psd(const ChannelConfig& cfg, double psd_dbm_per_mhz) {
  LsNoiseParams p;
  p.n_ltf = cfg.n_t;
  p.subcarrier_spacing = cfg.subcarrier_spacing;
  p.bandwidth = cfg.bandwidth;
  p.pilot_energy = dbm_to_watt(psd_dbm_per_mhz) * cfg.subcarrier_spacing / 1e6;
  return p;
}

void LsNoiseParams::validate() const {
  if (n_ltf < 1) throw ConfigError("ls noise: n_ltf must be at least 1");
  if (!(pilot_energy > 0)) throw ConfigError("ls noise: pilot_energy must be positive");
  if (!(subcarrier_spacing > 0 && bandwidth > 0)) throw ConfigError("ls noise: bandwidths must be positive");
}

double LsNoiseParams::thermal_noise_power() const {
  const double bw = convention == NoiseBandwidth::per_subcarrier ? subcarrier_spacing : bandwidth;
  return dbm_to_watt(noise_density_dbm_hz) * bw;
}

double LsNoiseParams::noise_per_subcarrier() const {
  return dbm_to_watt(noise_density_dbm_hz) * subcarrier_spacing * db_to_linear(noise_figure_db);
}

double LsNoiseParams::variance() const {
  return thermal_noise_power() * db_to_linear(noise_figure_db) / (static_cast<double>(n_ltf) * pilot_energy);
}

namespace {

constexpr std::array<char, 8> kDatasetMagic = {'C', 'B', 'F', 'C', 'H', 'A', 'N', '1'};
constexpr std::uint32_t kDatasetVersion = 1;

template <typename T>
void put_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) throw DecodeError("channel dataset: truncated file");
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  T v;
  std::memcpy(&v, &bits, sizeof(T));
  return v;
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  auto s = path;
  s += ".json";
  return s;
}

}  // namespace

void write_channel_dataset(const std::filesystem::path& path, std::span<const DatasetSample> samples,
                           const ChannelConfig& cfg) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os.write(kDatasetMagic.data(), kDatasetMagic.size());
  put_le<std::uint32_t>(os, kDatasetVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.n_sc));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.n_t));
  put_le<std::uint64_t>(os, samples.size());

  nlohmann::json meta = nlohmann::json::array();
  for (const auto& s : samples) {
    if (s.channel.n_sc() != cfg.n_sc || s.channel.n_t() != cfg.n_t)
      throw PreconditionError("channel dataset: sample dimensions differ from the config");
    for (int k = 0; k < cfg.n_sc; ++k)
      for (int t = 0; t < cfg.n_t; ++t) {
        put_le<float>(os, static_cast<float>(s.channel.gains(k, t).real()));
        put_le<float>(os, static_cast<float>(s.channel.gains(k, t).imag()));
      }
    meta.push_back({{"sta", s.channel.sta.value}, {"ap", s.channel.ap.value}, {"room", s.room}, {"los", s.channel.los}});
  }
  if (!os) throw Error("failed writing " + path.string());

  nlohmann::json side;
  side["format"] = "cobf-channel-dataset";
  side["version"] = kDatasetVersion;
  side["channel_config"] = cfg;
  side["samples"] = std::move(meta);
  std::ofstream js(sidecar_path(path));
  if (!js) throw Error("cannot write dataset sidecar");
  js << side.dump(2) << '\n';
}

std::vector<DatasetSample> read_channel_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (magic != kDatasetMagic) throw DecodeError("channel dataset: bad magic");
  if (get_le<std::uint32_t>(is) != kDatasetVersion) throw DecodeError("channel dataset: unsupported version");
  const auto n_sc = static_cast<int>(get_le<std::uint32_t>(is));
  const auto n_t = static_cast<int>(get_le<std::uint32_t>(is));
  const auto count = get_le<std::uint64_t>(is);

  std::ifstream js(sidecar_path(path));
  const nlohmann::json side = js ? nlohmann::json::parse(js) : nlohmann::json::object();
  const auto* meta = side.contains("samples") ? &side.at("samples") : nullptr;

  std::vector<DatasetSample> out(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    auto& s = out[i];
    s.channel.gains.resize(n_sc, n_t);
    for (int k = 0; k < n_sc; ++k)
      for (int t = 0; t < n_t; ++t) {
        const float re = get_le<float>(is);
        const float im = get_le<float>(is);
        s.channel.gains(k, t) = {re, im};
      }
    if (meta && i < meta->size()) {
      const auto& m = (*meta)[i];
      s.channel.sta = StaId{m.at("sta").get<int>()};
      s.channel.ap = ApId{m.at("ap").get<int>()};
      s.room = m.at("room").get<int>();
      s.channel.los = m.at("los").get<bool>();
    }
  }
  return out;
}

}  // namespace cobf
