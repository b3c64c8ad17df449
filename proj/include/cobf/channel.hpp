// Frequency-selective MIMO downlink channels, temporal evolution and LS estimation noise.
//
// A channel is a clustered tapped delay line: each cluster (tap) has a delay and an
// N_t-dimensional complex gain. The frequency response on subcarrier k is the DFT of the
// taps at the subcarrier's baseband offset. LOS links add a deterministic steering tap at
// zero delay carrying K/(K+1) of the power.
#pragma once

#include "cobf/common.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cobf {

/// Rectangular grid of identical rooms separated by corridors. Rooms are numbered
/// row-major; each room has one ceiling-mounted AP at its centre.
struct SceneLayout {
  double room_length = 5.0;
  double room_width = 5.0;
  double room_height = 3.0;
  double corridor_width = 1.0;
  int rooms_x = 2;
  int rooms_y = 2;
  double wall_clearance = 0.5;
  double sta_height_min = 1.2;
  double sta_height_max = 1.7;

  int num_rooms() const { return rooms_x * rooms_y; }
  Vec3 room_origin(int room) const;
  Vec3 ap_position(int room) const;
  /// Room containing `p` (including its walls), or -1 for corridors / outside.
  int room_of(const Vec3& p) const;
  bool contains(const Vec3& p) const;
  /// Walls crossed on the way between two rooms (two per corridor crossed).
  int walls_between(int room_a, int room_b) const;
  void validate() const;
};

struct ChannelConfig {
  int n_sc = 980;
  int n_t = 16;
  /// Rows of the planar AP array; n_t must be a multiple.
  int array_rows = 4;
  double carrier_frequency = 5.3e9;
  double bandwidth = 80e6;
  double subcarrier_spacing = 78.125e3;
  int num_clusters = 6;
  double delay_spread = 30e-9;
  double rician_k_db = 6.0;
  double pathloss_exponent = 3.0;
  /// Loss at the 1 m reference distance (free space at 5.3 GHz).
  double reference_loss_db = 46.9;
  double wall_loss_db = 5.0;
  double sta_speed = 0.25;
  /// Accepted deviation of a fresh realization's mean entry power from the path-loss model.
  double power_tolerance_db = 3.0;
  SceneLayout scene;

  void validate() const;
  double pathloss_db(double distance, int walls) const;
  double doppler_frequency() const { return sta_speed * carrier_frequency / kSpeedOfLight; }
  /// Baseband frequency offset of subcarrier k, centred on the carrier.
  double subcarrier_offset(int k) const { return (k - 0.5 * (n_sc - 1)) * subcarrier_spacing; }
};

/// Delay-domain representation kept alongside generated channels so that temporal
/// evolution preserves frequency correlation.
struct DelayProfile {
  std::vector<double> delays;     // seconds
  std::vector<double> tap_power;  // mean power per antenna entry, linear
  Eigen::MatrixXcd taps;          // taps x n_t
};

template <typename Real>
struct ChannelTensor {
  CMatrixX<Real> gains;  // n_sc x n_t
  StaId sta;
  ApId ap;
  double timestamp = 0.0;
  bool los = false;
  std::optional<DelayProfile> profile;

  int n_sc() const { return static_cast<int>(gains.rows()); }
  int n_t() const { return static_cast<int>(gains.cols()); }
  double mean_power() const { return static_cast<double>(gains.cwiseAbs2().mean()); }
  bool all_finite() const { return gains.allFinite(); }
};

enum class NoiseBandwidth { per_subcarrier, full_band };

/// Thermal noise and sounding pilot parameters of the LS estimator.
struct LsNoiseParams {
  double noise_density_dbm_hz = -174.0;
  double noise_figure_db = 7.0;
  int n_ltf = 16;
  /// Mean-square pilot amplitude per subcarrier, watts.
  double pilot_energy = 0.0;
  double subcarrier_spacing = 78.125e3;
  double bandwidth = 80e6;
  NoiseBandwidth convention = NoiseBandwidth::per_subcarrier;

  /// Pilot energy from a transmit PSD spread over one subcarrier.
  static LsNoiseParams from_psd(const ChannelConfig& cfg, double psd_dbm_per_mhz = 5.0);

  void validate() const;
  /// N0 over the bandwidth selected by `convention`, watts.
  double thermal_noise_power() const;
  /// N0 * NF over a single subcarrier, watts; the SINR noise term.
  double noise_per_subcarrier() const;
  /// Per-entry variance of the LS estimation error.
  double variance() const;
};

/// UPA steering vector (half-wavelength spacing) towards unit direction `u`.
Eigen::VectorXcd steering_vector(const ChannelConfig& cfg, const Vec3& u);

namespace detail {

/// exp(-j 2 pi f_k tau_l) for subcarriers k = 0, stride, 2 stride, ... Each column is a
/// geometric sequence in k, built by repeated multiplication.
inline Eigen::MatrixXcd phase_matrix(const ChannelConfig& cfg, const std::vector<double>& delays, int stride) {
  const int rows = (cfg.n_sc + stride - 1) / stride;
  const int taps = static_cast<int>(delays.size());
  Eigen::MatrixXcd phase(rows, taps);
  for (int l = 0; l < taps; ++l) {
    const double w = -2.0 * kPi * delays[l];
    const std::complex<double> step = std::polar(1.0, w * stride * cfg.subcarrier_spacing);
    std::complex<double> z = std::polar(1.0, w * cfg.subcarrier_offset(0));
    for (int r = 0; r < rows; ++r) {
      // Re-anchor periodically so rounding does not accumulate.
      if (r % 64 == 0) z = std::polar(1.0, w * cfg.subcarrier_offset(r * stride));
      phase(r, l) = z;
      z *= step;
    }
  }
  return phase;
}

/// Response on every `stride`-th subcarrier.
template <typename Real>
CMatrixX<Real> frequency_response_rows(const ChannelConfig& cfg, const DelayProfile& profile, int stride) {
  Eigen::MatrixXcd h = phase_matrix(cfg, profile.delays, stride) * profile.taps;
  return h.template cast<std::complex<Real>>();
}

template <typename Real>
CMatrixX<Real> frequency_response(const ChannelConfig& cfg, const DelayProfile& profile) {
  return frequency_response_rows<Real>(cfg, profile, 1);
}

inline std::complex<double> circular_normal(Rng& rng, double variance) {
  std::normal_distribution<double> n(0.0, std::sqrt(variance / 2.0));
  const double re = n(rng);
  const double im = n(rng);
  return {re, im};
}

}  // namespace detail

/// Draws a channel realization between an AP and a STA. Deterministic in (cfg, positions, seed).
template <typename Real = double>
ChannelTensor<Real> generate_channel(const ChannelConfig& cfg, const Vec3& sta_pos, const Vec3& ap_pos,
                                     std::uint64_t seed) {
  cfg.validate();
  const int sta_room = cfg.scene.room_of(sta_pos);
  const int ap_room = cfg.scene.room_of(ap_pos);
  if (sta_room < 0 || ap_room < 0) throw PreconditionError("generate_channel: position outside the scene rooms");

  Rng rng(seed);
  const bool los = sta_room == ap_room;
  const double distance = (sta_pos - ap_pos).norm();
  const double pl_db = cfg.pathloss_db(distance, cfg.scene.walls_between(sta_room, ap_room));
  const double budget = std::pow(10.0, -pl_db / 10.0);

  std::exponential_distribution<double> delay_draw(1.0 / cfg.delay_spread);
  std::vector<double> delays(cfg.num_clusters, 0.0);
  for (int l = 1; l < cfg.num_clusters; ++l) delays[l] = delay_draw(rng);
  std::sort(delays.begin(), delays.end());

  std::vector<double> weights(cfg.num_clusters);
  double total = 0.0;
  for (int l = 0; l < cfg.num_clusters; ++l) {
    weights[l] = std::exp(-delays[l] / cfg.delay_spread);
    total += weights[l];
  }

  const double k_lin = los ? std::pow(10.0, cfg.rician_k_db / 10.0) : 0.0;
  const double los_share = k_lin / (k_lin + 1.0);
  const double nlos_share = 1.0 - los_share;

  DelayProfile profile;
  const int taps = cfg.num_clusters + (los ? 1 : 0);
  profile.taps.resize(taps, cfg.n_t);
  int row = 0;
  if (los) {
    std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
    const Vec3 u = (sta_pos - ap_pos).normalized();
    const double p = budget * los_share;
    profile.delays.push_back(0.0);
    profile.tap_power.push_back(p);
    profile.taps.row(row++) = std::sqrt(p) * std::polar(1.0, phase(rng)) * steering_vector(cfg, u).transpose();
  }
  for (int l = 0; l < cfg.num_clusters; ++l, ++row) {
    const double p = budget * nlos_share * weights[l] / total;
    profile.delays.push_back(delays[l]);
    profile.tap_power.push_back(p);
    for (int t = 0; t < cfg.n_t; ++t) profile.taps(row, t) = detail::circular_normal(rng, p);
  }

  ChannelTensor<Real> h;
  h.gains = detail::frequency_response<Real>(cfg, profile);
  h.los = los;
  h.profile = std::move(profile);
  return h;
}

/// Jakes coefficient J0(2 pi f_d dt) of the first-order Gauss-Markov step.
inline double jakes_alpha(const ChannelConfig& cfg, double dt) {
  return std::cyl_bessel_j(0.0, 2.0 * kPi * cfg.doppler_frequency() * dt);
}

/// Gauss-Markov step of the delay-domain taps; innovations carry each tap's mean power.
inline void evolve_profile(DelayProfile& p, double dt, const ChannelConfig& cfg, std::uint64_t seed) {
  if (!(dt >= 0.0)) throw PreconditionError("evolve_profile: dt must be nonnegative");
  if (dt == 0.0) return;
  const double alpha = jakes_alpha(cfg, dt);
  const double beta = std::sqrt(std::max(0.0, 1.0 - alpha * alpha));
  Rng rng(seed);
  for (Eigen::Index l = 0; l < p.taps.rows(); ++l)
    for (Eigen::Index t = 0; t < p.taps.cols(); ++t)
      p.taps(l, t) = alpha * p.taps(l, t) + beta * detail::circular_normal(rng, p.tap_power[l]);
}

/// First-order Gauss-Markov step with Jakes coefficient J0(2 pi f_d dt). The innovation
/// is drawn per tap with the tap's mean power, or per entry with the tensor's mean power
/// when no delay profile is attached.
template <typename Real>
ChannelTensor<Real> evolve_channel(const ChannelTensor<Real>& h, double dt, const ChannelConfig& cfg,
                                   std::uint64_t seed) {
  if (!(dt >= 0.0)) throw PreconditionError("evolve_channel: dt must be nonnegative");
  ChannelTensor<Real> out = h;
  out.timestamp = h.timestamp + dt;
  if (dt == 0.0) return out;

  if (out.profile) {
    evolve_profile(*out.profile, dt, cfg, seed);
    out.gains = detail::frequency_response<Real>(cfg, *out.profile);
    return out;
  }
  const double alpha = jakes_alpha(cfg, dt);
  const double beta = std::sqrt(std::max(0.0, 1.0 - alpha * alpha));
  Rng rng(seed);
  const double power = h.mean_power();
  for (Eigen::Index k = 0; k < out.gains.rows(); ++k)
    for (Eigen::Index t = 0; t < out.gains.cols(); ++t) {
      const auto w = detail::circular_normal(rng, power);
      out.gains(k, t) = static_cast<Real>(alpha) * out.gains(k, t) +
                        std::complex<Real>(static_cast<Real>(beta * w.real()), static_cast<Real>(beta * w.imag()));
    }
  return out;
}

/// Returns h + n with n ~ CN(0, sigma^2_LTF) i.i.d. per entry. The result is an estimate
/// and carries no delay profile.
template <typename Real>
ChannelTensor<Real> add_ls_noise(const ChannelTensor<Real>& h, const LsNoiseParams& p, Rng& rng) {
  p.validate();
  ChannelTensor<Real> out = h;
  out.profile.reset();
  const double var = p.variance();
  for (Eigen::Index k = 0; k < out.gains.rows(); ++k)
    for (Eigen::Index t = 0; t < out.gains.cols(); ++t) {
      const auto n = detail::circular_normal(rng, var);
      out.gains(k, t) += std::complex<Real>(static_cast<Real>(n.real()), static_cast<Real>(n.imag()));
    }
  return out;
}

/// Adds CN(0, sigma^2_LTF) to every entry of `rows` in place.
template <typename Real>
void add_ls_noise_rows(CMatrixX<Real>& rows, const LsNoiseParams& p, Rng& rng) {
  p.validate();
  const double var = p.variance();
  for (Eigen::Index r = 0; r < rows.rows(); ++r)
    for (Eigen::Index t = 0; t < rows.cols(); ++t) {
      const auto n = detail::circular_normal(rng, var);
      rows(r, t) += std::complex<Real>(static_cast<Real>(n.real()), static_cast<Real>(n.imag()));
    }
}

/// LS estimate restricted to every `stride`-th subcarrier. Statistically identical to
/// sampling the rows of add_ls_noise(h) without drawing noise for rows nobody reads.
template <typename Real>
CMatrixX<Real> estimate_sampled_rows(const ChannelTensor<Real>& h, int stride, const LsNoiseParams& p, Rng& rng) {
  if (stride < 1) throw PreconditionError("estimate_sampled_rows: stride must be positive");
  const int rows = (h.n_sc() + stride - 1) / stride;
  CMatrixX<Real> out(rows, h.n_t());
  for (int r = 0; r < rows; ++r) out.row(r) = h.gains.row(r * stride);
  add_ls_noise_rows(out, p, rng);
  return out;
}

/// Binary channel dataset: little-endian header {magic "CBFCHAN1", u32 version, u32 n_sc,
/// u32 n_t, u64 samples} followed by n_sc*n_t interleaved (re, im) float32 pairs per sample,
/// subcarrier-major. A JSON sidecar `<path>.json` holds the ChannelConfig and per-sample
/// metadata (sta, ap, room, los).
struct DatasetSample {
  ChannelTensor<double> channel;
  int room = -1;
};

void write_channel_dataset(const std::filesystem::path& path, std::span<const DatasetSample> samples,
                           const ChannelConfig& cfg);
std::vector<DatasetSample> read_channel_dataset(const std::filesystem::path& path);

}  // namespace cobf
