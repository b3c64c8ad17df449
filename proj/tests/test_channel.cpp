#include "cobf/channel.hpp"

#include <catch2/catch.hpp>

#include <cmath>
#include <filesystem>

using namespace cobf;

namespace {

ChannelConfig small_config() {
  ChannelConfig cfg;
  cfg.n_sc = 32;
  cfg.n_t = 4;
  cfg.array_rows = 2;
  return cfg;
}

// Room 0 spans [0,5]x[0,5]; its AP hangs at (2.5, 2.5, 3).
const Vec3 kAp0{2.5, 2.5, 3.0};
const Vec3 kStaSameRoom{1.0, 1.5, 1.5};
const Vec3 kStaNextRoom{7.5, 2.0, 1.5};

}  // namespace

TEST_CASE("scene geometry") {
  SceneLayout s;
  CHECK(s.ap_position(0).isApprox(kAp0));
  CHECK(s.ap_position(3).isApprox(Vec3(8.5, 8.5, 3.0)));
  CHECK(s.room_of(kStaSameRoom) == 0);
  CHECK(s.room_of(kStaNextRoom) == 1);
  CHECK(s.room_of(Vec3(5.5, 2.0, 1.5)) == -1);
  CHECK(s.walls_between(0, 0) == 0);
  CHECK(s.walls_between(0, 1) == 2);
  CHECK(s.walls_between(0, 3) == 4);
}

TEST_CASE("config validation") {
  ChannelConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.num_clusters = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.delay_spread = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.n_sc = 1100;  // 1100 * 78.125 kHz > 80 MHz
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.array_rows = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("generate_channel is deterministic and sized") {
  const ChannelConfig cfg;
  const auto a = generate_channel(cfg, kStaSameRoom, kAp0, 42);
  const auto b = generate_channel(cfg, kStaSameRoom, kAp0, 42);
  CHECK(a.n_sc() == 980);
  CHECK(a.n_t() == 16);
  CHECK(a.gains == b.gains);
  CHECK(a.los);
  CHECK_FALSE(generate_channel(cfg, kStaNextRoom, kAp0, 42).los);
  CHECK_FALSE(a.gains == generate_channel(cfg, kStaSameRoom, kAp0, 43).gains);
}

TEST_CASE("positions outside the rooms are rejected") {
  CHECK_THROWS_AS(generate_channel(small_config(), Vec3(5.5, 1.0, 1.5), kAp0, 1), PreconditionError);
}

TEST_CASE("zero delay spread with one cluster is frequency flat") {
  ChannelConfig cfg;
  cfg.num_clusters = 1;
  cfg.delay_spread = 1e-18;
  const auto h = generate_channel(cfg, kStaNextRoom, kAp0, 7);
  const double ref = h.gains.row(0).norm();
  double worst = 0.0;
  for (int k = 0; k < h.n_sc(); ++k) worst = std::max(worst, (h.gains.row(k) - h.gains.row(0)).norm() / ref);
  CHECK(worst < 1e-6);
}

TEST_CASE("mean entry power matches the path-loss model over seeds") {
  const ChannelConfig cfg = small_config();
  for (const Vec3& sta : {kStaSameRoom, kStaNextRoom}) {
    const double d = (sta - kAp0).norm();
    const int walls = sta == kStaSameRoom ? 0 : 2;
    const double expected = std::pow(10.0, -(46.9 + 30.0 * std::log10(d) + 5.0 * walls) / 10.0);
    double sum = 0.0;
    const int trials = 10000;
    for (int s = 0; s < trials; ++s) sum += generate_channel(cfg, sta, kAp0, 1000 + s).mean_power();
    CHECK(std::abs(sum / trials / expected - 1.0) < 0.02);
  }
}

TEST_CASE("generated channels are finite for randomized configs") {
  Rng rng(5);
  std::uniform_int_distribution<int> clusters(1, 12);
  std::uniform_real_distribution<double> spread(1e-9, 200e-9);
  std::uniform_real_distribution<double> k_db(-10.0, 15.0);
  std::uniform_real_distribution<double> x(0.6, 4.4);
  for (int i = 0; i < 200; ++i) {
    ChannelConfig cfg = small_config();
    cfg.num_clusters = clusters(rng);
    cfg.delay_spread = spread(rng);
    cfg.rician_k_db = k_db(rng);
    const Vec3 sta(x(rng), x(rng), 1.5);
    const auto h = generate_channel(cfg, sta, kAp0, i);
    REQUIRE(h.all_finite());
    REQUIRE(h.gains.rows() == cfg.n_sc);
  }
}

TEST_CASE("evolve_channel with zero lag is the identity") {
  const auto h = generate_channel(small_config(), kStaSameRoom, kAp0, 3);
  const auto e = evolve_channel(h, 0.0, small_config(), 9);
  CHECK(e.gains == h.gains);
  CHECK_THROWS_AS(evolve_channel(h, -1.0, small_config(), 9), PreconditionError);
}

namespace {

struct LagStats {
  double correlation;
  double power_ratio;
};

LagStats lag_statistics(double dt, bool with_profile) {
  const ChannelConfig cfg = small_config();
  std::complex<double> cross = 0.0;
  double p_old = 0.0;
  double p_new = 0.0;
  const int trials = 10000;
  for (int s = 0; s < trials; ++s) {
    auto h = generate_channel(cfg, kStaNextRoom, kAp0, 50000 + s);
    if (!with_profile) h.profile.reset();
    const auto e = evolve_channel(h, dt, cfg, 90000 + s);
    cross += (h.gains.conjugate().cwiseProduct(e.gains)).sum();
    p_old += h.gains.squaredNorm();
    p_new += e.gains.squaredNorm();
  }
  return {cross.real() / std::sqrt(p_old * p_new), p_new / p_old};
}

}  // namespace

TEST_CASE("evolution correlation follows the Jakes coefficient") {
  const double fd = 0.25 * 5.3e9 / 299792458.0;
  const double alpha = std::cyl_bessel_j(0.0, 2.0 * kPi * fd * 0.010);
  for (bool profile : {true, false}) {
    const auto st = lag_statistics(0.010, profile);
    CHECK(std::abs(st.correlation - alpha) < 0.02);
    CHECK(std::abs(st.power_ratio - 1.0) < 0.01);
  }
}

TEST_CASE("long lags decorrelate") {
  const auto st = lag_statistics(1e4, true);
  CHECK(std::abs(st.correlation) < 0.05);
}

namespace {

double empirical_noise_variance(const LsNoiseParams& p, std::uint64_t seed) {
  ChannelTensor<double> h;
  h.gains = CMatrixX<double>::Zero(100, 1000);  // 10^5 entries
  Rng rng(seed);
  return add_ls_noise(h, p, rng).gains.squaredNorm() / 1e5;
}

}  // namespace

TEST_CASE("LS noise variance law") {
  const ChannelConfig cfg;
  LsNoiseParams p = LsNoiseParams::from_psd(cfg);
  // N0 * NF / (N_LTF * E[x^2]) computed independently.
  const double n0 = std::pow(10.0, (-174.0 - 30.0) / 10.0) * 78.125e3;
  const double pilot = std::pow(10.0, (5.0 - 30.0) / 10.0) * 78.125e3 / 1e6;
  const double expected = n0 * std::pow(10.0, 0.7) / (16.0 * pilot);
  CHECK(p.variance() == Approx(expected).epsilon(1e-12));

  const double v1 = empirical_noise_variance(p, 1);
  CHECK(std::abs(v1 / expected - 1.0) < 0.02);

  p.n_ltf = 32;
  const double v2 = empirical_noise_variance(p, 2);
  CHECK(std::abs(v1 / v2 - 2.0) / 2.0 < 0.03);

  p.convention = NoiseBandwidth::full_band;
  CHECK(p.variance() == Approx(expected / 2.0 * 80e6 / 78.125e3).epsilon(1e-12));
}

TEST_CASE("LS noise vanishes for very long training") {
  const ChannelConfig cfg = small_config();
  LsNoiseParams p = LsNoiseParams::from_psd(cfg);
  p.n_ltf = 1000000000;
  const auto h = generate_channel(cfg, kStaSameRoom, kAp0, 11);
  Rng rng(1);
  const auto e = add_ls_noise(h, p, rng);
  CHECK((e.gains - h.gains).cwiseAbs().maxCoeff() < 10.0 * std::sqrt(p.variance()));
  CHECK((e.gains - h.gains).cwiseAbs().maxCoeff() < 1e-6 * h.gains.cwiseAbs().maxCoeff());
  CHECK(e.los == h.los);
  CHECK(e.gains.rows() == h.gains.rows());
  CHECK(e.gains.cols() == h.gains.cols());
  CHECK_FALSE(e.profile.has_value());
}

TEST_CASE("LS noise parameters are validated") {
  LsNoiseParams p = LsNoiseParams::from_psd(ChannelConfig{});
  p.n_ltf = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = LsNoiseParams::from_psd(ChannelConfig{});
  p.pilot_energy = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("sampled-row estimation matches the full estimate's statistics") {
  const ChannelConfig cfg;
  const auto h = generate_channel(cfg, kStaSameRoom, kAp0, 4);
  const LsNoiseParams p = LsNoiseParams::from_psd(cfg);
  Rng rng(3);
  const auto rows = estimate_sampled_rows(h, 16, p, rng);
  CHECK(rows.rows() == 62);
  double err = 0.0;
  for (int r = 0; r < rows.rows(); ++r) err += (rows.row(r) - h.gains.row(16 * r)).squaredNorm();
  CHECK(err / (62.0 * 16.0) == Approx(p.variance()).epsilon(0.25));
}

TEST_CASE("channel dataset round trip") {
  const ChannelConfig cfg = small_config();
  std::vector<DatasetSample> samples;
  for (int i = 0; i < 3; ++i) {
    DatasetSample s;
    s.channel = generate_channel(cfg, i == 2 ? kStaNextRoom : kStaSameRoom, kAp0, i);
    s.channel.sta = StaId{i};
    s.channel.ap = ApId{0};
    s.room = i == 2 ? 1 : 0;
    samples.push_back(std::move(s));
  }
  const auto path = std::filesystem::temp_directory_path() / "cobf_dataset_test.bin";
  write_channel_dataset(path, samples, cfg);
  CHECK(std::filesystem::file_size(path) == 8 + 4 + 4 + 4 + 8 + 3ull * 32 * 4 * 8);
  const auto back = read_channel_dataset(path);
  REQUIRE(back.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(back[i].channel.sta == StaId{i});
    CHECK(back[i].room == samples[i].room);
    CHECK(back[i].channel.los == samples[i].channel.los);
    const CMatrixX<double> expected = samples[i].channel.gains.cast<std::complex<float>>().cast<std::complex<double>>();
    CHECK(back[i].channel.gains == expected);
  }
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".json");
}

TEST_CASE("phase recurrence matches direct exponential") {
  ChannelConfig cfg;
  const std::vector<double> delays{0.0, 13e-9, 87.5e-9, 240e-9};
  for (int stride : {1, 4, 16}) {
    const auto phase = detail::phase_matrix(cfg, delays, stride);
    REQUIRE(phase.rows() == (cfg.n_sc + stride - 1) / stride);
    double worst = 0.0;
    for (int r = 0; r < phase.rows(); ++r)
      for (std::size_t l = 0; l < delays.size(); ++l) {
        const auto direct = std::polar(1.0, -2.0 * kPi * delays[l] * cfg.subcarrier_offset(r * stride));
        worst = std::max(worst, std::abs(phase(r, static_cast<int>(l)) - direct));
      }
    CHECK(worst < 1e-12);
  }
}
