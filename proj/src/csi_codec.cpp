#include "cobf/csi_codec.hpp"

#include "cobf/json_io.hpp"

#include <boost/math/distributions/beta.hpp>
#include <boost/math/tools/roots.hpp>

#include <fstream>
#include <regex>

namespace cobf {

int angle_pair_count(int n_t, int n_ss) {
  if (n_t < 1 || n_ss < 1) throw PreconditionError("angle_pair_count: n_t and n_ss must be positive");
  if (n_ss > n_t) throw PreconditionError("angle_pair_count: n_ss must not exceed n_t");
  return n_ss * (2 * n_t - n_ss - 1) / 2;
}

std::uint64_t report_size_bits(int n_sc, int n_g, int n_t, int n_ss, int phi_bits, int psi_bits) {
  if (n_sc < 1 || n_g < 1 || phi_bits < 1 || psi_bits < 1)
    throw PreconditionError("report_size_bits: all parameters must be positive");
  const auto groups = static_cast<std::uint64_t>((n_sc + n_g - 1) / n_g);
  return groups * static_cast<std::uint64_t>(angle_pair_count(n_t, n_ss)) *
         static_cast<std::uint64_t>(phi_bits + psi_bits);
}

namespace {

void check_bits(int bits) {
  if (bits < 1 || bits > 30) throw PreconditionError("quantizer: bit width must be in [1, 30]");
}

}  // namespace

double dequantize_phi(std::uint32_t code, int bits) {
  check_bits(bits);
  return code * kPi / std::ldexp(1.0, bits - 1) + kPi / std::ldexp(1.0, bits);
}

double dequantize_psi(std::uint32_t code, int bits) {
  check_bits(bits);
  return code * kPi / std::ldexp(1.0, bits + 1) + kPi / std::ldexp(1.0, bits + 2);
}

std::uint32_t quantize_phi(double phi, int bits) {
  check_bits(bits);
  if (!(phi >= 0.0 && phi < 2.0 * kPi + 1e-12)) throw PreconditionError("quantize_phi: angle outside [0, 2 pi)");
  const double step = kPi / std::ldexp(1.0, bits - 1);
  const auto levels = std::uint32_t{1} << bits;
  return std::min(static_cast<std::uint32_t>(std::floor(phi / step)), levels - 1);
}

std::uint32_t quantize_psi(double psi, int bits) {
  check_bits(bits);
  if (!(psi >= 0.0 && psi <= kPi / 2.0 + 1e-12)) throw PreconditionError("quantize_psi: angle outside [0, pi / 2]");
  const double step = kPi / std::ldexp(1.0, bits + 1);
  const auto levels = std::uint32_t{1} << bits;
  return std::min(static_cast<std::uint32_t>(std::floor(psi / step)), levels - 1);
}

void GivensReport::validate() const {
  if (phi_bits < 1 || phi_bits > 30 || psi_bits < 1 || psi_bits > 30) throw DecodeError("givens report: bad bit widths");
  if (n_t < 2 || n_ss < 1 || n_ss > n_t || n_g < 1 || n_sc < 1) throw DecodeError("givens report: bad dimensions");
  const auto expected = static_cast<std::size_t>(groups()) * n_a();
  if (phi_codes.size() != expected || psi_codes.size() != expected) throw DecodeError("givens report: wrong code count");
  const auto phi_levels = std::uint64_t{1} << phi_bits;
  const auto psi_levels = std::uint64_t{1} << psi_bits;
  for (std::size_t i = 0; i < expected; ++i) {
    if (phi_codes[i] >= phi_levels) throw DecodeError("givens report: phi code out of range");
    if (psi_codes[i] >= psi_levels) throw DecodeError("givens report: psi code out of range");
  }
}

namespace {

class BitWriter {
 public:
  void put(std::uint32_t value, int bits) {
    for (int i = bits - 1; i >= 0; --i) {
      if (count_ % 8 == 0) bytes_.push_back(0);
      if ((value >> i) & 1u) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> (count_ % 8));
      ++count_;
    }
  }
  std::uint64_t count() const { return count_; }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
  std::uint64_t count_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint32_t get(int bits) {
    std::uint32_t v = 0;
    for (int i = 0; i < bits; ++i, ++pos_) {
      if (pos_ / 8 >= bytes_.size()) throw DecodeError("givens report: payload truncated");
      v = (v << 1) | ((bytes_[pos_ / 8] >> (7 - pos_ % 8)) & 1u);
    }
    return v;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

PackedReport serialize(const GivensReport& r) {
  r.validate();
  BitWriter w;
  for (std::size_t i = 0; i < r.phi_codes.size(); ++i) {
    w.put(r.phi_codes[i], r.phi_bits);
    w.put(r.psi_codes[i], r.psi_bits);
  }
  PackedReport out;
  out.bits = w.count();
  out.bytes = w.take();
  return out;
}

GivensReport deserialize(std::span<const std::uint8_t> bytes, const GivensReport& layout) {
  GivensReport r = layout;
  r.phi_codes.clear();
  r.psi_codes.clear();
  const auto count = static_cast<std::size_t>(r.groups()) * r.n_a();
  BitReader rd(bytes);
  for (std::size_t i = 0; i < count; ++i) {
    r.phi_codes.push_back(rd.get(r.phi_bits));
    r.psi_codes.push_back(rd.get(r.psi_bits));
  }
  r.validate();
  return r;
}

int latent_dimension(double eta, int n_vs, int n_t) {
  if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("latent_dimension: eta must be in (0, 1]");
  // Tolerates the rounding of eta values such as 1/3 written as decimals.
  return static_cast<int>(std::ceil(eta * 2.0 * n_vs * n_t - 1e-9));
}

void LearnedCompressorProfile::validate() const {
  if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("profile: eta must be in (0, 1]");
  if (n_vs < 1 || n_t < 1 || n_g < 1) throw ConfigError("profile: n_vs, n_t and n_g must be positive");
  if (latent_dim != latent_dimension(eta, n_vs, n_t))
    throw ConfigError("profile: latent_dim must equal ceil(eta * 2 * n_vs * n_t)");
  for (const auto* c : {&los, &nlos}) {
    if (!(c->mean >= 0.0 && c->mean <= 1.0 && c->p1 >= 0.0 && c->p1 <= 1.0))
      throw ConfigError("profile: correlations must lie in [0, 1]");
    if (c->p1 > c->mean) throw ConfigError("profile: 1st percentile exceeds the mean");
  }
  const auto& s = size_bits;
  if (!(s.min > 0 && s.min <= s.median && s.median <= s.max)) throw ConfigError("profile: need 0 < min <= median <= max");
  if (!(s.stdev >= 0)) throw ConfigError("profile: stdev must be nonnegative");
}

LearnedCompressorProfile LearnedCompressorProfile::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open profile " + path.string());
  LearnedCompressorProfile p;
  try {
    p = nlohmann::json::parse(is).get<LearnedCompressorProfile>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("profile " + path.string() + ": " + e.what());
  }
  p.validate();
  return p;
}

void LearnedCompressorProfile::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw Error("cannot write profile " + path.string());
  os << nlohmann::json(*this).dump(2) << '\n';
}

LearnedCompressorProfile validate_profile_file(const std::filesystem::path& path) {
  auto p = LearnedCompressorProfile::load(path);
  const std::string stem = path.stem().string();
  std::smatch m;
  std::optional<double> named;
  if (std::regex_search(stem, m, std::regex(R"(eta_?(\d+)_(\d+))"))) {
    const double den = std::stod(m[2]);
    if (den > 0) named = std::stod(m[1]) / den;
  } else if (std::regex_search(stem, m, std::regex(R"(eta_?(\d*\.\d+))"))) {
    named = std::stod(m[1]);
  }
  if (named && std::abs(*named - p.eta) > 1e-6)
    throw ConfigError("profile: eta in the file name disagrees with the payload");
  return p;
}

BetaParams fit_beta(double mean, double p1) {
  if (!(mean > 0.0 && mean <= 1.0)) throw ConfigError("fit_beta: mean must be in (0, 1]");
  if (!(p1 > 0.0 && p1 <= mean)) throw ConfigError("fit_beta: 1st percentile must be in (0, mean]");
  if (mean == 1.0 || p1 == mean) return {1.0, 1.0, mean};
  const double ratio = (1.0 - mean) / mean;
  auto gap = [&](double log_a) {
    const double a = std::exp(log_a);
    return boost::math::quantile(boost::math::beta_distribution<double>(a, a * ratio), 0.01) - p1;
  };
  // The 1st percentile is not monotone in the concentration: it dips for small a where the
  // density turns U-shaped. Walk down from the concentrated end to the first sign change.
  double hi = std::log(1e9);
  if (gap(hi) <= 0.0) throw ConfigError("fit_beta: 1st percentile too close to the mean");
  double lo = hi;
  for (;;) {
    lo -= 0.5;
    if (lo < std::log(1e-3)) throw ConfigError("fit_beta: no Beta distribution matches these statistics");
    if (gap(lo) <= 0.0) break;
  }
  boost::uintmax_t iters = 200;
  const auto [l, r] = boost::math::tools::toms748_solve(gap, lo, lo + 0.5, boost::math::tools::eps_tolerance<double>(50), iters);
  const double a = std::exp(0.5 * (l + r));
  return {a, a * ratio, std::nullopt};
}

LearnedCompressor::LearnedCompressor(LearnedCompressorProfile profile) : profile_(std::move(profile)) {
  profile_.validate();
  los_beta_ = fit_beta(profile_.los.mean, profile_.los.p1);
  nlos_beta_ = fit_beta(profile_.nlos.mean, profile_.nlos.p1);
}

double LearnedCompressor::sample_correlation(bool los, Rng& rng) const {
  const BetaParams& b = beta(los);
  if (b.point) return *b.point;
  std::gamma_distribution<double> ga(b.a, 1.0);
  std::gamma_distribution<double> gb(b.b, 1.0);
  for (;;) {
    const double x = ga(rng);
    const double y = gb(rng);
    if (x + y > 0.0) return x / (x + y);
  }
}

std::uint64_t LearnedCompressor::sample_size_bits(Rng& rng) const {
  const SizeStats& s = profile_.size_bits;
  const double lo = 8.0 * std::ceil(s.min / 8.0);
  const double hi = 8.0 * std::floor(s.max / 8.0);
  double x = s.median;
  if (s.stdev > 0.0) {
    std::normal_distribution<double> n(s.median, s.stdev);
    for (int i = 0; i < 10000; ++i) {
      x = n(rng);
      if (x >= s.min && x <= s.max) break;
      x = s.median;
    }
  }
  const double bits = std::clamp(8.0 * std::round(x / 8.0), lo, hi);
  return static_cast<std::uint64_t>(std::max(bits, 8.0));
}

}  // namespace cobf
