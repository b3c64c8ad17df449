// Compressed beamforming feedback: right-singular-vector extraction, Givens-rotation
// angle decomposition with uniform quantization, report sizing and bit packing, and a
// learned-compressor emulation that reproduces measured accuracy/size statistics.
#pragma once

#include "cobf/channel.hpp"
#include "cobf/common.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace cobf {

/// Unit-norm beamforming vectors sampled every n_g subcarriers.
template <typename Real>
struct BeamformingVectorSet {
  CMatrixX<Real> vectors;  // n_vs x n_t
  int n_g = 1;
  int n_sc = 0;

  int n_vs() const { return static_cast<int>(vectors.rows()); }
  int n_t() const { return static_cast<int>(vectors.cols()); }

  void validate(double tol = 1e-9) const {
    if (n_g < 1 || n_sc < 1) throw PreconditionError("vector set: n_g and n_sc must be positive");
    if (n_vs() != (n_sc + n_g - 1) / n_g) throw PreconditionError("vector set: row count must be ceil(n_sc / n_g)");
    for (int r = 0; r < n_vs(); ++r)
      if (std::abs(static_cast<double>(vectors.row(r).norm()) - 1.0) > tol)
        throw PreconditionError("vector set: rows must have unit norm");
  }
};

/// Rotates `v` so that its first element with nonzero magnitude is real nonnegative.
template <typename Derived>
void normalize_leading_phase(Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const auto mag = std::abs(v(i));
    if (mag > 0) {
      v *= std::conj(v(i)) / Scalar(mag);
      return;
    }
  }
}

/// First right singular vector of each (1 x n_t) row of `rows`, which must already be the
/// sampled subcarriers. Throws DegenerateChannelError for an all-zero row.
template <typename Real>
BeamformingVectorSet<Real> extract_v_rows(const CMatrixX<Real>& rows, int n_g, int n_sc) {
  BeamformingVectorSet<Real> out;
  out.n_g = n_g;
  out.n_sc = n_sc;
  out.vectors.resize(rows.rows(), rows.cols());
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    const CRowVectorX<Real> h = rows.row(r);
    if (h.squaredNorm() == Real(0)) throw DegenerateChannelError("extract_v: all-zero channel on a sampled subcarrier");
    Eigen::JacobiSVD<CMatrixX<Real>> svd(CMatrixX<Real>(h), Eigen::ComputeThinV);
    CVectorX<Real> v = svd.matrixV().col(0);
    v /= v.norm();
    normalize_leading_phase(v);
    out.vectors.row(r) = v.transpose();
  }
  return out;
}

/// Beamforming vectors of an estimated channel, sampled every n_g subcarriers.
template <typename Real>
BeamformingVectorSet<Real> extract_v(const ChannelTensor<Real>& h_est, int n_g) {
  if (n_g < 1) throw PreconditionError("extract_v: n_g must be positive");
  const int n_vs = (h_est.n_sc() + n_g - 1) / n_g;
  CMatrixX<Real> rows(n_vs, h_est.n_t());
  for (int r = 0; r < n_vs; ++r) rows.row(r) = h_est.gains.row(r * n_g);
  return extract_v_rows(rows, n_g, h_est.n_sc());
}

// ---------------------------------------------------------------------------------------
// Givens rotations

/// Number of (phi, psi) pairs describing an n_t x n_ss unitary feedback matrix.
int angle_pair_count(int n_t, int n_ss);

/// Bits of a compressed beamforming report; throws PreconditionError if n_ss > n_t.
std::uint64_t report_size_bits(int n_sc, int n_g, int n_t, int n_ss, int phi_bits, int psi_bits);

template <typename Real>
struct GivensAngles {
  std::vector<Real> phi;  // [0, 2 pi)
  std::vector<Real> psi;  // [0, pi / 2]
};

/// Decomposes a unit vector into n_t - 1 angle pairs. The vector is first rotated so its
/// last element is real nonnegative; phi_l removes the phase of element l, then psi_l
/// rotates element l + 1 onto the first axis.
template <typename Derived>
GivensAngles<typename Derived::RealScalar> givens_decompose(const Eigen::MatrixBase<Derived>& v_in) {
  using Real = typename Derived::RealScalar;
  const Eigen::Index n = v_in.size();
  if (n < 2) throw PreconditionError("givens_decompose: need at least two antennas");
  if (std::abs(static_cast<double>(v_in.norm()) - 1.0) > 1e-9)
    throw PreconditionError("givens_decompose: input must have unit norm");

  CVectorX<Real> v = v_in.reshaped();
  const auto last = v(n - 1);
  if (std::abs(last) > Real(0)) v *= std::conj(last) / std::complex<Real>(std::abs(last));

  GivensAngles<Real> a;
  a.phi.resize(n - 1);
  a.psi.resize(n - 1);
  std::vector<Real> x(n);
  for (Eigen::Index l = 0; l < n - 1; ++l) {
    Real phi = std::arg(v(l));
    if (phi < 0) phi += Real(2 * kPi);
    if (phi >= Real(2 * kPi)) phi -= Real(2 * kPi);
    a.phi[l] = phi;
    x[l] = std::abs(v(l));
  }
  x[n - 1] = std::abs(v(n - 1));

  Real head = x[0];
  for (Eigen::Index l = 1; l < n; ++l) {
    const Real r = std::hypot(head, x[l]);
    a.psi[l - 1] = r > Real(0) ? std::atan2(x[l], head) : Real(0);
    head = r;
  }
  return a;
}

/// Inverse of givens_decompose up to a global phase.
template <typename Real>
CVectorX<Real> reconstruct_from_angles(const GivensAngles<Real>& a) {
  const std::size_t pairs = a.phi.size();
  if (a.psi.size() != pairs) throw PreconditionError("reconstruct_from_angles: phi/psi length mismatch");
  const Eigen::Index n = static_cast<Eigen::Index>(pairs) + 1;
  std::vector<Real> x(n, Real(0));
  x[0] = Real(1);
  for (Eigen::Index l = n - 1; l >= 1; --l) {
    const Real c = std::cos(a.psi[l - 1]);
    const Real s = std::sin(a.psi[l - 1]);
    const Real x0 = x[0];
    const Real xl = x[l];
    x[0] = c * x0 - s * xl;
    x[l] = s * x0 + c * xl;
  }
  CVectorX<Real> v(n);
  for (Eigen::Index l = 0; l < n - 1; ++l) v(l) = std::polar(x[l], a.phi[l]);
  v(n - 1) = x[n - 1];
  v /= v.norm();
  return v;
}

struct QuantizerBits {
  int phi = 9;
  int psi = 7;
};

double dequantize_phi(std::uint32_t code, int bits);
double dequantize_psi(std::uint32_t code, int bits);
std::uint32_t quantize_phi(double phi, int bits);
std::uint32_t quantize_psi(double psi, int bits);

/// Quantized angles of every sampled subcarrier, group-major.
struct GivensReport {
  int phi_bits = 9;
  int psi_bits = 7;
  int n_t = 16;
  int n_ss = 1;
  int n_g = 16;
  int n_sc = 980;
  std::vector<std::uint32_t> phi_codes;  // groups * n_a
  std::vector<std::uint32_t> psi_codes;

  int n_a() const { return angle_pair_count(n_t, n_ss); }
  int groups() const { return (n_sc + n_g - 1) / n_g; }
  std::uint64_t bit_size() const { return report_size_bits(n_sc, n_g, n_t, n_ss, phi_bits, psi_bits); }
  /// Throws DecodeError on inconsistent sizes or out-of-range codes.
  void validate() const;
};

/// Quantizes one vector's angles into (phi, psi) code pairs.
template <typename Real>
void quantize_angles(const GivensAngles<Real>& a, QuantizerBits bits, std::vector<std::uint32_t>& phi_codes,
                     std::vector<std::uint32_t>& psi_codes) {
  for (std::size_t i = 0; i < a.phi.size(); ++i) {
    phi_codes.push_back(quantize_phi(static_cast<double>(a.phi[i]), bits.phi));
    psi_codes.push_back(quantize_psi(static_cast<double>(a.psi[i]), bits.psi));
  }
}

template <typename Real>
GivensReport encode_givens(const BeamformingVectorSet<Real>& v, QuantizerBits bits) {
  GivensReport r;
  r.phi_bits = bits.phi;
  r.psi_bits = bits.psi;
  r.n_t = v.n_t();
  r.n_g = v.n_g;
  r.n_sc = v.n_sc;
  r.phi_codes.reserve(static_cast<std::size_t>(v.n_vs()) * (v.n_t() - 1));
  r.psi_codes.reserve(r.phi_codes.capacity());
  for (int g = 0; g < v.n_vs(); ++g) quantize_angles(givens_decompose(v.vectors.row(g)), bits, r.phi_codes, r.psi_codes);
  return r;
}

template <typename Real = double>
BeamformingVectorSet<Real> reconstruct_from_report(const GivensReport& r) {
  r.validate();
  if (r.n_ss != 1) throw DecodeError("reconstruct_from_report: only single-stream reports are supported");
  const int n_a = r.n_a();
  BeamformingVectorSet<Real> out;
  out.n_g = r.n_g;
  out.n_sc = r.n_sc;
  out.vectors.resize(r.groups(), r.n_t);
  GivensAngles<Real> a;
  a.phi.resize(n_a);
  a.psi.resize(n_a);
  for (int g = 0; g < r.groups(); ++g) {
    for (int i = 0; i < n_a; ++i) {
      a.phi[i] = static_cast<Real>(dequantize_phi(r.phi_codes[g * n_a + i], r.phi_bits));
      a.psi[i] = static_cast<Real>(dequantize_psi(r.psi_codes[g * n_a + i], r.psi_bits));
    }
    out.vectors.row(g) = reconstruct_from_angles(a).transpose();
  }
  return out;
}

/// Packed big-endian payload: per group, per angle pair, phi then psi. The final byte is
/// zero padded; `bits` is the unpadded length.
struct PackedReport {
  std::vector<std::uint8_t> bytes;
  std::uint64_t bits = 0;
};

PackedReport serialize(const GivensReport& r);
/// `layout` supplies the report dimensions and bit widths; its code vectors are ignored.
GivensReport deserialize(std::span<const std::uint8_t> bytes, const GivensReport& layout);

// ---------------------------------------------------------------------------------------
// Learned compressor emulation

struct CorrelationStats {
  double mean = 1.0;
  double p1 = 1.0;
};

struct SizeStats {
  double median = 0;
  double min = 0;
  double max = 0;
  double stdev = 0;
};

/// Accuracy and feedback-size statistics of a trained autoencoder at one compression ratio.
struct LearnedCompressorProfile {
  double eta = 0.25;
  int latent_dim = 0;
  CorrelationStats los;
  CorrelationStats nlos;
  SizeStats size_bits;
  int n_vs = 62;
  int n_t = 16;
  int n_g = 16;

  void validate() const;
  static LearnedCompressorProfile load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

/// M = ceil(eta * 2 * n_vs * n_t).
int latent_dimension(double eta, int n_vs, int n_t);

/// Checks a profile file: schema, invariants, and agreement between an eta encoded in the
/// file name (e.g. "eta_1_4.json" or "eta0.25.json") and the payload. Throws ConfigError.
LearnedCompressorProfile validate_profile_file(const std::filesystem::path& path);

struct BetaParams {
  double a = 1;
  double b = 1;
  /// Set when the statistics describe a point mass (p1 == mean).
  std::optional<double> point;
  double mean() const { return point ? *point : a / (a + b); }
};

/// Beta distribution with the given mean and 1st percentile. Among the (up to two) solutions
/// the concentrated one is returned.
BetaParams fit_beta(double mean, double p1);

/// Precomputed sampling state for a profile.
class LearnedCompressor {
 public:
  explicit LearnedCompressor(LearnedCompressorProfile profile);

  const LearnedCompressorProfile& profile() const { return profile_; }
  const BetaParams& beta(bool los) const { return los ? los_beta_ : nlos_beta_; }
  double sample_correlation(bool los, Rng& rng) const;
  /// Truncated normal on [min, max], rounded to a whole byte.
  std::uint64_t sample_size_bits(Rng& rng) const;

 private:
  LearnedCompressorProfile profile_;
  BetaParams los_beta_;
  BetaParams nlos_beta_;
};

/// Returns a unit vector u with |u^H v| = rho, built as rho v + sqrt(1 - rho^2) e with e a
/// random unit vector orthogonal to v.
template <typename Derived>
CVectorX<typename Derived::RealScalar> inject_correlation(const Eigen::MatrixBase<Derived>& v_in, double rho, Rng& rng) {
  using Real = typename Derived::RealScalar;
  const CVectorX<Real> v = v_in.reshaped();
  if (rho >= 1.0) return v;
  std::normal_distribution<double> n(0.0, 1.0);
  CVectorX<Real> e(v.size());
  for (;;) {
    for (Eigen::Index i = 0; i < e.size(); ++i) {
      const double re = n(rng);
      const double im = n(rng);
      e(i) = {static_cast<Real>(re), static_cast<Real>(im)};
    }
    e -= v * v.dot(e);  // dot() conjugates v
    const Real norm = e.norm();
    if (norm > Real(1e-6)) {
      e /= norm;
      break;
    }
  }
  CVectorX<Real> out = static_cast<Real>(rho) * v + static_cast<Real>(std::sqrt(std::max(0.0, 1.0 - rho * rho))) * e;
  out /= out.norm();
  return out;
}

template <typename Real>
struct LearnedFeedback {
  BeamformingVectorSet<Real> vectors;
  std::vector<double> target_correlation;  // per row
  std::uint64_t bit_size = 0;
};

template <typename Real>
LearnedFeedback<Real> apply_learned_compression(const BeamformingVectorSet<Real>& v, const LearnedCompressor& codec,
                                                bool los, Rng& rng) {
  LearnedFeedback<Real> out;
  out.vectors = v;
  out.target_correlation.resize(v.n_vs());
  for (int r = 0; r < v.n_vs(); ++r) {
    const double rho = codec.sample_correlation(los, rng);
    out.target_correlation[r] = rho;
    out.vectors.vectors.row(r) = inject_correlation(v.vectors.row(r), rho, rng).transpose();
  }
  out.bit_size = codec.sample_size_bits(rng);
  return out;
}

template <typename Real>
LearnedFeedback<Real> apply_learned_compression(const BeamformingVectorSet<Real>& v,
                                                const LearnedCompressorProfile& profile, bool los, Rng& rng) {
  return apply_learned_compression(v, LearnedCompressor(profile), los, rng);
}

/// Mean over all n_sc subcarriers of |v_tilde^H v|, each sampled vector repeated n_g times.
template <typename Real>
double cosine_correlation(const BeamformingVectorSet<Real>& v, const BeamformingVectorSet<Real>& v_tilde) {
  if (v.n_sc != v_tilde.n_sc || v.n_t() != v_tilde.n_t())
    throw PreconditionError("cosine_correlation: dimension mismatch");
  if (v.n_vs() != (v.n_sc + v.n_g - 1) / v.n_g || v_tilde.n_vs() != (v_tilde.n_sc + v_tilde.n_g - 1) / v_tilde.n_g)
    throw PreconditionError("cosine_correlation: row count inconsistent with grouping");
  double sum = 0.0;
  for (int k = 0; k < v.n_sc; ++k)
    sum += static_cast<double>(std::abs(v_tilde.vectors.row(k / v_tilde.n_g).dot(v.vectors.row(k / v.n_g))));
  return sum / v.n_sc;
}

// ---------------------------------------------------------------------------------------
// Reports exchanged with the MAC

struct GivensConfig {
  int n_g = 16;
  QuantizerBits bits;

  static GivensConfig conf1() { return {16, {9, 7}}; }
  static GivensConfig conf2() { return {4, {7, 5}}; }
};

enum class ReportKind { givens, learned };

template <typename Real>
struct CsiReport {
  ReportKind kind = ReportKind::givens;
  std::variant<GivensReport, LearnedFeedback<Real>> payload;
  std::uint64_t bit_size = 0;
  LinkId link;
  double timestamp = 0.0;

  BeamformingVectorSet<Real> reconstruct() const {
    if (kind == ReportKind::givens) return reconstruct_from_report<Real>(std::get<GivensReport>(payload));
    return std::get<LearnedFeedback<Real>>(payload).vectors;
  }
};

/// Compresses `v` with either codec. `codec` selects the learned path when non-null.
template <typename Real>
CsiReport<Real> compress(const BeamformingVectorSet<Real>& v, const GivensConfig& givens, const LearnedCompressor* codec,
                         bool los, Rng& rng) {
  CsiReport<Real> r;
  if (codec) {
    auto fb = apply_learned_compression(v, *codec, los, rng);
    r.kind = ReportKind::learned;
    r.bit_size = fb.bit_size;
    r.payload = std::move(fb);
  } else {
    auto g = encode_givens(v, givens.bits);
    r.kind = ReportKind::givens;
    r.bit_size = g.bit_size();
    r.payload = std::move(g);
  }
  return r;
}

}  // namespace cobf
