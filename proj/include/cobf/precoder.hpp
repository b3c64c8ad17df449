// Cell-edge-aware zero forcing across coordinated BSSs, per-subcarrier SINR against true
// channels, effective-SINR link abstraction and MCS selection.
#pragma once

#include "cobf/channel.hpp"
#include "cobf/common.hpp"
#include "cobf/csi_codec.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace cobf {

/// Per-AP scheduled in-BSS STAs (S_j) and the OBSS STAs each AP must null (S̄_j).
struct ScheduleSet {
  std::map<ApId, std::vector<StaId>> in_bss;
  std::map<ApId, std::vector<StaId>> obss;

  /// Co-BF schedule: every AP nulls every STA scheduled by the other APs.
  static ScheduleSet coordinated(const std::map<ApId, std::vector<StaId>>& per_ap);
  /// Each AP serves its STAs without nulling anyone else.
  static ScheduleSet independent(const std::map<ApId, std::vector<StaId>>& per_ap);

  std::vector<StaId> all_stas() const;
  std::size_t size() const;
  /// Throws PreconditionError if an AP exceeds `max_per_bss` or a STA is scheduled twice.
  void validate(std::size_t max_per_bss) const;
  /// Removes `sta` from every list.
  void remove(StaId sta);
};

template <typename Real>
struct ApPrecoder {
  std::vector<StaId> stas;                // column order
  std::vector<CMatrixX<Real>> per_group;  // n_t x |S_j| for each subcarrier group
  std::vector<double> stream_power;       // watts per subcarrier
  int n_g = 1;
  int n_sc = 0;

  /// Precoding column of stream `idx` on subcarrier k.
  auto column(int k, int idx) const { return per_group[k / n_g].col(idx); }
};

template <typename Real>
struct PrecoderSet {
  std::map<ApId, ApPrecoder<Real>> aps;
};

template <typename Real>
using VectorSetMap = std::map<LinkId, BeamformingVectorSet<Real>>;

template <typename Real>
using ChannelMap = std::map<LinkId, ChannelTensor<Real>>;

inline constexpr double kMaxConditionNumber = 1e10;

/// Right pseudo-inverse of the stacked [in-BSS, OBSS] feedback vectors per subcarrier group,
/// restricted to the in-BSS columns, each normalized to unit norm, with `tx_power` split
/// equally across the streams. Throws PrecodingError when a stack is rank deficient.
template <typename Real>
PrecoderSet<Real> build_cea_zf(const VectorSetMap<Real>& vectors, const ScheduleSet& schedule, double tx_power) {
  PrecoderSet<Real> out;
  for (const auto& [ap, served] : schedule.in_bss) {
    if (served.empty()) continue;
    std::vector<const BeamformingVectorSet<Real>*> stack;
    auto push = [&](StaId sta) {
      const auto it = vectors.find(LinkId{sta, ap});
      if (it == vectors.end()) throw PreconditionError("build_cea_zf: missing feedback for a scheduled STA");
      stack.push_back(&it->second);
    };
    for (StaId s : served) push(s);
    if (const auto it = schedule.obss.find(ap); it != schedule.obss.end())
      for (StaId s : it->second) push(s);

    const int n_g = stack.front()->n_g;
    const int n_sc = stack.front()->n_sc;
    const int n_t = stack.front()->n_t();
    for (const auto* v : stack)
      if (v->n_g != n_g || v->n_sc != n_sc || v->n_t() != n_t)
        throw PreconditionError("build_cea_zf: feedback grids differ across STAs");
    const int n = static_cast<int>(stack.size());
    const int keep = static_cast<int>(served.size());
    if (n > n_t) throw PrecodingError("build_cea_zf: more streams than antennas");

    ApPrecoder<Real> pre;
    pre.stas = served;
    pre.n_g = n_g;
    pre.n_sc = n_sc;
    pre.stream_power.assign(keep, tx_power / keep);
    const int groups = stack.front()->n_vs();
    pre.per_group.reserve(groups);
    Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, Eigen::Dynamic> v_cea(n_t, n);
    for (int g = 0; g < groups; ++g) {
      for (int c = 0; c < n; ++c) v_cea.col(c) = stack[c]->vectors.row(g).transpose();
      const Eigen::JacobiSVD<decltype(v_cea)> svd(v_cea);
      const auto& sv = svd.singularValues();
      const double lo = static_cast<double>(sv(n - 1));
      if (!(lo > 0.0) || static_cast<double>(sv(0)) / lo > kMaxConditionNumber)
        throw PrecodingError("build_cea_zf: rank-deficient feedback stack");
      const auto gram = (v_cea.adjoint() * v_cea).eval();
      CMatrixX<Real> w = v_cea * gram.ldlt().solve(decltype(gram)::Identity(n, n));
      CMatrixX<Real> kept = w.leftCols(keep);
      for (int c = 0; c < keep; ++c) kept.col(c).normalize();
      pre.per_group.push_back(std::move(kept));
    }
    out.aps.emplace(ap, std::move(pre));
  }
  return out;
}

/// build_cea_zf that shrinks the schedule on rank deficiency: the failing AP first drops its
/// most recently added OBSS STA, then its last in-BSS STA. `schedule` is updated in place.
template <typename Real>
PrecoderSet<Real> build_cea_zf_with_fallback(const VectorSetMap<Real>& vectors, ScheduleSet& schedule, double tx_power) {
  for (;;) {
    try {
      return build_cea_zf(vectors, schedule, tx_power);
    } catch (const PrecodingError&) {
      bool dropped = false;
      for (auto& [ap, served] : schedule.in_bss) {
        if (served.empty()) continue;
        ScheduleSet probe;
        probe.in_bss[ap] = served;
        probe.obss[ap] = schedule.obss[ap];
        try {
          build_cea_zf(vectors, probe, tx_power);
          continue;
        } catch (const PrecodingError&) {
        }
        auto& obss = schedule.obss[ap];
        if (!obss.empty()) {
          obss.pop_back();
        } else {
          schedule.remove(served.back());
        }
        dropped = true;
        break;
      }
      if (!dropped) throw;
    }
  }
}

/// Per-subcarrier decomposition of the SINR denominator.
struct SinrTerms {
  std::vector<double> signal;
  std::vector<double> intra;
  std::vector<double> inter;
  double noise = 0.0;

  std::vector<double> sinr() const {
    std::vector<double> s(signal.size());
    for (std::size_t k = 0; k < s.size(); ++k) s[k] = signal[k] / (intra[k] + inter[k] + noise);
    return s;
  }
};

template <typename Real>
std::map<StaId, SinrTerms> sinr_terms(const ChannelMap<Real>& true_channels, const PrecoderSet<Real>& precoders,
                                      const ScheduleSet& schedule, double noise_power) {
  auto channel = [&](StaId sta, ApId ap) -> const ChannelTensor<Real>& {
    const auto it = true_channels.find(LinkId{sta, ap});
    if (it == true_channels.end()) throw PreconditionError("sinr: missing channel for a scheduled link");
    return it->second;
  };

  std::map<StaId, SinrTerms> out;
  for (const auto& [ap, served] : schedule.in_bss) {
    if (served.empty()) continue;
    const auto pit = precoders.aps.find(ap);
    if (pit == precoders.aps.end() || pit->second.stas != served)
      throw PreconditionError("sinr: precoders and schedule are inconsistent");
    const ApPrecoder<Real>& own = pit->second;
    for (std::size_t i = 0; i < served.size(); ++i) {
      const ChannelTensor<Real>& h = channel(served[i], ap);
      if (h.n_sc() != own.n_sc) throw PreconditionError("sinr: channel and precoder subcarrier counts differ");
      SinrTerms t;
      t.noise = noise_power;
      t.signal.assign(h.n_sc(), 0.0);
      t.intra.assign(h.n_sc(), 0.0);
      t.inter.assign(h.n_sc(), 0.0);
      for (int k = 0; k < h.n_sc(); ++k) {
        const auto hk = h.gains.row(k);
        for (std::size_t s = 0; s < served.size(); ++s) {
          const double g = static_cast<double>(std::norm((hk * own.column(k, static_cast<int>(s)))(0, 0)));
          (s == i ? t.signal[k] : t.intra[k]) += g * own.stream_power[s];
        }
      }
      for (const auto& [other_ap, other] : precoders.aps) {
        if (other_ap == ap) continue;
        const ChannelTensor<Real>& hi = channel(served[i], other_ap);
        for (int k = 0; k < hi.n_sc(); ++k) {
          const auto hk = hi.gains.row(k);
          for (std::size_t r = 0; r < other.stas.size(); ++r)
            t.inter[k] += static_cast<double>(std::norm((hk * other.column(k, static_cast<int>(r)))(0, 0))) *
                          other.stream_power[r];
        }
      }
      out.emplace(served[i], std::move(t));
    }
  }
  return out;
}

/// SINR per scheduled STA and subcarrier using the true channels.
template <typename Real>
std::map<StaId, std::vector<double>> sinr_per_subcarrier(const ChannelMap<Real>& true_channels,
                                                         const PrecoderSet<Real>& precoders,
                                                         const ScheduleSet& schedule, const LsNoiseParams& noise) {
  std::map<StaId, std::vector<double>> out;
  for (auto& [sta, t] : sinr_terms(true_channels, precoders, schedule, noise.noise_per_subcarrier()))
    out.emplace(sta, t.sinr());
  return out;
}

/// Arithmetic mean of linear per-subcarrier SINRs.
double effective_sinr(std::span<const double> per_subcarrier);

struct McsEntry {
  int index = 0;
  std::string modulation;
  std::string code_rate;
  double data_bits_per_sc_per_symbol = 0.0;
  double min_sinr_db = 0.0;
};

class McsTable {
 public:
  McsTable() = default;
  explicit McsTable(std::vector<McsEntry> entries);

  /// Built-in table; identical to data/mcs_table.json.
  static const McsTable& standard();
  static McsTable load(const std::filesystem::path& path);

  std::size_t size() const { return entries_.size(); }
  const McsEntry& at(int index) const { return entries_.at(static_cast<std::size_t>(index)); }
  const std::vector<McsEntry>& entries() const { return entries_; }
  /// Data bits per OFDM symbol over `data_subcarriers`.
  std::uint64_t bits_per_symbol(int index, int data_subcarriers) const;

 private:
  void validate() const;
  std::vector<McsEntry> entries_;
};

/// Highest MCS whose threshold is <= eff_sinr; MCS 0 below the lowest threshold.
int select_mcs(double eff_sinr_linear, const McsTable& table);

/// Logistic MPDU error model anchored at 10% PER on each MCS threshold.
struct PerModel {
  double slope_per_db = 2.0;
  double per(double eff_sinr_linear, const McsEntry& mcs) const;
};

}  // namespace cobf
