#include "cobf/mac/params.hpp"

namespace cobf::mac {

namespace {

bool power_of_two(int x) { return x > 0 && (x & (x - 1)) == 0; }

}  // namespace

void MacParams::validate() const {
  if (!(txop_limit > 0 && uhr_preamble > 0 && legacy_preamble > 0 && legacy_rate > 0 && sifs > 0 && difs > 0 &&
        slot > 0 && csi_max_age > 0 && subcarrier_spacing > 0 && guard_interval >= 0 && ltf_duration > 0))
    throw ConfigError("mac: durations and rates must be positive");
  if (payload_bytes < 1 || mac_header_bits < 0 || mpdu_delimiter_bits < 0 || service_bits < 0 || tail_bits < 0)
    throw ConfigError("mac: invalid frame field lengths");
  if (!power_of_two(cw_min) || !power_of_two(cw_max) || cw_min > cw_max)
    throw ConfigError("mac: cw_min and cw_max must be powers of two with cw_min <= cw_max");
  if (n_ltf < 1 || retry_limit < 0 || max_stas_per_bss < 1) throw ConfigError("mac: invalid counts");
  if (feedback_data_subcarriers < 1 || data_subcarriers_80 < 1 || data_subcarriers_40 < 1)
    throw ConfigError("mac: subcarrier counts must be positive");
}

double control_frame_airtime(const MacParams& p, int bytes) {
  return p.legacy_preamble + 8.0 * bytes / p.legacy_rate;
}

std::int64_t ampdu_symbols(const MacParams& p, int num_mpdus, int mcs, int data_subcarriers, const McsTable& table) {
  if (num_mpdus < 1) throw PreconditionError("ampdu_airtime: need at least one MPDU");
  const auto bits = static_cast<std::int64_t>(num_mpdus) * p.mpdu_bits() + p.service_bits + p.tail_bits;
  const auto per_symbol = static_cast<std::int64_t>(table.bits_per_symbol(mcs, data_subcarriers));
  return (bits + per_symbol - 1) / per_symbol;
}

double ampdu_airtime(const MacParams& p, int num_mpdus, int mcs, int data_subcarriers, const McsTable& table) {
  return p.uhr_preamble + ampdu_symbols(p, num_mpdus, mcs, data_subcarriers, table) * p.symbol_duration();
}

int max_mpdus_in_symbols(const MacParams& p, std::int64_t symbols, int mcs, int data_subcarriers, const McsTable& table) {
  if (symbols <= 0) return 0;
  const auto capacity = symbols * static_cast<std::int64_t>(table.bits_per_symbol(mcs, data_subcarriers));
  const auto usable = capacity - p.service_bits - p.tail_bits;
  return usable <= 0 ? 0 : static_cast<int>(usable / p.mpdu_bits());
}

double ndp_airtime(const MacParams& p) { return p.uhr_preamble + p.n_ltf * p.ltf_duration; }

double feedback_airtime(const MacParams& p, std::uint64_t report_bits, const McsTable& table) {
  const auto bits = report_bits + static_cast<std::uint64_t>(p.mac_header_bits + p.service_bits + p.tail_bits);
  const auto per_symbol = table.bits_per_symbol(p.feedback_mcs, p.feedback_data_subcarriers);
  return p.uhr_preamble + static_cast<double>((bits + per_symbol - 1) / per_symbol) * p.symbol_duration();
}

}  // namespace cobf::mac
