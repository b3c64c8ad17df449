// MAC timing parameters, control-frame sizes and frame airtimes.
#pragma once

#include "cobf/common.hpp"
#include "cobf/precoder.hpp"

#include <cstdint>

namespace cobf::mac {

/// Control-frame payload sizes in bytes, sent at the legacy rate. Per-STA terms grow with the
/// number of addressed STAs.
struct FrameSizes {
  int version = 1;
  int rts = 20;
  int cts = 14;
  int block_ack = 32;
  int cobf_invite = 28;
  int cobf_response = 32;
  int sounding_invite = 28;
  int sounding_response = 32;
  int ndpa_base = 17;
  int ndpa_per_sta = 4;
  int bfrp_base = 28;
  int bfrp_per_sta = 6;
  int trigger_base = 28;
  int trigger_per_sta = 6;

  int ndpa(int stas) const { return ndpa_base + ndpa_per_sta * stas; }
  int bfrp(int stas) const { return bfrp_base + bfrp_per_sta * stas; }
  int trigger(int stas) const { return trigger_base + trigger_per_sta * stas; }
};

struct MacParams {
  double txop_limit = 5.484e-3;
  int cw_min = 16;
  int cw_max = 1024;
  int payload_bytes = 1500;
  int mac_header_bits = 240;
  int mpdu_delimiter_bits = 32;
  int service_bits = 16;
  int tail_bits = 18;
  double uhr_preamble = 88.8e-6;
  double legacy_preamble = 20e-6;
  double legacy_rate = 6e6;
  double sifs = 16e-6;
  double difs = 34e-6;
  double slot = 9e-6;
  double csi_max_age = 25e-3;

  double subcarrier_spacing = 78.125e3;
  double guard_interval = 0.8e-6;
  /// EHT-LTF symbol (2x LTF plus 1.6 us GI) and LTFs per NDP.
  double ltf_duration = 8e-6;
  int n_ltf = 16;
  int retry_limit = 7;
  std::size_t max_stas_per_bss = 2;
  /// CSI feedback frames: fixed MCS over a 20 MHz RU.
  int feedback_mcs = 4;
  int feedback_data_subcarriers = 234;
  int data_subcarriers_80 = 980;
  int data_subcarriers_40 = 468;
  FrameSizes frames;

  void validate() const;

  double symbol_duration() const { return 1.0 / subcarrier_spacing + guard_interval; }
  std::int64_t mpdu_bits() const { return mpdu_delimiter_bits + mac_header_bits + 8LL * payload_bytes; }
};

/// Legacy-rate control frame: preamble plus payload bits at the legacy rate.
double control_frame_airtime(const MacParams& p, int bytes);

/// UHR A-MPDU carrying `num_mpdus` MPDUs at `mcs` over `data_subcarriers`.
double ampdu_airtime(const MacParams& p, int num_mpdus, int mcs, int data_subcarriers,
                     const McsTable& table = McsTable::standard());

/// OFDM symbols needed for an A-MPDU (excluding the preamble).
std::int64_t ampdu_symbols(const MacParams& p, int num_mpdus, int mcs, int data_subcarriers, const McsTable& table);

/// Largest MPDU count whose A-MPDU fits in `symbols` data symbols.
int max_mpdus_in_symbols(const MacParams& p, std::int64_t symbols, int mcs, int data_subcarriers, const McsTable& table);

/// Sounding NDP: preamble plus n_ltf LTF symbols.
double ndp_airtime(const MacParams& p);

/// Uplink CSI feedback frame carrying `report_bits` (one or more reports) plus MAC framing.
double feedback_airtime(const MacParams& p, std::uint64_t report_bits, const McsTable& table = McsTable::standard());

}  // namespace cobf::mac
