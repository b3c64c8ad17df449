#include "cobf/precoder.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

namespace cobf {

ScheduleSet ScheduleSet::coordinated(const std::map<ApId, std::vector<StaId>>& per_ap) {
  ScheduleSet s;
  for (const auto& [ap, stas] : per_ap) {
    s.in_bss[ap] = stas;
    auto& obss = s.obss[ap];
    for (const auto& [other, other_stas] : per_ap)
      if (other != ap) obss.insert(obss.end(), other_stas.begin(), other_stas.end());
  }
  return s;
}

ScheduleSet ScheduleSet::independent(const std::map<ApId, std::vector<StaId>>& per_ap) {
  ScheduleSet s;
  for (const auto& [ap, stas] : per_ap) {
    s.in_bss[ap] = stas;
    s.obss[ap] = {};
  }
  return s;
}

std::vector<StaId> ScheduleSet::all_stas() const {
  std::vector<StaId> out;
  for (const auto& [ap, stas] : in_bss) out.insert(out.end(), stas.begin(), stas.end());
  return out;
}

std::size_t ScheduleSet::size() const {
  std::size_t n = 0;
  for (const auto& [ap, stas] : in_bss) n += stas.size();
  return n;
}

void ScheduleSet::validate(std::size_t max_per_bss) const {
  std::set<StaId> seen;
  for (const auto& [ap, stas] : in_bss) {
    if (stas.size() > max_per_bss) throw PreconditionError("schedule: too many STAs in one BSS");
    for (StaId s : stas)
      if (!seen.insert(s).second) throw PreconditionError("schedule: STA scheduled twice");
  }
  for (const auto& [ap, stas] : obss)
    for (StaId s : stas) {
      if (!seen.contains(s)) throw PreconditionError("schedule: OBSS entry for an unscheduled STA");
      const auto own = in_bss.find(ap);
      if (own != in_bss.end() && std::find(own->second.begin(), own->second.end(), s) != own->second.end())
        throw PreconditionError("schedule: STA listed as both in-BSS and OBSS for one AP");
    }
}

void ScheduleSet::remove(StaId sta) {
  for (auto* m : {&in_bss, &obss})
    for (auto& [ap, stas] : *m) std::erase(stas, sta);
}

double effective_sinr(std::span<const double> per_subcarrier) {
  if (per_subcarrier.empty()) throw PreconditionError("effective_sinr: empty input");
  double sum = 0.0;
  for (double s : per_subcarrier) {
    if (!(s >= 0.0)) throw PreconditionError("effective_sinr: SINR must be nonnegative");
    sum += s;
  }
  return sum / static_cast<double>(per_subcarrier.size());
}

McsTable::McsTable(std::vector<McsEntry> entries) : entries_(std::move(entries)) { validate(); }

void McsTable::validate() const {
  if (entries_.empty()) throw ConfigError("mcs table: empty");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const McsEntry& e = entries_[i];
    if (e.index != static_cast<int>(i)) throw ConfigError("mcs table: indices must be 0, 1, 2, ...");
    if (!(e.data_bits_per_sc_per_symbol > 0)) throw ConfigError("mcs table: data rate must be positive");
    if (i > 0) {
      if (!(e.min_sinr_db > entries_[i - 1].min_sinr_db)) throw ConfigError("mcs table: thresholds must increase");
      if (!(e.data_bits_per_sc_per_symbol > entries_[i - 1].data_bits_per_sc_per_symbol))
        throw ConfigError("mcs table: data rates must increase");
    }
  }
}

const McsTable& McsTable::standard() {
  // EHT MCS 0-13 with code rate times bits per constellation symbol; thresholds for 10% PER
  // with 1500-byte MPDUs over AWGN.
  static const McsTable table({
      {0, "BPSK", "1/2", 0.5, 2.0},
      {1, "QPSK", "1/2", 1.0, 5.0},
      {2, "QPSK", "3/4", 1.5, 8.0},
      {3, "16-QAM", "1/2", 2.0, 11.0},
      {4, "16-QAM", "3/4", 3.0, 15.0},
      {5, "64-QAM", "2/3", 4.0, 18.0},
      {6, "64-QAM", "3/4", 4.5, 20.0},
      {7, "64-QAM", "5/6", 5.0, 22.0},
      {8, "256-QAM", "3/4", 6.0, 26.0},
      {9, "256-QAM", "5/6", 20.0 / 3.0, 28.0},
      {10, "1024-QAM", "3/4", 7.5, 31.0},
      {11, "1024-QAM", "5/6", 25.0 / 3.0, 33.0},
      {12, "4096-QAM", "3/4", 9.0, 36.0},
      {13, "4096-QAM", "5/6", 10.0, 39.0},
  });
  return table;
}

McsTable McsTable::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open MCS table " + path.string());
  std::vector<McsEntry> entries;
  try {
    for (const auto& e : nlohmann::json::parse(is)) {
      McsEntry m;
      e.at("index").get_to(m.index);
      e.at("modulation").get_to(m.modulation);
      e.at("code_rate").get_to(m.code_rate);
      e.at("data_bits_per_sc_per_symbol").get_to(m.data_bits_per_sc_per_symbol);
      e.at("min_sinr_db").get_to(m.min_sinr_db);
      entries.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("MCS table " + path.string() + ": " + e.what());
  }
  return McsTable(std::move(entries));
}

std::uint64_t McsTable::bits_per_symbol(int index, int data_subcarriers) const {
  if (data_subcarriers < 1) throw PreconditionError("bits_per_symbol: need at least one data subcarrier");
  // The small offset keeps exact products such as 980 * 20/3 from rounding down.
  return static_cast<std::uint64_t>(std::floor(data_subcarriers * at(index).data_bits_per_sc_per_symbol + 1e-9));
}

int select_mcs(double eff_sinr_linear, const McsTable& table) {
  if (!(eff_sinr_linear > 0.0)) return 0;
  int best = 0;
  for (const McsEntry& e : table.entries())
    if (db_to_linear(e.min_sinr_db) <= eff_sinr_linear) best = e.index;
  return best;
}

double PerModel::per(double eff_sinr_linear, const McsEntry& mcs) const {
  if (!(eff_sinr_linear > 0.0)) return 1.0;
  const double margin = linear_to_db(eff_sinr_linear) - mcs.min_sinr_db;
  return 1.0 / (1.0 + 9.0 * std::exp(slope_per_db * margin));
}

}  // namespace cobf
