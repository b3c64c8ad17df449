#include "cobf/mac/simulator.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <set>

namespace cobf::mac {

const char* to_string(Mode m) {
  switch (m) {
    case Mode::cobf_st: return "cobf_st";
    case Mode::cobf_ae: return "cobf_ae";
    case Mode::legacy80: return "legacy80";
    case Mode::legacy40: return "legacy40";
  }
  return "unknown";
}

const char* to_string(TxopMode m) {
  switch (m) {
    case TxopMode::cobf: return "cobf";
    case TxopMode::legacy: return "legacy";
    case TxopMode::declined: return "declined->legacy";
  }
  return "unknown";
}

Mode parse_mode(const std::string& s) {
  for (Mode m : {Mode::cobf_st, Mode::cobf_ae, Mode::legacy80, Mode::legacy40})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown transmission mode '" + s + "'");
}

namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

template <typename T, typename F>
std::string join(const std::vector<T>& v, F f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += f(v[i]);
  }
  return out;
}

}  // namespace

void write_txop_csv_header(std::ostream& os) {
  os << "deployment,owner,mode,t_start,t_end,duration,sounding_airtime,data_airtime,csi_bits,scheduled,mcs,"
        "delivered,failed\n";
}

void write_txop_csv_row(std::ostream& os, const TxopRecord& r, int deployment) {
  auto num = [](int x) { return std::to_string(x); };
  os << deployment << ',' << r.owner.value << ',' << to_string(r.mode) << ',' << fmt(r.t_start) << ','
     << fmt(r.t_end) << ',' << fmt(r.duration()) << ',' << fmt(r.sounding_airtime) << ',' << fmt(r.data_airtime)
     << ',' << r.csi_bits << ',' << join(r.scheduled, [](StaId s) { return std::to_string(s.value); }) << ','
     << join(r.mcs, num) << ',' << join(r.delivered, num) << ',' << join(r.failed, num) << '\n';
}

void SimConfig::validate() const {
  mac.validate();
  channel.validate();
  traffic.validate();
  if (!(duration > 0.0)) throw ConfigError("sim: duration must be positive");
  if (full_buffer_level < 1) throw ConfigError("sim: full_buffer_level must be positive");
  if (!(mobility_step > 0.0 && direction_period > 0.0)) throw ConfigError("sim: mobility periods must be positive");
  if (givens.n_g < 1) throw ConfigError("sim: givens n_g must be positive");
  if (mode == Mode::cobf_ae && !profile) throw ConfigError("sim: cobf_ae needs a learned compressor profile");
  if (profile) {
    profile->validate();
    if (profile->n_t != channel.n_t) throw ConfigError("sim: profile n_t differs from the channel's");
    if (profile->n_vs != (channel.n_sc + profile->n_g - 1) / profile->n_g)
      throw ConfigError("sim: profile n_vs inconsistent with n_sc and n_g");
  }
  if (mac.data_subcarriers_80 > channel.n_sc || 2 * mac.data_subcarriers_40 > channel.n_sc)
    throw ConfigError("sim: data subcarriers exceed the channel's subcarriers");
}

std::map<ApId, std::vector<StaId>> schedule_stas(std::span<const HolEntry> backlog, std::size_t max_per_bss) {
  std::vector<HolEntry> order(backlog.begin(), backlog.end());
  std::sort(order.begin(), order.end(), [](const HolEntry& a, const HolEntry& b) {
    return a.t_hol != b.t_hol ? a.t_hol < b.t_hol : a.sta < b.sta;
  });
  std::map<ApId, std::vector<StaId>> out;
  for (const HolEntry& e : order) {
    auto& list = out[e.ap];
    if (list.size() < max_per_bss) list.push_back(e.sta);
  }
  return out;
}

SoundingTimeline sounding_timeline(const MacParams& p, bool joint, const std::vector<std::vector<std::uint64_t>>& rounds,
                                   const McsTable& table) {
  SoundingTimeline tl;
  double t = 0.0;
  if (joint) {
    t += control_frame_airtime(p, p.frames.sounding_invite) + p.sifs;
    t += control_frame_airtime(p, p.frames.sounding_response) + p.sifs;
  }
  for (const auto& round : rounds) {
    if (round.empty()) throw PreconditionError("sounding_timeline: empty round");
    const int n = static_cast<int>(round.size());
    t += control_frame_airtime(p, p.frames.ndpa(n)) + p.sifs;
    tl.ndp_offsets.push_back(t);
    t += ndp_airtime(p) + p.sifs;
    t += control_frame_airtime(p, p.frames.bfrp(n)) + p.sifs;
    for (std::uint64_t bits : round) {
      const double fb = feedback_airtime(p, bits, table);
      tl.feedback_airtime += fb;
      tl.total_bits += bits;
      t += fb + p.sifs;
    }
  }
  tl.duration = t;
  return tl;
}

double rts_cts_airtime(const MacParams& p) {
  return control_frame_airtime(p, p.frames.rts) + p.sifs + control_frame_airtime(p, p.frames.cts) + p.sifs;
}

// ---------------------------------------------------------------------------------------

struct Simulator::Impl {
  struct Link {
    ChannelTensor<double> h;
    double budget = 0.0;
    int walls = 0;
    std::uint64_t evolutions = 0;
    /// h.gains lags h.profile until the next full-band request.
    bool gains_current = true;
  };
  struct Csi {
    BeamformingVectorSet<double> v;
    double timestamp = 0.0;
  };
  struct Sta {
    ApId ap;
    Vec3 pos;
    double heading = 0.0;
    std::deque<Packet> queue;
    std::optional<BatchArrivals> arrivals;
    std::uint64_t delivered_bits = 0;
    std::uint64_t generated = 0;
  };
  struct Ap {
    Vec3 pos;
    int room = 0;
    int medium = 0;
    DcfState dcf;
    Rng rng;
  };
  struct Medium {
    SlotGrid grid;
    bool busy = false;
    std::uint64_t token = 0;
    std::int64_t expiry_slot = 0;
    bool armed = false;
  };
  struct Delivery {
    StaId sta;
    std::vector<Packet> packets;
    std::vector<bool> ok;
    double t_rec = 0.0;
  };

  SimConfig cfg;
  std::uint64_t seed;
  LsNoiseParams noise;
  double tx_power = 0.0;
  double noise_power = 0.0;
  std::optional<LearnedCompressor> codec;
  int feedback_ng = 16;

  std::vector<Sta> stas;
  std::vector<Ap> aps;
  std::vector<Link> links;  // sta * num_aps + ap
  std::vector<std::optional<Csi>> csi;
  std::vector<Medium> media;

  EventQueue events;
  Rng mobility_rng, estimation_rng, compression_rng, link_rng;
  RunCounters counters;
  std::uint64_t inflight_count = 0;
  std::uint64_t next_packet_id = 0;
  std::vector<Packet> received;
  std::vector<TxopRecord> txops;
  std::map<int, std::vector<Delivery>> pending;  // per medium
  std::map<StaId, SinrTerms> last_terms;
  std::uint64_t mobility_steps = 0;
  bool initialized = false;

  Impl(const SimConfig& c, const Deployment& dep, std::uint64_t s)
      : cfg(c),
        seed(s),
        mobility_rng(derive_seed(s, stream::kMobility)),
        estimation_rng(derive_seed(s, stream::kEstimation)),
        compression_rng(derive_seed(s, stream::kCompression)),
        link_rng(derive_seed(s, stream::kLinkErrors)) {
    cfg.validate();
    if (dep.ap_rooms.size() != 2) throw PreconditionError("simulator: exactly two APs are supported");
    noise = cfg.noise.resolve(cfg.channel);
    tx_power = noise.pilot_energy;
    noise_power = noise.noise_per_subcarrier();
    if (cfg.mode == Mode::cobf_ae) {
      codec.emplace(*cfg.profile);
      feedback_ng = cfg.profile->n_g;
    } else {
      feedback_ng = cfg.givens.n_g;
    }

    const SceneLayout& scene = cfg.channel.scene;
    for (std::size_t a = 0; a < dep.ap_rooms.size(); ++a) {
      Ap ap;
      ap.room = dep.ap_rooms[a];
      ap.pos = scene.ap_position(ap.room);
      ap.medium = cfg.mode == Mode::legacy40 ? static_cast<int>(a) : 0;
      ap.dcf.cw = cfg.mac.cw_min;
      ap.rng.seed(derive_seed(s, stream::kMac, a));
      aps.push_back(std::move(ap));
    }
    media.resize(cfg.mode == Mode::legacy40 ? aps.size() : 1);

    std::uniform_real_distribution<double> angle(0.0, 2.0 * kPi);
    for (std::size_t i = 0; i < dep.stas.size(); ++i) {
      const StaPlacement& p = dep.stas[i];
      if (p.ap.value < 0 || p.ap.value >= static_cast<int>(aps.size()))
        throw PreconditionError("simulator: STA attached to an unknown AP");
      if (scene.room_of(p.position) != aps[p.ap.value].room)
        throw PreconditionError("simulator: STA must be placed in its AP's room");
      Sta sta;
      sta.ap = p.ap;
      sta.pos = p.position;
      sta.heading = angle(mobility_rng);
      if (!cfg.full_buffer) sta.arrivals.emplace(cfg.traffic, derive_seed(s, stream::kTraffic, i));
      stas.push_back(std::move(sta));
    }

    for (std::size_t i = 0; i < stas.size(); ++i)
      for (std::size_t a = 0; a < aps.size(); ++a) {
        Link l;
        const std::uint64_t idx = i * aps.size() + a;
        l.h = generate_channel<double>(cfg.channel, stas[i].pos, aps[a].pos, derive_seed(s, stream::kChannel, idx));
        l.h.sta = StaId{static_cast<int>(i)};
        l.h.ap = ApId{static_cast<int>(a)};
        l.walls = scene.walls_between(aps[stas[i].ap.value].room, aps[a].room);
        l.budget = budget(stas[i].pos, aps[a].pos, l.walls);
        links.push_back(std::move(l));
      }
    csi.resize(links.size());
  }

  double budget(const Vec3& sta, const Vec3& ap, int walls) const {
    return db_to_linear(-cfg.channel.pathloss_db((sta - ap).norm(), walls));
  }

  std::size_t link_index(LinkId l) const {
    if (l.sta.value < 0 || l.sta.value >= static_cast<int>(stas.size()) || l.ap.value < 0 ||
        l.ap.value >= static_cast<int>(aps.size()))
      throw PreconditionError("simulator: unknown link");
    return static_cast<std::size_t>(l.sta.value) * aps.size() + static_cast<std::size_t>(l.ap.value);
  }

  // Advances the link's delay profile to t without touching the frequency response.
  Link& advance(LinkId id, double t) {
    const std::size_t idx = link_index(id);
    Link& l = links[idx];
    // Requests marginally in the past (reused sounding estimates) see the current state.
    if (t <= l.h.timestamp) return l;
    const double b = budget(stas[id.sta.value].pos, aps[id.ap.value].pos, l.walls);
    DelayProfile& p = *l.h.profile;
    if (b != l.budget) {
      const double scale = b / l.budget;
      p.taps *= std::sqrt(scale);
      for (double& tp : p.tap_power) tp *= scale;
      l.budget = b;
    }
    evolve_profile(p, t - l.h.timestamp, cfg.channel,
                   derive_seed(seed, stream::kChannelEvolution, (idx << 32) | l.evolutions++));
    l.h.timestamp = t;
    l.gains_current = false;
    return l;
  }

  const ChannelTensor<double>& channel_at(LinkId id, double t) {
    Link& l = advance(id, t);
    if (!l.gains_current) {
      l.h.gains = detail::frequency_response<double>(cfg.channel, *l.h.profile);
      l.gains_current = true;
    }
    return l.h;
  }

  // -- traffic --------------------------------------------------------------------------

  void enqueue(StaId sta, double t_arr, int count) {
    Sta& s = stas.at(static_cast<std::size_t>(sta.value));
    for (int i = 0; i < count; ++i) {
      Packet p;
      p.id = next_packet_id++;
      p.dest = sta;
      p.size_bytes = cfg.mac.payload_bytes;
      p.t_arr = t_arr;
      s.queue.push_back(p);
    }
    s.generated += static_cast<std::uint64_t>(count);
    counters.generated += static_cast<std::uint64_t>(count);
  }

  void top_up(double now) {
    for (std::size_t i = 0; i < stas.size(); ++i) {
      const auto have = static_cast<int>(stas[i].queue.size());
      if (have < cfg.full_buffer_level) enqueue(StaId{static_cast<int>(i)}, now, cfg.full_buffer_level - have);
    }
  }

  bool has_traffic(ApId ap) const {
    for (const Sta& s : stas)
      if (s.ap == ap && !s.queue.empty()) return true;
    return false;
  }

  std::vector<HolEntry> backlog(std::initializer_list<ApId> bss) const {
    std::vector<HolEntry> out;
    for (std::size_t i = 0; i < stas.size(); ++i) {
      const Sta& s = stas[i];
      if (s.queue.empty() || std::find(bss.begin(), bss.end(), s.ap) == bss.end()) continue;
      out.push_back({StaId{static_cast<int>(i)}, s.ap, s.queue.front().t_arr});
    }
    return out;
  }

  std::vector<Packet> take(StaId sta, int n) {
    auto& q = stas[sta.value].queue;
    std::vector<Packet> out(q.begin(), q.begin() + n);
    q.erase(q.begin(), q.begin() + n);
    inflight_count += static_cast<std::uint64_t>(n);
    return out;
  }

  void settle(std::vector<Delivery>& deliveries) {
    for (Delivery& d : deliveries) {
      Sta& s = stas[d.sta.value];
      std::vector<Packet> retry;
      for (std::size_t i = 0; i < d.packets.size(); ++i) {
        Packet& p = d.packets[i];
        if (d.ok[i]) {
          p.t_rec = d.t_rec;
          s.delivered_bits += 8ULL * static_cast<std::uint64_t>(p.size_bytes);
          received.push_back(p);
          ++counters.received;
        } else if (++p.retry_count > cfg.mac.retry_limit) {
          ++counters.dropped;
        } else {
          retry.push_back(p);
        }
      }
      s.queue.insert(s.queue.begin(), retry.begin(), retry.end());
      inflight_count -= d.packets.size();
    }
    deliveries.clear();
  }

  void check_conservation() const {
    std::uint64_t queued = 0;
    for (const Sta& s : stas) queued += s.queue.size();
    if (counters.generated != counters.received + counters.dropped + queued + inflight_count)
      throw InvariantError("packet conservation violated");
  }

  // -- link abstraction -----------------------------------------------------------------

  int data_subcarriers() const {
    return cfg.mode == Mode::legacy40 ? cfg.mac.data_subcarriers_40 : cfg.mac.data_subcarriers_80;
  }

  /// First row of the subcarrier block carrying an AP's legacy data.
  int legacy_first_row(ApId ap) const {
    return cfg.mode == Mode::legacy40 ? ap.value * (cfg.channel.n_sc / 2) : 0;
  }

  struct LinkOutcome {
    int mcs = 0;
    double per = 1.0;
  };

  LinkOutcome outcome(double eff) const {
    LinkOutcome o;
    o.mcs = select_mcs(eff, cfg.mcs);
    o.per = cfg.per.per(eff, cfg.mcs.at(o.mcs));
    return o;
  }

  std::vector<bool> draw_errors(std::size_t n, double per) {
    std::bernoulli_distribution fail(std::clamp(per, 0.0, 1.0));
    std::vector<bool> ok(n);
    for (std::size_t i = 0; i < n; ++i) ok[i] = !fail(link_rng);
    return ok;
  }

  void check_bound(const TxopRecord& r) const {
    if (r.duration() > cfg.mac.txop_limit + 1e-12)
      throw InvariantError("TXOP of " + fmt(r.duration()) + " s exceeds the TXOP limit");
    if (r.sounding_airtime < 0 || r.data_airtime < 0 || r.sounding_airtime + r.data_airtime > r.duration() + 1e-12)
      throw InvariantError("TXOP airtimes inconsistent with its duration");
  }

  // -- legacy TXOP ----------------------------------------------------------------------

  TxopRecord legacy_txop(ApId ap, double now, std::vector<Delivery>& out) {
    const MacParams& p = cfg.mac;
    TxopRecord rec;
    rec.owner = ap;
    rec.mode = TxopMode::legacy;
    rec.t_start = now;
    const auto bl = backlog({ap});
    if (bl.empty()) throw PreconditionError("run_legacy_txop: AP has no buffered traffic");
    const StaId sta = schedule_stas(bl, 1).at(ap).front();
    rec.scheduled = {sta};

    const double t_data = now + rts_cts_airtime(p);
    const ChannelTensor<double>& h = channel_at(LinkId{sta, ap}, t_data);
    // Single-user matched beamforming with the full per-subcarrier power.
    const int n_sd = data_subcarriers();
    const int first = legacy_first_row(ap);
    SinrTerms terms;
    terms.noise = noise_power;
    terms.signal.resize(n_sd);
    terms.intra.assign(n_sd, 0.0);
    terms.inter.assign(n_sd, 0.0);
    for (int k = 0; k < n_sd; ++k) terms.signal[k] = tx_power * h.gains.row(first + k).squaredNorm();
    const auto sinr = terms.sinr();
    const LinkOutcome o = outcome(effective_sinr(sinr));
    last_terms.clear();
    last_terms.emplace(sta, std::move(terms));

    const double ba = control_frame_airtime(p, p.frames.block_ack);
    const double avail = now + p.txop_limit - t_data - p.sifs - ba - p.uhr_preamble;
    const auto symbols = static_cast<std::int64_t>(std::floor(avail / p.symbol_duration() + 1e-9));
    const int n = std::min(static_cast<int>(stas[sta.value].queue.size()),
                           max_mpdus_in_symbols(p, symbols, o.mcs, n_sd, cfg.mcs));
    if (n == 0) {
      rec.t_end = t_data - p.sifs;
      return rec;
    }
    rec.data_airtime = ampdu_airtime(p, n, o.mcs, n_sd, cfg.mcs);
    rec.t_end = t_data + rec.data_airtime + p.sifs + ba;
    Delivery d{sta, take(sta, n), draw_errors(static_cast<std::size_t>(n), o.per), rec.t_end};
    rec.mcs = {o.mcs};
    rec.delivered = {static_cast<int>(std::count(d.ok.begin(), d.ok.end(), true))};
    rec.failed = {n - rec.delivered[0]};
    out.push_back(std::move(d));
    return rec;
  }

  // -- Co-BF TXOP -----------------------------------------------------------------------

  CsiReport<double> measure(LinkId link, double t_ndp) {
    const ChannelTensor<double>& h = advance(link, t_ndp).h;
    CMatrixX<double> rows = detail::frequency_response_rows<double>(cfg.channel, *h.profile, feedback_ng);
    add_ls_noise_rows(rows, noise, estimation_rng);
    const auto v = extract_v_rows(rows, feedback_ng, cfg.channel.n_sc);
    auto r = compress(v, cfg.givens, codec ? &*codec : nullptr, h.los, compression_rng);
    r.link = link;
    r.timestamp = t_ndp;
    return r;
  }

  bool stale(LinkId link, double t) const {
    const auto& c = csi[link_index(link)];
    return !c || t - c->timestamp > cfg.mac.csi_max_age;
  }

  TxopRecord cobf_txop(ApId c, ApId d, double now, std::vector<Delivery>& out) {
    const MacParams& p = cfg.mac;
    TxopRecord rec;
    rec.owner = c;
    rec.t_start = now;
    double t = now + control_frame_airtime(p, p.frames.cobf_invite) + p.sifs +
               control_frame_airtime(p, p.frames.cobf_response) + p.sifs;

    const bool joint = has_traffic(d);
    rec.mode = joint ? TxopMode::cobf : TxopMode::declined;
    const std::vector<ApId> serving = joint ? std::vector<ApId>{c, d} : std::vector<ApId>{c};
    const auto bl = joint ? backlog({c, d}) : backlog({c});
    if (!has_traffic(c)) throw PreconditionError("run_cobf_txop: coordinating AP has no buffered traffic");
    auto per_ap = schedule_stas(bl, p.max_stas_per_bss);

    // Priority order across both BSSs; the tail is dropped first.
    std::vector<StaId> order;
    {
      std::vector<HolEntry> chosen;
      for (const HolEntry& e : bl)
        for (const auto& [ap, list] : per_ap)
          if (std::find(list.begin(), list.end(), e.sta) != list.end()) chosen.push_back(e);
      std::sort(chosen.begin(), chosen.end(), [](const HolEntry& a, const HolEntry& b) {
        return a.t_hol != b.t_hol ? a.t_hol < b.t_hol : a.sta < b.sta;
      });
      for (const HolEntry& e : chosen) order.push_back(e.sta);
    }

    const double ba = control_frame_airtime(p, p.frames.block_ack);
    auto trigger_time = [&](std::size_t n) {
      return joint ? control_frame_airtime(p, p.frames.trigger(static_cast<int>(n))) + p.sifs : 0.0;
    };
    auto data_tail = [&](std::size_t n) { return p.sifs + n * ba + (n - 1) * p.sifs; };
    const double min_ampdu = ampdu_airtime(p, 1, 0, data_subcarriers(), cfg.mcs);

    std::map<StaId, std::vector<CsiReport<double>>> reports;  // cached across retries
    SoundingTimeline tl;
    std::vector<std::vector<StaId>> rounds;
    for (;;) {
      if (order.empty()) break;
      // Stale set at the data start, grown until it is self-consistent.
      std::set<StaId> sound;
      for (;;) {
        rounds.clear();
        for (ApId ap : serving) {
          std::vector<StaId> r;
          for (StaId s : order)
            if (stas[s.value].ap == ap && sound.contains(s)) r.push_back(s);
          if (!r.empty()) rounds.push_back(std::move(r));
        }
        std::vector<std::vector<std::uint64_t>> bits;
        for (const auto& r : rounds) {
          std::vector<std::uint64_t> b;
          for (StaId s : r) {
            auto it = reports.find(s);
            std::uint64_t sum = 0;
            if (it != reports.end())
              for (const auto& rep : it->second) sum += rep.bit_size;
            b.push_back(sum);
          }
          bits.push_back(std::move(b));
        }
        // Generate reports round by round; later NDP times depend on earlier feedback sizes.
        for (std::size_t r = 0; r < rounds.size(); ++r) {
          for (std::size_t i = 0; i < rounds[r].size(); ++i) {
            const StaId s = rounds[r][i];
            if (reports.contains(s)) continue;
            std::vector<std::vector<std::uint64_t>> prefix(bits.begin(), bits.begin() + static_cast<long>(r + 1));
            const double t_ndp = t + sounding_timeline(p, joint, prefix, cfg.mcs).ndp_offsets[r];
            auto& reps = reports[s];
            for (ApId ap : serving) reps.push_back(measure(LinkId{s, ap}, t_ndp));
            std::uint64_t sum = 0;
            for (const auto& rep : reps) sum += rep.bit_size;
            bits[r][i] = sum;
          }
        }
        tl = rounds.empty() ? SoundingTimeline{} : sounding_timeline(p, joint, bits, cfg.mcs);
        const double t_data = t + tl.duration + trigger_time(order.size());
        bool grown = false;
        for (StaId s : order) {
          if (sound.contains(s)) continue;
          for (ApId ap : serving)
            if (stale(LinkId{s, ap}, t_data)) {
              sound.insert(s);
              grown = true;
              break;
            }
        }
        if (!grown) break;
      }
      const double t_need = t + tl.duration + trigger_time(order.size()) + min_ampdu + data_tail(order.size());
      if (t_need <= now + p.txop_limit) break;
      order.pop_back();
    }

    if (order.empty()) {
      rec.t_end = t - p.sifs;
      return rec;
    }

    // Install the fresh CSI.
    for (std::size_t r = 0; r < rounds.size(); ++r) {
      std::vector<std::vector<std::uint64_t>> prefix;
      for (std::size_t q = 0; q <= r; ++q) {
        std::vector<std::uint64_t> b;
        for (StaId s : rounds[q]) {
          std::uint64_t sum = 0;
          for (const auto& rep : reports.at(s)) sum += rep.bit_size;
          b.push_back(sum);
        }
        prefix.push_back(std::move(b));
      }
      const double t_ndp = t + sounding_timeline(p, joint, prefix, cfg.mcs).ndp_offsets[r];
      for (StaId s : rounds[r])
        for (const auto& rep : reports.at(s)) csi[link_index(rep.link)] = Csi{rep.reconstruct(), t_ndp};
    }
    rec.sounding_airtime = tl.duration;
    rec.csi_bits = tl.total_bits;
    t += tl.duration;

    std::map<ApId, std::vector<StaId>> chosen;
    for (ApId ap : serving) chosen[ap];
    for (StaId s : order) chosen[stas[s.value].ap].push_back(s);
    ScheduleSet sched = joint ? ScheduleSet::coordinated(chosen) : ScheduleSet::independent(chosen);
    for (auto it = sched.in_bss.begin(); it != sched.in_bss.end();)
      if (it->second.empty()) {
        sched.obss.erase(it->first);
        it = sched.in_bss.erase(it);
      } else {
        ++it;
      }

    const double t_data = t + trigger_time(order.size());
    VectorSetMap<double> vectors;
    for (StaId s : order)
      for (ApId ap : serving) {
        const auto& entry = csi[link_index(LinkId{s, ap})];
        if (!entry || t_data - entry->timestamp > p.csi_max_age + 1e-12)
          throw InvariantError("A-MPDU precoded with CSI older than the maximum age");
        vectors.emplace(LinkId{s, ap}, entry->v);
      }

    PrecoderSet<double> precoders;
    try {
      precoders = build_cea_zf_with_fallback(vectors, sched, tx_power);
    } catch (const PrecodingError&) {
      rec.t_end = t - p.sifs;
      return rec;
    }
    ChannelMap<double> truth;
    for (const auto& [ap, list] : sched.in_bss)
      for (StaId s : list)
        for (const auto& [other, unused] : precoders.aps) truth.emplace(LinkId{s, other}, channel_at(LinkId{s, other}, t_data));
    last_terms = sinr_terms(truth, precoders, sched, noise_power);

    std::vector<StaId> served;
    for (StaId s : order)
      if (last_terms.contains(s)) served.push_back(s);
    std::map<StaId, LinkOutcome> link;
    for (StaId s : served) link[s] = outcome(effective_sinr(last_terms.at(s).sinr()));

    const int n_sd = data_subcarriers();
    std::map<StaId, int> count;
    std::vector<StaId> data = served;
    for (;;) {
      if (data.empty()) break;
      const double avail = now + p.txop_limit - t_data - data_tail(data.size()) - p.uhr_preamble;
      const auto symbols = static_cast<std::int64_t>(std::floor(avail / p.symbol_duration() + 1e-9));
      count.clear();
      std::vector<StaId> keep;
      for (StaId s : data) {
        const int n = std::min(static_cast<int>(stas[s.value].queue.size()),
                               max_mpdus_in_symbols(p, symbols, link[s].mcs, n_sd, cfg.mcs));
        if (n > 0) {
          keep.push_back(s);
          count[s] = n;
        }
      }
      if (keep.size() == data.size()) break;
      data = std::move(keep);
    }
    if (data.empty()) {
      rec.t_end = t - p.sifs;
      return rec;
    }

    std::int64_t symbols = 0;
    for (StaId s : data) symbols = std::max(symbols, ampdu_symbols(p, count[s], link[s].mcs, n_sd, cfg.mcs));
    rec.data_airtime = p.uhr_preamble + static_cast<double>(symbols) * p.symbol_duration();
    double t_ba = t_data + rec.data_airtime;
    for (StaId s : data) {
      t_ba += p.sifs + ba;
      Delivery dl{s, take(s, count[s]), draw_errors(static_cast<std::size_t>(count[s]), link[s].per), t_ba};
      const int ok = static_cast<int>(std::count(dl.ok.begin(), dl.ok.end(), true));
      rec.scheduled.push_back(s);
      rec.mcs.push_back(link[s].mcs);
      rec.delivered.push_back(ok);
      rec.failed.push_back(count[s] - ok);
      out.push_back(std::move(dl));
    }
    rec.t_end = t_ba;
    return rec;
  }

  // -- contention and event loop --------------------------------------------------------

  void contend(int m, double now) {
    Medium& med = media[m];
    if (med.busy) return;
    bool any = false;
    for (const Ap& ap : aps)
      if (ap.medium == m && ap.dcf.counting) any = true;
    if (!any) med.grid.anchor = now;
    for (std::size_t a = 0; a < aps.size(); ++a) {
      Ap& ap = aps[a];
      if (ap.medium != m || ap.dcf.counting || !has_traffic(ApId{static_cast<int>(a)})) continue;
      if (ap.dcf.remaining < 0) dcf_contend(ap.dcf, cfg.mac, ap.rng);
      ap.dcf.start_slot = med.grid.first_slot_from(now + cfg.mac.difs, cfg.mac);
      ap.dcf.counting = true;
    }
    std::optional<std::int64_t> first;
    for (const Ap& ap : aps)
      if (ap.medium == m && ap.dcf.counting) {
        const std::int64_t e = ap.dcf.start_slot + ap.dcf.remaining;
        if (!first || e < *first) first = e;
      }
    if (!first) return;
    if (med.armed && *first == med.expiry_slot) return;
    med.armed = true;
    med.expiry_slot = *first;
    events.push(med.grid.slot_start(*first, cfg.mac), EventKind::backoff_expiry, m, ++med.token);
  }

  void on_backoff_expiry(int m, double now) {
    Medium& med = media[m];
    std::vector<std::size_t> winners;
    for (std::size_t a = 0; a < aps.size(); ++a) {
      DcfState& s = aps[a].dcf;
      if (aps[a].medium != m || !s.counting) continue;
      if (s.start_slot + s.remaining == med.expiry_slot) {
        winners.push_back(a);
      } else {
        s.remaining -= static_cast<int>(std::max<std::int64_t>(0, med.expiry_slot - s.start_slot));
        s.counting = false;
      }
    }
    if (winners.empty()) throw InvariantError("backoff expiry without a winner");
    med.busy = true;
    med.armed = false;
    const MacParams& p = cfg.mac;
    const bool cobf = cfg.mode == Mode::cobf_st || cfg.mode == Mode::cobf_ae;
    if (winners.size() > 1) {
      ++counters.collisions;
      for (std::size_t a : winners) dcf_on_collision(aps[a].dcf, p);
      const double dur = cobf ? control_frame_airtime(p, p.frames.cobf_invite) + p.sifs +
                                    control_frame_airtime(p, p.frames.cobf_response)
                              : control_frame_airtime(p, p.frames.rts) + p.sifs + control_frame_airtime(p, p.frames.cts);
      events.push(now + dur, EventKind::frame_end, m);
      return;
    }
    const ApId w{static_cast<int>(winners.front())};
    dcf_on_success(aps[w.value].dcf, p);
    auto& deliveries = pending[m];
    TxopRecord rec = cobf ? cobf_txop(w, ApId{1 - w.value}, now, deliveries) : legacy_txop(w, now, deliveries);
    check_bound(rec);
    events.push(rec.t_end, EventKind::txop_end, m);
    txops.push_back(std::move(rec));
  }

  void on_medium_free(int m) {
    settle(pending[m]);
    media[m].busy = false;
    for (Ap& ap : aps)
      if (ap.medium == m) ap.dcf.counting = false;
  }

  void move_stas() {
    const SceneLayout& scene = cfg.channel.scene;
    const double step = cfg.channel.sta_speed * cfg.mobility_step;
    const auto period = static_cast<std::uint64_t>(std::llround(cfg.direction_period / cfg.mobility_step));
    ++mobility_steps;
    std::uniform_real_distribution<double> angle(0.0, 2.0 * kPi);
    for (Sta& s : stas) {
      if (period > 0 && mobility_steps % period == 0) s.heading = angle(mobility_rng);
      const Vec3 origin = scene.room_origin(aps[s.ap.value].room);
      const double lo_x = origin.x() + scene.wall_clearance, hi_x = origin.x() + scene.room_length - scene.wall_clearance;
      const double lo_y = origin.y() + scene.wall_clearance, hi_y = origin.y() + scene.room_width - scene.wall_clearance;
      double x = s.pos.x() + step * std::cos(s.heading);
      double y = s.pos.y() + step * std::sin(s.heading);
      if (x < lo_x || x > hi_x) {
        x = x < lo_x ? 2 * lo_x - x : 2 * hi_x - x;
        s.heading = kPi - s.heading;
      }
      if (y < lo_y || y > hi_y) {
        y = y < lo_y ? 2 * lo_y - y : 2 * hi_y - y;
        s.heading = -s.heading;
      }
      s.pos.x() = std::clamp(x, lo_x, hi_x);
      s.pos.y() = std::clamp(y, lo_y, hi_y);
    }
  }

  void schedule_arrival(std::size_t i) {
    if (!stas[i].arrivals) return;
    if (auto b = stas[i].arrivals->next(); b && b->time < cfg.duration)
      events.push(b->time, EventKind::arrival, static_cast<int>(i), static_cast<std::uint64_t>(b->size));
  }

  void init() {
    if (initialized) return;
    initialized = true;
    for (std::size_t i = 0; i < stas.size(); ++i) schedule_arrival(i);
    if (cfg.mobility_step < cfg.duration) events.push(cfg.mobility_step, EventKind::mobility_step);
    if (cfg.full_buffer) top_up(0.0);
    for (std::size_t m = 0; m < media.size(); ++m) contend(static_cast<int>(m), 0.0);
  }

  void trace_event(std::ostream& os, const SimEvent& e) {
    nlohmann::json j = {{"t", e.time}, {"seq", e.seq}, {"kind", to_string(e.kind)}, {"target", e.target}};
    if (e.kind == EventKind::arrival) j["packets"] = e.token;
    if (e.kind == EventKind::txop_end && !txops.empty()) {
      const TxopRecord& r = txops.back();
      j["owner"] = r.owner.value;
      j["mode"] = to_string(r.mode);
    }
    os << j.dump() << '\n';
  }

  DeploymentResult run(std::ostream* trace) {
    init();
    while (!events.empty()) {
      const SimEvent e = events.pop();
      if (e.time > cfg.duration) break;
      const double now = e.time;
      ++counters.events;
      if (cfg.full_buffer) top_up(now);
      bool live = true;
      switch (e.kind) {
        case EventKind::arrival: {
          const auto i = static_cast<std::size_t>(e.target);
          enqueue(StaId{e.target}, now, static_cast<int>(e.token));
          schedule_arrival(i);
          contend(aps[stas[i].ap.value].medium, now);
          break;
        }
        case EventKind::backoff_expiry:
          if (e.token != media[e.target].token) {
            live = false;
            break;
          }
          on_backoff_expiry(e.target, now);
          break;
        case EventKind::frame_end:
        case EventKind::txop_end:
          on_medium_free(e.target);
          contend(e.target, now);
          break;
        case EventKind::mobility_step:
          move_stas();
          if (now + cfg.mobility_step < cfg.duration) events.push(now + cfg.mobility_step, EventKind::mobility_step);
          break;
        case EventKind::csi_expiry:
          break;
      }
      if (cfg.check_conservation) check_conservation();
      if (trace && live) trace_event(*trace, e);
    }
    check_conservation();

    DeploymentResult r;
    r.seed = seed;
    r.received = std::move(received);
    for (const Sta& s : stas) {
      r.delivered_bits.push_back(s.delivered_bits);
      r.generated_per_sta.push_back(s.generated);
      r.queued_at_end += s.queue.size();
    }
    r.inflight_at_end = inflight_count;
    r.txops = std::move(txops);
    r.counters = counters;
    return r;
  }
};

Simulator::Simulator(const SimConfig& cfg, const Deployment& dep, std::uint64_t seed)
    : impl_(std::make_unique<Impl>(cfg, dep, seed)) {}

Simulator::~Simulator() = default;

DeploymentResult Simulator::run(std::ostream* trace) { return impl_->run(trace); }

void Simulator::enqueue(StaId sta, double t_arr, int count) { impl_->enqueue(sta, t_arr, count); }

TxopRecord Simulator::run_cobf_txop(ApId coordinating, ApId coordinated, double now) {
  std::vector<Impl::Delivery> d;
  TxopRecord r = impl_->cobf_txop(coordinating, coordinated, now, d);
  impl_->check_bound(r);
  impl_->settle(d);
  return r;
}

TxopRecord Simulator::run_legacy_txop(ApId ap, double now) {
  std::vector<Impl::Delivery> d;
  TxopRecord r = impl_->legacy_txop(ap, now, d);
  impl_->check_bound(r);
  impl_->settle(d);
  return r;
}

void Simulator::sound_link_now(LinkId link, double t) {
  const auto r = impl_->measure(link, t);
  impl_->csi[impl_->link_index(link)] = Impl::Csi{r.reconstruct(), t};
}

std::optional<double> Simulator::csi_timestamp(LinkId link) const {
  const auto& c = impl_->csi[impl_->link_index(link)];
  return c ? std::optional<double>(c->timestamp) : std::nullopt;
}

const ChannelTensor<double>& Simulator::channel_at(LinkId link, double t) { return impl_->channel_at(link, t); }
const DcfState& Simulator::dcf(ApId ap) const { return impl_->aps.at(static_cast<std::size_t>(ap.value)).dcf; }
DcfState& Simulator::dcf_mut(ApId ap) { return impl_->aps.at(static_cast<std::size_t>(ap.value)).dcf; }
std::size_t Simulator::queue_size(StaId sta) const { return impl_->stas.at(static_cast<std::size_t>(sta.value)).queue.size(); }
const RunCounters& Simulator::counters() const { return impl_->counters; }
std::uint64_t Simulator::inflight() const { return impl_->inflight_count; }
int Simulator::num_stas() const { return static_cast<int>(impl_->stas.size()); }
const std::map<StaId, SinrTerms>& Simulator::last_sinr_terms() const { return impl_->last_terms; }

}  // namespace cobf::mac
