#include "cobf/mac/simulator.hpp"

#include <catch2/catch.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace cobf;
using namespace cobf::mac;

namespace {

constexpr double us = 1e-6;

const ApId kAp0{0};
const ApId kAp1{1};

// STAs on a line through the middle of rooms 0 and 1, AP 0's first.
Deployment line_deployment(int per_ap, const SceneLayout& scene = {}) {
  Deployment d;
  d.ap_rooms = {0, 1};
  for (int a = 0; a < 2; ++a)
    for (int i = 0; i < per_ap; ++i)
      d.stas.push_back({ApId{a}, scene.room_origin(a) + Vec3(1.0 + 0.8 * i, 2.5 + 0.3 * a, 1.5)});
  return d;
}

SimConfig quiet(Mode m, double duration = 0.05) {
  SimConfig c;
  c.mode = m;
  c.duration = duration;
  c.traffic.load_bps = 0.0;
  return c;
}

SimConfig full_buffer(Mode m, double duration) {
  SimConfig c = quiet(m, duration);
  c.full_buffer = true;
  return c;
}

// Report size of one single-stream Givens report: n_vs groups of (n_t - 1) angle pairs.
std::uint64_t givens_bits(const GivensConfig& g, int n_sc = 980, int n_t = 16) {
  const int n_vs = (n_sc + g.n_g - 1) / g.n_g;
  return static_cast<std::uint64_t>(n_vs) * (n_t - 1) * (g.bits.phi + g.bits.psi);
}

}  // namespace

// -- frame airtimes -------------------------------------------------------------------

TEST_CASE("control frame airtimes") {
  const MacParams p;
  CHECK(control_frame_airtime(p, p.frames.rts) == Approx(46.6667 * us).epsilon(1e-5));
  CHECK(control_frame_airtime(p, p.frames.cts) == Approx(38.6667 * us).epsilon(1e-5));
  CHECK(control_frame_airtime(p, p.frames.block_ack) == Approx(62.6667 * us).epsilon(1e-5));
  // RTS + SIFS + CTS + SIFS
  CHECK(rts_cts_airtime(p) == Approx(117.3333 * us).epsilon(1e-5));
  CHECK(p.frames.ndpa(2) == 25);
  CHECK(p.frames.bfrp(2) == 40);
  CHECK(p.frames.trigger(4) == 52);
}

TEST_CASE("UHR symbol, NDP and MPDU size") {
  const MacParams p;
  CHECK(p.symbol_duration() == Approx(13.6 * us));
  CHECK(ndp_airtime(p) == Approx(216.8 * us));
  CHECK(p.mpdu_bits() == 12272);
}

TEST_CASE("A-MPDU airtime hand examples") {
  const MacParams p;
  // MCS 7 at 980 subcarriers: 4900 bits per symbol, 12322 bits need 3 symbols.
  CHECK(ampdu_symbols(p, 1, 7, 980, McsTable::standard()) == 3);
  CHECK(ampdu_airtime(p, 1, 7, 980) == Approx(129.6 * us));
  // MCS 0: 490 bits per symbol, 26 symbols.
  CHECK(ampdu_airtime(p, 1, 0, 980) == Approx(88.8 * us + 26 * 13.6 * us));
}

TEST_CASE("A-MPDU airtime properties") {
  const MacParams p;
  const auto& t = McsTable::standard();
  for (int mcs = 0; mcs < static_cast<int>(t.size()); ++mcs) {
    for (int n : {1, 4, 16, 64}) {
      const double a1 = ampdu_airtime(p, n, mcs, 980);
      const double a2 = ampdu_airtime(p, 2 * n, mcs, 980);
      CHECK(a2 > a1);
      // Doubling the payload at most doubles the data part, plus one symbol of rounding.
      CHECK(a2 - p.uhr_preamble <= 2 * (a1 - p.uhr_preamble) + p.symbol_duration() + 1e-12);
      if (mcs > 0) CHECK(ampdu_airtime(p, n, mcs, 980) <= ampdu_airtime(p, n, mcs - 1, 980));
      // max_mpdus_in_symbols inverts ampdu_symbols.
      const auto sym = ampdu_symbols(p, n, mcs, 980, t);
      const int fit = max_mpdus_in_symbols(p, sym, mcs, 980, t);
      CHECK(fit >= n);
      CHECK(ampdu_symbols(p, fit, mcs, 980, t) <= sym);
      CHECK(ampdu_symbols(p, fit + 1, mcs, 980, t) > sym);
    }
  }
  CHECK(max_mpdus_in_symbols(p, 0, 5, 980, t) == 0);
  CHECK_THROWS_AS(ampdu_airtime(p, 0, 5, 980), PreconditionError);
}

TEST_CASE("feedback frame airtime") {
  const MacParams p;
  const std::uint64_t conf1 = givens_bits(GivensConfig::conf1());
  CHECK(conf1 == 14880);
  // Two reports (one per AP): 29760 + 274 bits at 702 bits per symbol is 43 symbols.
  CHECK(feedback_airtime(p, 2 * conf1) == Approx(88.8 * us + 43 * 13.6 * us));
  CHECK(feedback_airtime(p, 2 * conf1) == Approx(673.6 * us));
  CHECK(feedback_airtime(p, 1) == Approx(88.8 * us + 13.6 * us));
}

TEST_CASE("MacParams validation") {
  MacParams p;
  CHECK_NOTHROW(p.validate());
  p.cw_min = 2048;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = MacParams{};
  p.cw_max = 1000;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = MacParams{};
  p.slot = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = MacParams{};
  p.payload_bytes = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

// -- traffic ------------------------------------------------------------------------

TEST_CASE("batch Poisson rates") {
  TrafficConfig cfg;
  cfg.load_bps = 177e6;
  CHECK(cfg.packet_rate() == Approx(14750.0));
  CHECK(cfg.batch_rate() == Approx(14750.0 / 8.0));
  cfg.mean_batch = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.mean_batch = 8;
  cfg.load_bps = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("zero load yields no arrivals") {
  TrafficConfig cfg;
  BatchArrivals a(cfg, 1);
  CHECK_FALSE(a.next());
  CHECK(bpp_generate(cfg, 10.0, 1).empty());
}

TEST_CASE("exponential gaps pass a KS test at B = 1") {
  TrafficConfig cfg;
  cfg.load_bps = 12e6;  // 1000 packets/s
  cfg.mean_batch = 1.0;
  const auto b = bpp_generate(cfg, 20.0, 7);
  REQUIRE(b.size() > 1000);
  std::vector<double> gaps;
  for (std::size_t i = 1; i < b.size(); ++i) {
    gaps.push_back(b[i].time - b[i - 1].time);
    CHECK(b[i].size == 1);
  }
  std::sort(gaps.begin(), gaps.end());
  const double rate = cfg.batch_rate();
  const auto n = static_cast<double>(gaps.size());
  double d = 0.0;
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    const double f = 1.0 - std::exp(-rate * gaps[i]);
    d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(f - static_cast<double>(i + 1) / n)});
  }
  // 1% critical value.
  CHECK(d < 1.628 / std::sqrt(n));
}

TEST_CASE("packet rate matches the offered load") {
  TrafficConfig cfg;
  cfg.load_bps = 63e6;
  double packets = 0.0;
  double batches = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed)
    for (const Batch& b : bpp_generate(cfg, 10.0, seed)) {
      packets += b.size;
      batches += 1;
      REQUIRE(b.size >= 1);
      REQUIRE(b.time < 10.0);
    }
  CHECK(packets / (100 * 10.0) == Approx(cfg.packet_rate()).epsilon(0.02));
  CHECK(packets / batches == Approx(8.0).epsilon(0.02));
}

TEST_CASE("arrivals are sorted and reproducible") {
  TrafficConfig cfg;
  cfg.load_bps = 93e6;
  const auto a = bpp_generate(cfg, 1.0, 3);
  const auto b = bpp_generate(cfg, 1.0, 3);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].time == b[i].time);
    CHECK(a[i].size == b[i].size);
    if (i) CHECK(a[i].time >= a[i - 1].time);
  }
  CHECK(bpp_generate(cfg, 1.0, 4).front().time != a.front().time);
}

TEST_CASE("packet latency") {
  Packet p;
  p.t_arr = 1.0;
  CHECK_THROWS_AS(packet_latency(p), PreconditionError);
  p.t_rec = 1.0125;
  CHECK(packet_latency(p) == Approx(0.0125));
}

// -- DCF ----------------------------------------------------------------------------

TEST_CASE("backoff is uniform over the contention window") {
  const MacParams p;
  DcfState s;
  Rng rng(11);
  double sum = 0.0;
  int lo = 100, hi = -1;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double wait = dcf_contend(s, p, rng);
    CHECK(wait == Approx(p.difs + s.remaining * p.slot));
    lo = std::min(lo, s.remaining);
    hi = std::max(hi, s.remaining);
    sum += s.remaining;
  }
  CHECK(lo == 0);
  CHECK(hi == 15);
  CHECK(sum / n == Approx(7.5).epsilon(0.02));
}

TEST_CASE("contention window doubles, caps and resets") {
  const MacParams p;
  DcfState s;
  s.cw = p.cw_min;
  std::vector<int> seen;
  for (int i = 0; i < 8; ++i) {
    dcf_on_collision(s, p);
    seen.push_back(s.cw);
  }
  CHECK(seen == std::vector<int>{32, 64, 128, 256, 512, 1024, 1024, 1024});
  dcf_on_success(s, p);
  CHECK(s.cw == 16);
}

TEST_CASE("slot grid") {
  const MacParams p;
  SlotGrid g{1e-3};
  CHECK(g.slot_start(0, p) == Approx(1e-3 + 34 * us));
  CHECK(g.slot_start(3, p) == Approx(1e-3 + 61 * us));
  CHECK(g.first_slot_from(0.0, p) == 0);
  CHECK(g.first_slot_from(1e-3 + 34 * us, p) == 0);
  CHECK(g.first_slot_from(1e-3 + 35 * us, p) == 1);
  CHECK(g.first_slot_from(1e-3 + 43 * us, p) == 1);
  CHECK(g.first_slot_from(1e-3 + 43.5 * us, p) == 2);
}

TEST_CASE("event queue orders by time then insertion") {
  EventQueue q;
  q.push(2.0, EventKind::arrival, 1);
  q.push(1.0, EventKind::txop_end, 2);
  q.push(1.0, EventKind::backoff_expiry, 3);
  q.push(1.0, EventKind::arrival, 4);
  std::vector<int> order;
  while (!q.empty()) order.push_back(q.pop().target);
  CHECK(order == std::vector<int>{2, 3, 4, 1});
}

// -- scheduling and sounding -------------------------------------------------------------

TEST_CASE("schedule_stas picks the oldest head-of-line packets per BSS") {
  const std::vector<HolEntry> bl = {{StaId{0}, kAp0, 0.3}, {StaId{1}, kAp0, 0.1}, {StaId{2}, kAp0, 0.2},
                                    {StaId{3}, kAp1, 0.5}, {StaId{4}, kAp1, 0.5}};
  const auto s = schedule_stas(bl, 2);
  CHECK(s.at(kAp0) == std::vector<StaId>{StaId{1}, StaId{2}});
  CHECK(s.at(kAp1) == std::vector<StaId>{StaId{3}, StaId{4}});
  const auto one = schedule_stas(bl, 1);
  CHECK(one.at(kAp1) == std::vector<StaId>{StaId{3}});
  const std::vector<HolEntry> only0 = {{StaId{0}, kAp0, 0.0}};
  CHECK_FALSE(schedule_stas(only0, 2).contains(kAp1));
}

TEST_CASE("joint sounding timeline frame sum") {
  const MacParams p;
  const std::uint64_t b = 2 * givens_bits(GivensConfig::conf1());
  const auto tl = sounding_timeline(p, true, {{b, b}, {b, b}});
  // invite 57.333 + response 62.667 + per AP: NDPA 53.333, NDP 216.8, BFRP 73.333, 2 x 673.6,
  // each followed by SIFS.
  const double round = 53.3333 + 216.8 + 73.3333 + 2 * 673.6 + 5 * 16;
  CHECK(tl.duration == Approx((57.3333 + 16 + 62.6667 + 16 + 2 * round) * us).epsilon(1e-6));
  CHECK(tl.duration == Approx(3693.333 * us).epsilon(1e-6));
  CHECK(tl.total_bits == 119040);
  CHECK(tl.feedback_airtime == Approx(4 * 673.6 * us));
  REQUIRE(tl.ndp_offsets.size() == 2);
  CHECK(tl.ndp_offsets[0] == Approx((57.3333 + 16 + 62.6667 + 16 + 53.3333 + 16) * us).epsilon(1e-6));
  CHECK(tl.ndp_offsets[1] == Approx(tl.ndp_offsets[0] + round * us).epsilon(1e-6));

  const auto own = sounding_timeline(p, false, {{b / 2}});
  CHECK(own.duration == Approx((48.0 + 16 + 216.8 + 16 + 65.3333 + 16 + feedback_airtime(p, b / 2) / us + 16) * us).epsilon(1e-6));
  CHECK_THROWS_AS(sounding_timeline(p, true, {{}}), PreconditionError);
}

// -- simulator steps -----------------------------------------------------------------------

TEST_CASE("Co-BF TXOP with stale CSI sounds both BSSs") {
  const SimConfig cfg = quiet(Mode::cobf_st);
  Simulator sim(cfg, line_deployment(2), 5);
  for (int s = 0; s < 4; ++s) sim.enqueue(StaId{s}, 0.0, 20);
  const TxopRecord r = sim.run_cobf_txop(kAp0, kAp1, 1e-3);
  CHECK(r.mode == TxopMode::cobf);
  CHECK(r.sounding_airtime == Approx(3693.333 * us).epsilon(1e-6));
  CHECK(r.csi_bits == 119040);
  CHECK(r.scheduled.size() == 4);
  CHECK(r.duration() <= cfg.mac.txop_limit + 1e-12);
  for (int s = 0; s < 4; ++s)
    for (ApId ap : {kAp0, kAp1}) {
      const auto ts = sim.csi_timestamp(LinkId{StaId{s}, ap});
      REQUIRE(ts);
      CHECK(*ts > r.t_start);
      CHECK(*ts < r.t_start + r.sounding_airtime + 200 * us);
    }
  // Both BSSs' streams interfere with each other only through residual leakage.
  for (const auto& [sta, terms] : sim.last_sinr_terms()) CHECK(terms.signal.size() == 980);
  CHECK(sim.counters().received + sim.counters().dropped + sim.inflight() +
            [&] {
              std::size_t q = 0;
              for (int s = 0; s < 4; ++s) q += sim.queue_size(StaId{s});
              return q;
            }() ==
        80);
}

TEST_CASE("fresh CSI skips sounding") {
  const SimConfig cfg = quiet(Mode::cobf_st);
  Simulator sim(cfg, line_deployment(2), 5);
  for (int s = 0; s < 4; ++s) {
    sim.enqueue(StaId{s}, 0.0, 5);
    for (ApId ap : {kAp0, kAp1}) sim.sound_link_now(LinkId{StaId{s}, ap}, 1e-3);
  }
  const TxopRecord r = sim.run_cobf_txop(kAp0, kAp1, 2e-3);
  CHECK(r.sounding_airtime == 0.0);
  CHECK(r.csi_bits == 0);
  CHECK(r.scheduled.size() == 4);
}

TEST_CASE("CSI past its maximum age is renewed") {
  const SimConfig cfg = quiet(Mode::cobf_st);
  Simulator sim(cfg, line_deployment(1), 9);
  sim.enqueue(StaId{0}, 0.0, 5);
  sim.enqueue(StaId{1}, 0.0, 5);
  for (int s = 0; s < 2; ++s)
    for (ApId ap : {kAp0, kAp1}) sim.sound_link_now(LinkId{StaId{s}, ap}, 0.0);
  // 30 ms later every entry is older than 25 ms.
  const TxopRecord r = sim.run_cobf_txop(kAp1, kAp0, 30e-3);
  CHECK(r.csi_bits == 4 * givens_bits(GivensConfig::conf1()));
  for (int s = 0; s < 2; ++s) CHECK(*sim.csi_timestamp(LinkId{StaId{s}, kAp0}) > 30e-3);
}

TEST_CASE("declined coordination falls back to own-BSS beamforming") {
  SimConfig cfg = quiet(Mode::cobf_st);
  cfg.givens = GivensConfig::conf2();
  Simulator sim(cfg, line_deployment(2), 3);
  sim.enqueue(StaId{1}, 0.0, 10);
  const TxopRecord r = sim.run_cobf_txop(kAp0, kAp1, 0.0);
  CHECK(r.mode == TxopMode::declined);
  CHECK(std::string(to_string(r.mode)) == "declined->legacy");
  CHECK(r.scheduled == std::vector<StaId>{StaId{1}});
  // Only the own link is sounded.
  CHECK(r.csi_bits == givens_bits(GivensConfig::conf2()));
  CHECK(r.csi_bits == 44100);
  CHECK(sim.csi_timestamp(LinkId{StaId{1}, kAp0}));
  CHECK_FALSE(sim.csi_timestamp(LinkId{StaId{1}, kAp1}));
  for (const auto& [sta, terms] : sim.last_sinr_terms())
    for (double x : terms.inter) CHECK(x == 0.0);
}

TEST_CASE("learned compressor needs fewer feedback bits") {
  SimConfig st = quiet(Mode::cobf_st);
  SimConfig ae = quiet(Mode::cobf_ae);
  ae.profile = validate_profile_file(std::filesystem::path(COBF_DATA_DIR) / "profiles" / "eta_1_4.json");
  Simulator a(st, line_deployment(2), 1);
  Simulator b(ae, line_deployment(2), 1);
  for (int s = 0; s < 4; ++s) {
    a.enqueue(StaId{s}, 0.0, 10);
    b.enqueue(StaId{s}, 0.0, 10);
  }
  const auto ra = a.run_cobf_txop(kAp0, kAp1, 0.0);
  const auto rb = b.run_cobf_txop(kAp0, kAp1, 0.0);
  REQUIRE(ra.csi_bits > 0);
  REQUIRE(rb.csi_bits > 0);
  CHECK(static_cast<double>(rb.csi_bits) / static_cast<double>(ra.csi_bits) < 0.5);
  CHECK(rb.sounding_airtime < ra.sounding_airtime);
}

TEST_CASE("legacy TXOP timing") {
  const SimConfig cfg = quiet(Mode::legacy80);
  Simulator sim(cfg, line_deployment(1), 2);
  sim.enqueue(StaId{0}, 0.0, 3);
  const TxopRecord r = sim.run_legacy_txop(kAp0, 1e-3);
  REQUIRE(r.mcs.size() == 1);
  const MacParams& p = cfg.mac;
  CHECK(r.t_end == Approx(1e-3 + rts_cts_airtime(p) + ampdu_airtime(p, 3, r.mcs[0], 980) + p.sifs +
                          control_frame_airtime(p, p.frames.block_ack)));
  CHECK(r.sounding_airtime == 0.0);
  CHECK(r.delivered[0] + r.failed[0] == 3);
}

TEST_CASE("legacy 40 MHz halves the data subcarriers") {
  const SimConfig cfg = quiet(Mode::legacy40);
  Simulator sim(cfg, line_deployment(1), 2);
  sim.enqueue(StaId{1}, 0.0, 1);
  sim.run_legacy_txop(kAp1, 0.0);
  const auto& t = sim.last_sinr_terms().at(StaId{1});
  CHECK(t.signal.size() == 468);
  for (double x : t.inter) CHECK(x == 0.0);
  for (double x : t.intra) CHECK(x == 0.0);
}

// -- full runs --------------------------------------------------------------------------

TEST_CASE("single packet latency from an empty system") {
  SimConfig cfg = quiet(Mode::legacy80, 0.01);
  cfg.per.slope_per_db = 1e3;
  Simulator sim(cfg, line_deployment(1), 4);
  sim.enqueue(StaId{0}, 0.0, 1);
  sim.dcf_mut(kAp0).remaining = 5;
  const auto r = sim.run();
  REQUIRE(r.txops.size() == 1);
  const MacParams& p = cfg.mac;
  const TxopRecord& t = r.txops.front();
  CHECK(t.t_start == Approx(p.difs + 5 * p.slot));
  const double expect = p.difs + 5 * p.slot + rts_cts_airtime(p) + ampdu_airtime(p, 1, t.mcs[0], 980) + p.sifs +
                        control_frame_airtime(p, p.frames.block_ack);
  CHECK(t.t_end == Approx(expect));
  REQUIRE(r.received.size() == 1);
  CHECK(packet_latency(r.received.front()) == Approx(expect));
}

TEST_CASE("consecutive TXOPs are spaced by DIFS plus whole slots") {
  const SimConfig cfg = full_buffer(Mode::legacy40, 0.2);
  Simulator sim(cfg, line_deployment(2), 8);
  const auto r = sim.run();
  CHECK(r.counters.collisions == 0);
  std::map<int, double> last_end;
  int checked = 0;
  for (const TxopRecord& t : r.txops) {
    auto it = last_end.find(t.owner.value);
    if (it != last_end.end()) {
      const double k = (t.t_start - it->second - cfg.mac.difs) / cfg.mac.slot;
      CHECK(k == Approx(std::round(k)).margin(1e-6));
      CHECK(k > -1e-6);
      CHECK(k < cfg.mac.cw_min - 1 + 1e-6);
      ++checked;
    }
    last_end[t.owner.value] = t.t_end;
  }
  CHECK(checked > 50);
}

TEST_CASE("equal backoffs collide and double both windows") {
  SimConfig cfg = quiet(Mode::cobf_st, 200e-6);
  Simulator sim(cfg, line_deployment(1), 6);
  sim.enqueue(StaId{0}, 0.0, 1);
  sim.enqueue(StaId{1}, 0.0, 1);
  sim.dcf_mut(kAp0).remaining = 3;
  sim.dcf_mut(kAp1).remaining = 3;
  const auto r = sim.run();
  CHECK(r.counters.collisions == 1);
  CHECK(r.txops.empty());
  CHECK(sim.dcf(kAp0).cw == 32);
  CHECK(sim.dcf(kAp1).cw == 32);
}

TEST_CASE("the loser keeps its remaining slots") {
  SimConfig cfg = quiet(Mode::legacy80, 3e-3);
  Simulator sim(cfg, line_deployment(1), 6);
  sim.enqueue(StaId{0}, 0.0, 1);
  sim.enqueue(StaId{1}, 0.0, 1);
  sim.dcf_mut(kAp0).remaining = 2;
  sim.dcf_mut(kAp1).remaining = 9;
  const auto r = sim.run();
  REQUIRE(r.txops.size() == 2);
  CHECK(r.txops[0].owner == kAp0);
  CHECK(r.txops[1].owner == kAp1);
  // AP 1 counted slots 0..1 before AP 0 won at slot 2, leaving 7.
  CHECK(r.txops[1].t_start == Approx(r.txops[0].t_end + cfg.mac.difs + 7 * cfg.mac.slot));
}

TEST_CASE("runs are deterministic per seed") {
  SimConfig cfg = quiet(Mode::cobf_st, 0.1);
  cfg.traffic.load_bps = 60e6;
  auto trace = [&](std::uint64_t seed) {
    Simulator sim(cfg, line_deployment(2), seed);
    std::ostringstream os;
    sim.run(&os);
    return os.str();
  };
  const std::string a = trace(12);
  CHECK(a.size() > 1000);
  CHECK(a == trace(12));
  CHECK(a != trace(13));
}

TEST_CASE("packets are conserved and TXOPs respect the limit") {
  for (Mode m : {Mode::cobf_st, Mode::legacy80, Mode::legacy40}) {
    SimConfig cfg = quiet(m, 0.3);
    cfg.traffic.load_bps = 150e6;
    Simulator sim(cfg, line_deployment(3), 21);
    const auto r = sim.run();
    std::uint64_t gen = 0;
    for (auto g : r.generated_per_sta) gen += g;
    CHECK(gen == r.counters.generated);
    CHECK(r.counters.generated == r.counters.received + r.counters.dropped + r.queued_at_end + r.inflight_at_end);
    CHECK(r.received.size() == r.counters.received);
    for (const TxopRecord& t : r.txops) {
      CHECK(t.duration() <= cfg.mac.txop_limit + 1e-12);
      CHECK(t.t_end <= cfg.duration + cfg.mac.txop_limit);
    }
    for (const Packet& p : r.received) {
      CHECK(*p.t_rec > p.t_arr);
      CHECK(p.retry_count <= cfg.mac.retry_limit);
    }
  }
}

TEST_CASE("simulator rejects inconsistent configurations") {
  SimConfig cfg = quiet(Mode::cobf_ae);
  CHECK_THROWS_AS(Simulator(cfg, line_deployment(1), 1), ConfigError);
  cfg = quiet(Mode::cobf_st);
  Deployment d = line_deployment(1);
  d.stas[0].position = SceneLayout{}.room_origin(3) + Vec3(2, 2, 1.5);
  CHECK_THROWS_AS(Simulator(cfg, d, 1), PreconditionError);
  d = line_deployment(1);
  d.ap_rooms = {0};
  CHECK_THROWS_AS(Simulator(cfg, d, 1), PreconditionError);
}

TEST_CASE("mode names round trip") {
  for (Mode m : {Mode::cobf_st, Mode::cobf_ae, Mode::legacy80, Mode::legacy40}) CHECK(parse_mode(to_string(m)) == m);
  CHECK_THROWS_AS(parse_mode("cobf"), ConfigError);
}
