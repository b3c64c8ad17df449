#include "cobf/mac/dcf.hpp"

#include <algorithm>
#include <cmath>

namespace cobf::mac {

double dcf_contend(DcfState& s, const MacParams& p, Rng& rng) {
  s.remaining = std::uniform_int_distribution<int>(0, s.cw - 1)(rng);
  return p.difs + s.remaining * p.slot;
}

void dcf_on_collision(DcfState& s, const MacParams& p) {
  s.cw = std::min(2 * s.cw, p.cw_max);
  s.remaining = -1;
  s.counting = false;
}

void dcf_on_success(DcfState& s, const MacParams& p) {
  s.cw = p.cw_min;
  s.remaining = -1;
  s.counting = false;
}

std::int64_t SlotGrid::first_slot_from(double t, const MacParams& p) const {
  const double x = (t - anchor - p.difs) / p.slot;
  // Tolerate rounding when t sits on a slot boundary.
  return std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(x - 1e-9)));
}

const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::arrival: return "arrival";
    case EventKind::backoff_expiry: return "backoff_expiry";
    case EventKind::frame_end: return "frame_end";
    case EventKind::txop_end: return "txop_end";
    case EventKind::csi_expiry: return "csi_expiry";
    case EventKind::mobility_step: return "mobility_step";
  }
  return "unknown";
}

const SimEvent& EventQueue::push(double time, EventKind kind, int target, std::uint64_t token) {
  last_ = SimEvent{time, next_seq_++, kind, target, token};
  heap_.push(last_);
  return last_;
}

SimEvent EventQueue::pop() {
  SimEvent e = heap_.top();
  heap_.pop();
  return e;
}

}  // namespace cobf::mac
