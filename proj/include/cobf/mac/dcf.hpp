// DCF backoff state, the slot grid of a shared medium, and the event queue.
#pragma once

#include "cobf/mac/params.hpp"

#include <cstdint>
#include <queue>
#include <vector>

namespace cobf::mac {

struct DcfState {
  int cw = 16;
  /// Backoff slots still to count down; negative when no backoff is drawn.
  int remaining = -1;
  /// Grid slot at which the current countdown started.
  std::int64_t start_slot = 0;
  bool counting = false;
};

/// Draws a backoff of uniform{0..CW-1} slots into `s` and returns the wait DIFS + slots * slot.
double dcf_contend(DcfState& s, const MacParams& p, Rng& rng);
void dcf_on_collision(DcfState& s, const MacParams& p);
void dcf_on_success(DcfState& s, const MacParams& p);

/// Slot grid of one medium. Slot n starts at anchor + DIFS + n * slot; the anchor moves to the
/// end of every busy period.
struct SlotGrid {
  double anchor = 0.0;

  double slot_start(std::int64_t n, const MacParams& p) const { return anchor + p.difs + static_cast<double>(n) * p.slot; }
  /// First slot index starting at or after `t`.
  std::int64_t first_slot_from(double t, const MacParams& p) const;
};

enum class EventKind { arrival, backoff_expiry, frame_end, txop_end, csi_expiry, mobility_step };

const char* to_string(EventKind k);

struct SimEvent {
  double time = 0.0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::arrival;
  int target = 0;
  std::uint64_t token = 0;
};

/// Min-queue on (time, seq); seq is assigned on push so equal times pop in insertion order.
class EventQueue {
 public:
  const SimEvent& push(double time, EventKind kind, int target = 0, std::uint64_t token = 0);
  SimEvent pop();
  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }

 private:
  struct Later {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };
  std::priority_queue<SimEvent, std::vector<SimEvent>, Later> heap_;
  std::uint64_t next_seq_ = 0;
  SimEvent last_;
};

}  // namespace cobf::mac
