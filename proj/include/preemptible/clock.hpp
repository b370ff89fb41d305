#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <tuple>
#include <vector>

#include "preemptible/errors.hpp"

namespace preemptible {

using Duration = std::chrono::nanoseconds;

// Time origin for every run: the virtual clock starts at 0, the real clock
// counts from construction. Both report integer nanoseconds.
struct RunClock {
  using rep = Duration::rep;
  using period = Duration::period;
  using duration = Duration;
  using time_point = std::chrono::time_point<RunClock, Duration>;
  static constexpr bool is_steady = true;
};

using Timestamp = RunClock::time_point;

/// Sentinel for "never preempt".
inline constexpr Duration kInfinite = Duration::max();

constexpr Timestamp at(Duration since_start) noexcept { return Timestamp{since_start}; }
constexpr std::int64_t ns(Timestamp t) noexcept { return t.time_since_epoch().count(); }
constexpr std::int64_t ns(Duration d) noexcept { return d.count(); }

// Saturating t + d, so adding kInfinite never wraps.
constexpr Timestamp add_saturating(Timestamp t, Duration d) noexcept {
  if (d.count() > 0 && ns(t) > Duration::max().count() - d.count()) return Timestamp{Duration::max()};
  return t + d;
}

class VirtualClock {
 public:
  Timestamp now() const noexcept { return now_; }
  void advance_to(Timestamp t) noexcept {
    if (t > now_) now_ = t;
  }

 private:
  Timestamp now_{};
};

/// Monotonic wall time since construction. Safe to read from any thread.
class RealClock {
 public:
  RealClock() noexcept : start_(std::chrono::steady_clock::now()) {}

  Timestamp now() const noexcept {
    return Timestamp{std::chrono::duration_cast<Duration>(std::chrono::steady_clock::now() - start_)};
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

enum class EventKind : std::uint8_t { Arrival, QuantumExpiry, ControllerTick, Custom };

struct SimEvent {
  Timestamp fire_at{};
  std::uint64_t seq = 0;
  EventKind kind = EventKind::Custom;
  std::uint64_t payload = 0;
};

/// Binary-heap event queue driving the simulation backend. Pops in ascending
/// (fire_at, seq) order and owns the virtual clock, which jumps to each
/// dispatched event. Single-threaded.
class EventQueue {
 public:
  Timestamp now() const noexcept { return clock_.now(); }

  /// Schedules with the next insertion sequence number and returns it.
  std::uint64_t schedule(Timestamp fire_at, EventKind kind, std::uint64_t payload = 0);

  /// Schedules an event that already carries a sequence number. Later
  /// auto-assigned numbers continue above the largest one seen.
  void schedule(const SimEvent& event);

  std::optional<SimEvent> pop();

  /// Dispatches every event with fire_at <= limit, including ones the
  /// handler schedules along the way. Returns the number dispatched.
  template <class Handler>
  std::size_t run_until(Timestamp limit, Handler&& handler) {
    std::size_t dispatched = 0;
    while (!heap_.empty() && heap_.top().fire_at <= limit) {
      SimEvent ev = heap_.top();
      heap_.pop();
      clock_.advance_to(ev.fire_at);
      ++dispatched;
      handler(ev, *this);
    }
    return dispatched;
  }

  bool empty() const noexcept { return heap_.empty(); }
  std::size_t size() const noexcept { return heap_.size(); }
  std::optional<Timestamp> next_fire_time() const;

  // At most one timer service may drive a queue.
  bool attach_timer() noexcept;
  void detach_timer() noexcept { timer_attached_ = false; }

 private:
  struct Later {
    bool operator()(const SimEvent& a, const SimEvent& b) const noexcept {
      return std::tie(a.fire_at, a.seq) > std::tie(b.fire_at, b.seq);
    }
  };

  std::priority_queue<SimEvent, std::vector<SimEvent>, Later> heap_;
  VirtualClock clock_;
  std::uint64_t next_seq_ = 0;
  bool timer_attached_ = false;
};

}  // namespace preemptible
