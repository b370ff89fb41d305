#pragma once

#include <cstdint>
#include <optional>
#include <queue>
#include <vector>

#include "preemptible/clock.hpp"

namespace preemptible {

struct TimerEntry {
  Timestamp deadline{};
  std::uint32_t cell = 0;
  std::uint64_t generation = 0;
};

/// Single-level hashed timing wheel. Entries within `slots * slot_width` of
/// the cursor live in their slot; farther ones wait in an overflow heap and
/// migrate in as the cursor advances. Removal is lazy: callers validate
/// expired entries against the live generation.
class TimingWheel {
 public:
  TimingWheel(Duration slot_width, std::size_t slots);

  void insert(const TimerEntry& entry);

  /// Moves every entry with deadline <= now into `due` (appended, unordered).
  void expire(Timestamp now, std::vector<TimerEntry>& due);

  /// Smallest deadline currently stored, stale entries included.
  std::optional<Timestamp> earliest() const;

  std::size_t size() const noexcept { return size_; }
  bool empty() const noexcept { return size_ == 0; }

 private:
  struct LaterDeadline {
    bool operator()(const TimerEntry& a, const TimerEntry& b) const noexcept { return a.deadline > b.deadline; }
  };

  std::int64_t tick_of(Timestamp t) const noexcept { return ns(t) / slot_width_; }
  std::size_t slot_of(std::int64_t tick) const noexcept { return static_cast<std::size_t>(tick % slot_count_); }
  void place(const TimerEntry& entry);
  void migrate_overflow();

  std::int64_t slot_width_;
  std::int64_t slot_count_;
  std::vector<std::vector<TimerEntry>> slots_;
  std::priority_queue<TimerEntry, std::vector<TimerEntry>, LaterDeadline> overflow_;
  std::int64_t cursor_ = 0;  // every tick below the cursor has been drained
  std::size_t size_ = 0;
};

}  // namespace preemptible
