#include "preemptible/timing_wheel.hpp"

#include <algorithm>

namespace preemptible {

TimingWheel::TimingWheel(Duration slot_width, std::size_t slots)
    : slot_width_(slot_width.count()), slot_count_(static_cast<std::int64_t>(slots)), slots_(slots) {
  if (slot_width_ <= 0) throw Error(Errc::InvalidConfig, "wheel slot width must be positive");
  if (slots < 2) throw Error(Errc::InvalidConfig, "wheel needs at least 2 slots");
}

void TimingWheel::place(const TimerEntry& entry) {
  const std::int64_t tick = std::max(tick_of(entry.deadline), cursor_);
  if (tick - cursor_ < slot_count_) {
    slots_[slot_of(tick)].push_back(entry);
  } else {
    overflow_.push(entry);
  }
}

void TimingWheel::insert(const TimerEntry& entry) {
  place(entry);
  ++size_;
}

void TimingWheel::migrate_overflow() {
  while (!overflow_.empty() && tick_of(overflow_.top().deadline) - cursor_ < slot_count_) {
    TimerEntry e = overflow_.top();
    overflow_.pop();
    place(e);
  }
}

void TimingWheel::expire(Timestamp now, std::vector<TimerEntry>& due) {
  const std::int64_t target = tick_of(now);
  if (target < cursor_) return;

  const std::int64_t span = std::min(target - cursor_ + 1, slot_count_);
  for (std::int64_t i = 0; i < span; ++i) {
    auto& slot = slots_[slot_of(cursor_ + i)];
    auto keep = std::partition(slot.begin(), slot.end(), [&](const TimerEntry& e) { return e.deadline > now; });
    const auto fired = static_cast<std::size_t>(slot.end() - keep);
    due.insert(due.end(), keep, slot.end());
    slot.erase(keep, slot.end());
    size_ -= fired;
  }
  cursor_ = target;
  migrate_overflow();

  // Entries pulled from overflow may already be due when the cursor jumped.
  auto& current = slots_[slot_of(cursor_)];
  auto keep = std::partition(current.begin(), current.end(), [&](const TimerEntry& e) { return e.deadline > now; });
  size_ -= static_cast<std::size_t>(current.end() - keep);
  due.insert(due.end(), keep, current.end());
  current.erase(keep, current.end());
}

std::optional<Timestamp> TimingWheel::earliest() const {
  for (std::int64_t i = 0; i < slot_count_; ++i) {
    const auto& slot = slots_[slot_of(cursor_ + i)];
    if (slot.empty()) continue;
    auto it = std::min_element(slot.begin(), slot.end(),
                               [](const TimerEntry& a, const TimerEntry& b) { return a.deadline < b.deadline; });
    return it->deadline;
  }
  if (!overflow_.empty()) return overflow_.top().deadline;
  return std::nullopt;
}

}  // namespace preemptible
