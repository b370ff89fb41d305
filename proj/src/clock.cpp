#include "preemptible/clock.hpp"

#include <algorithm>
#include <string>

namespace preemptible {

std::uint64_t EventQueue::schedule(Timestamp fire_at, EventKind kind, std::uint64_t payload) {
  SimEvent ev{fire_at, next_seq_, kind, payload};
  schedule(ev);
  return ev.seq;
}

void EventQueue::schedule(const SimEvent& event) {
  if (event.fire_at < clock_.now()) {
    throw Error(Errc::SchedulingInPast, "event at " + std::to_string(ns(event.fire_at)) +
                                            "ns is before now=" + std::to_string(ns(clock_.now())) + "ns");
  }
  next_seq_ = std::max(next_seq_, event.seq + 1);
  heap_.push(event);
}

std::optional<SimEvent> EventQueue::pop() {
  if (heap_.empty()) return std::nullopt;
  SimEvent ev = heap_.top();
  heap_.pop();
  clock_.advance_to(ev.fire_at);
  return ev;
}

std::optional<Timestamp> EventQueue::next_fire_time() const {
  if (heap_.empty()) return std::nullopt;
  return heap_.top().fire_at;
}

bool EventQueue::attach_timer() noexcept {
  if (timer_attached_) return false;
  timer_attached_ = true;
  return true;
}

}  // namespace preemptible
