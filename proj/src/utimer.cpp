#include "preemptible/utimer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace preemptible {

// ---------------------------------------------------------------------------
// DeadlineCell

void DeadlineCell::write(std::int64_t deadline_ns) noexcept {
  const std::uint64_t s = seq_.load(std::memory_order_relaxed);
  const std::uint64_t g = generation_.load(std::memory_order_relaxed) + 1;
  seq_.store(s + 1, std::memory_order_relaxed);
  std::atomic_thread_fence(std::memory_order_release);
  deadline_ns_.store(deadline_ns, std::memory_order_relaxed);
  generation_.store(g, std::memory_order_relaxed);
  seq_.store(s + 2, std::memory_order_release);
}

std::uint64_t DeadlineCell::arm(Timestamp at) noexcept {
  // The sentinel is reserved; an arm at "end of time" is still an arm.
  write(std::min(ns(at), kDisarmedNs - 1));
  return generation_.load(std::memory_order_relaxed);
}

void DeadlineCell::disarm() noexcept {
  if (deadline_ns_.load(std::memory_order_relaxed) == kDisarmedNs) return;
  write(kDisarmedNs);
}

DeadlineCell::Snapshot DeadlineCell::read() const noexcept {
  Snapshot snap;
  for (;;) {
    const std::uint64_t s1 = seq_.load(std::memory_order_acquire);
    if (s1 & 1U) continue;
    snap.deadline_ns = deadline_ns_.load(std::memory_order_relaxed);
    snap.generation = generation_.load(std::memory_order_relaxed);
    std::atomic_thread_fence(std::memory_order_acquire);
    if (seq_.load(std::memory_order_relaxed) == s1) return snap;
  }
}

void validate(const TimerConfig& cfg) {
  if (cfg.wheel_slot.count() <= 0) throw Error(Errc::InvalidConfig, "timer wheel_slot must be positive");
  if (cfg.wheel_slots < 2) throw Error(Errc::InvalidConfig, "timer wheel_slots must be >= 2");
  if (cfg.capacity == 0) throw Error(Errc::InvalidConfig, "timer capacity must be positive");
  if (cfg.poll_interval.count() < 0) throw Error(Errc::InvalidConfig, "timer poll_interval must be >= 0");
}

// ---------------------------------------------------------------------------
// SimTimerService

SimTimerService::SimTimerService(EventQueue& queue, TimerConfig cfg) : queue_(queue), cfg_(cfg) {
  validate(cfg_);
  if (!queue_.attach_timer()) throw Error(Errc::AlreadyInitialized, "event queue already has a timer service");
  slots_ = std::make_unique<Slot[]>(cfg_.capacity);
  if (cfg_.use_wheel) wheel_ = std::make_unique<TimingWheel>(cfg_.wheel_slot, cfg_.wheel_slots);
}

SimTimerService::~SimTimerService() { queue_.detach_timer(); }

CellId SimTimerService::register_cell(std::uint32_t owner, NotifyFn on_fire) {
  if (count_ >= cfg_.capacity) {
    throw Error(Errc::CapacityExceeded, "timer cell table full (" + std::to_string(cfg_.capacity) + ")");
  }
  Slot& slot = slots_[count_];
  slot.cell.set_owner(owner);
  slot.on_fire = std::move(on_fire);
  return CellId{static_cast<std::uint32_t>(count_++)};
}

std::uint64_t SimTimerService::arm(CellId id, Timestamp at) {
  Slot& slot = slots_[id.index];
  const std::uint64_t gen = slot.cell.arm(at);
  if (wheel_) wheel_->insert(TimerEntry{slot.cell.read().deadline(), id.index, gen});
  if (!wake_at_ || at < *wake_at_) {
    const Timestamp wake = std::max(at, queue_.now());
    wake_at_ = wake;
    queue_.schedule(wake, EventKind::QuantumExpiry, ++wake_token_);
  }
  return gen;
}

void SimTimerService::disarm(CellId id) { slots_[id.index].cell.disarm(); }

std::optional<Timestamp> SimTimerService::earliest_pending() {
  if (wheel_) return wheel_->earliest();
  std::optional<Timestamp> best;
  for (std::size_t i = 0; i < count_; ++i) {
    const auto snap = slots_[i].cell.read();
    if (!snap.armed() || snap.generation == slots_[i].fired_generation) continue;
    if (!best || snap.deadline() < *best) best = snap.deadline();
  }
  return best;
}

void SimTimerService::collect_due(Timestamp now, std::vector<TimerEntry>& due) {
  due.clear();
  if (wheel_) {
    wheel_->expire(now, due);
    return;
  }
  for (std::size_t i = 0; i < count_; ++i) {
    const auto snap = slots_[i].cell.read();
    if (snap.armed() && snap.generation != slots_[i].fired_generation && snap.deadline() <= now) {
      due.push_back(TimerEntry{snap.deadline(), static_cast<std::uint32_t>(i), snap.generation});
    }
  }
}

void SimTimerService::reschedule() {
  const auto next = earliest_pending();
  if (!next) return;
  if (!wake_at_ || *next < *wake_at_) {
    const Timestamp wake = std::max(*next, queue_.now());
    wake_at_ = wake;
    queue_.schedule(wake, EventKind::QuantumExpiry, ++wake_token_);
  }
}

bool SimTimerService::handle(const SimEvent& event) {
  if (event.kind != EventKind::QuantumExpiry) return false;
  if (event.payload != wake_token_) return true;  // superseded wake-up
  wake_at_.reset();

  const Timestamp now = queue_.now();
  collect_due(now, scratch_);
  std::sort(scratch_.begin(), scratch_.end(), [](const TimerEntry& a, const TimerEntry& b) {
    return std::tie(a.deadline, a.cell) < std::tie(b.deadline, b.cell);
  });
  // Handlers may arm more cells, so work from a private copy.
  std::vector<TimerEntry> due;
  due.swap(scratch_);
  for (const TimerEntry& e : due) {
    Slot& slot = slots_[e.cell];
    const auto snap = slot.cell.read();
    if (!snap.armed() || snap.generation != e.generation || slot.fired_generation == e.generation) continue;
    slot.fired_generation = e.generation;
    ++delivered_;
    if (slot.on_fire) {
      slot.on_fire(Notification{slot.cell.owner(), CellId{e.cell}, e.generation, snap.deadline(), now});
    }
  }
  due.clear();
  scratch_.swap(due);
  reschedule();
  return true;
}

// ---------------------------------------------------------------------------
// Precision helpers

PrecisionStats summarize_precision(std::vector<std::int64_t> errors_ns, std::vector<std::int64_t> gaps_ns,
                                   Duration period, std::size_t cells) {
  PrecisionStats stats;
  stats.cells = cells;
  stats.period = period;
  if (!errors_ns.empty()) {
    std::vector<double> abs_err(errors_ns.size());
    std::transform(errors_ns.begin(), errors_ns.end(), abs_err.begin(),
                   [](std::int64_t e) { return std::abs(static_cast<double>(e)); });
    stats.mean_abs_err_ns = std::accumulate(abs_err.begin(), abs_err.end(), 0.0) / static_cast<double>(abs_err.size());
    stats.rel_err = stats.mean_abs_err_ns / static_cast<double>(period.count());
    std::sort(abs_err.begin(), abs_err.end());
    const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(abs_err.size())));
    stats.p99_abs_err_ns = abs_err[std::max<std::size_t>(rank, 1) - 1];
  }
  if (!gaps_ns.empty()) {
    stats.mean_gap_ns = std::accumulate(gaps_ns.begin(), gaps_ns.end(), 0.0) / static_cast<double>(gaps_ns.size());
  }
  stats.errors_ns = std::move(errors_ns);
  return stats;
}

namespace {

struct SimProbeCell {
  CellId id;
  Timestamp deadline{};
  std::vector<std::int64_t> fires;
};

}  // namespace

PrecisionStats scalability_probe(SimTimerService& service, std::size_t cells, Duration period,
                                 std::size_t samples_per_cell) {
  if (period.count() <= 0) throw Error(Errc::InvalidArgument, "period must be positive");
  std::vector<SimProbeCell> probes(cells);
  const std::size_t fires_needed = samples_per_cell + 1;
  for (std::size_t i = 0; i < cells; ++i) {
    SimProbeCell* p = &probes[i];
    p->fires.reserve(fires_needed);
    p->id = service.register_cell(static_cast<std::uint32_t>(i), [p, &service, period, fires_needed](const Notification& n) {
      p->fires.push_back(ns(n.fired_at));
      if (p->fires.size() < fires_needed) {
        p->deadline = n.deadline + period;
        service.arm(p->id, p->deadline);
      }
    });
  }
  const Timestamp start = service.now() + period;
  for (std::size_t i = 0; i < cells; ++i) {
    probes[i].deadline = start + period * static_cast<std::int64_t>(i) / static_cast<std::int64_t>(cells);
    service.arm(probes[i].id, probes[i].deadline);
  }
  EventQueue& q = service.queue();
  while (auto ev = q.pop()) service.handle(*ev);

  std::vector<std::int64_t> errors, gaps;
  for (const auto& p : probes) {
    for (std::size_t k = 1; k < p.fires.size(); ++k) {
      const std::int64_t gap = p.fires[k] - p.fires[k - 1];
      gaps.push_back(gap);
      errors.push_back(gap - period.count());
    }
  }
  return summarize_precision(std::move(errors), std::move(gaps), period, cells);
}

PrecisionStats measure_precision(SimTimerService& service, Duration period, std::size_t n) {
  return scalability_probe(service, 1, period, n);
}

}  // namespace preemptible
