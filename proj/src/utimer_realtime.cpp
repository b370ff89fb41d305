#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <mutex>
#include <thread>

#include "preemptible/utimer.hpp"

namespace preemptible {

namespace {

std::atomic<bool> g_real_service_live{false};

}  // namespace

RealTimerService::RealTimerService(TimerConfig cfg) : cfg_(cfg) {
  validate(cfg_);
  if (g_real_service_live.exchange(true)) {
    throw Error(Errc::AlreadyInitialized, "a real-time timer service is already running");
  }
  slots_ = std::make_unique<Slot[]>(cfg_.capacity);
  if (cfg_.use_wheel) wheel_ = std::make_unique<TimingWheel>(cfg_.wheel_slot, cfg_.wheel_slots);
  poller_ = std::thread([this] { poll_loop(); });
}

RealTimerService::~RealTimerService() { shutdown(); }

void RealTimerService::shutdown() {
  if (!poller_.joinable()) return;
  stop_.store(true, std::memory_order_release);
  poller_.join();
  g_real_service_live.store(false);
}

CellId RealTimerService::register_cell(std::uint32_t owner, NotifyFn on_fire) {
  const std::uint32_t index = reserved_.fetch_add(1, std::memory_order_relaxed);
  if (index >= cfg_.capacity) {
    reserved_.fetch_sub(1, std::memory_order_relaxed);
    throw Error(Errc::CapacityExceeded, "timer cell table full (" + std::to_string(cfg_.capacity) + ")");
  }
  Slot& slot = slots_[index];
  slot.cell.set_owner(owner);
  slot.on_fire = std::move(on_fire);
  // Publish in index order so the poller only ever scans initialised slots.
  std::uint32_t expected = index;
  while (!published_.compare_exchange_weak(expected, index + 1, std::memory_order_release,
                                           std::memory_order_relaxed)) {
    expected = index;
    std::this_thread::yield();
  }
  return CellId{index};
}

std::uint64_t RealTimerService::arm(CellId id, Timestamp at) {
  Slot& slot = slots_[id.index];
  const std::uint64_t gen = slot.cell.arm(at);
  if (wheel_) {
    std::lock_guard lock(arm_mutex_);
    arm_queue_.push_back(TimerEntry{at, id.index, gen});
    arm_pending_.store(true, std::memory_order_release);
  }
  return gen;
}

void RealTimerService::disarm(CellId id) { slots_[id.index].cell.disarm(); }

void RealTimerService::fire(std::uint32_t index, const DeadlineCell::Snapshot& snap, Timestamp now) {
  Slot& slot = slots_[index];
  slot.fired_generation = snap.generation;
  delivered_.fetch_add(1, std::memory_order_relaxed);
  if (slot.on_fire) {
    slot.on_fire(Notification{slot.cell.owner(), CellId{index}, snap.generation, snap.deadline(), now});
  }
}

void RealTimerService::poll_loop() {
  std::vector<TimerEntry> drained;
  std::vector<TimerEntry> due;
  while (!stop_.load(std::memory_order_acquire)) {
    const Timestamp now = clock_.now();
    if (wheel_) {
      if (arm_pending_.exchange(false, std::memory_order_acq_rel)) {
        {
          std::lock_guard lock(arm_mutex_);
          drained.swap(arm_queue_);
        }
        for (const auto& e : drained) wheel_->insert(e);
        drained.clear();
      }
      due.clear();
      wheel_->expire(now, due);
      std::sort(due.begin(), due.end(),
                [](const TimerEntry& a, const TimerEntry& b) { return a.deadline < b.deadline; });
      for (const auto& e : due) {
        const auto snap = slots_[e.cell].cell.read();
        if (snap.armed() && snap.generation == e.generation && slots_[e.cell].fired_generation != e.generation) {
          fire(e.cell, snap, now);
        }
      }
    } else {
      const std::uint32_t n = published_.load(std::memory_order_acquire);
      for (std::uint32_t i = 0; i < n; ++i) {
        const auto snap = slots_[i].cell.read();
        if (snap.armed() && snap.generation != slots_[i].fired_generation && snap.deadline() <= now) {
          fire(i, snap, now);
        }
      }
    }

    if (cfg_.poll_mode == PollMode::Yield) std::this_thread::yield();
    if (cfg_.poll_interval.count() > 0) {
      const Timestamp until = now + cfg_.poll_interval;
      while (clock_.now() < until && !stop_.load(std::memory_order_relaxed)) {
        if (cfg_.poll_mode == PollMode::Yield) std::this_thread::yield();
      }
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

struct RealProbeCell {
  CellId id;
  Timestamp deadline{};
  std::vector<std::int64_t> fires;
};

}  // namespace

PrecisionStats scalability_probe(RealTimerService& service, std::size_t cells, Duration period,
                                 std::size_t samples_per_cell) {
  if (period.count() <= 0) throw Error(Errc::InvalidArgument, "period must be positive");
  const std::size_t fires_needed = samples_per_cell + 1;
  // Shared with the handlers so a timed-out probe never leaves them dangling.
  struct ProbeState {
    std::vector<RealProbeCell> probes;
    std::mutex mu;
    std::condition_variable done;
    std::size_t finished = 0;
  };
  auto state = std::make_shared<ProbeState>();
  state->probes.resize(cells);

  // Handlers run on the poller thread; after the initial arm each cell is
  // owned (and re-armed) by its handler alone.
  for (std::size_t i = 0; i < cells; ++i) {
    RealProbeCell* p = &state->probes[i];
    p->fires.reserve(fires_needed);
    p->id = service.register_cell(
        static_cast<std::uint32_t>(i), [p, state, &service, period, fires_needed](const Notification& n) {
          p->fires.push_back(ns(n.fired_at));
          if (p->fires.size() < fires_needed) {
            p->deadline = n.deadline + period;
            service.arm(p->id, p->deadline);
          } else {
            std::lock_guard lock(state->mu);
            if (++state->finished == state->probes.size()) state->done.notify_one();
          }
        });
  }

  const Timestamp start = service.now() + std::max<Duration>(period, std::chrono::milliseconds(1));
  for (std::size_t i = 0; i < cells; ++i) {
    auto& p = state->probes[i];
    p.deadline = start + period * static_cast<std::int64_t>(i) / static_cast<std::int64_t>(cells);
    service.arm(p.id, p.deadline);
  }

  const auto budget = period * static_cast<std::int64_t>(fires_needed + 2) * 4 + std::chrono::seconds(5);
  {
    // Block rather than poll: on a small host a polling waiter shows up in
    // the measured gaps.
    std::unique_lock lock(state->mu);
    if (!state->done.wait_for(lock, budget, [&] { return state->finished == cells; })) {
      throw Error(Errc::Runtime, "timer probe did not complete in time");
    }
  }

  std::vector<std::int64_t> errors, gaps;
  for (const auto& p : state->probes) {
    for (std::size_t k = 1; k < p.fires.size(); ++k) {
      const std::int64_t gap = p.fires[k] - p.fires[k - 1];
      gaps.push_back(gap);
      errors.push_back(gap - period.count());
    }
  }
  return summarize_precision(std::move(errors), std::move(gaps), period, cells);
}

PrecisionStats measure_precision(RealTimerService& service, Duration period, std::size_t n) {
  return scalability_probe(service, 1, period, n);
}

}  // namespace preemptible
