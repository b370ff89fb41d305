#pragma once

#include <atomic>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "preemptible/clock.hpp"
#include "preemptible/timing_wheel.hpp"

namespace preemptible {

inline constexpr std::int64_t kDisarmedNs = std::numeric_limits<std::int64_t>::max();
inline constexpr std::size_t kDefaultCellCapacity = 1024;

struct CellId {
  std::uint32_t index = 0;
  friend bool operator==(CellId, CellId) = default;
};

/// The shared slot through which an owner publishes its next preemption
/// time. One 64-byte line per cell. The owner is the only writer; the timer
/// service reads (deadline, generation) through a seqlock so it can never
/// observe a torn pair.
class alignas(64) DeadlineCell {
 public:
  struct Snapshot {
    std::int64_t deadline_ns = kDisarmedNs;
    std::uint64_t generation = 0;

    bool armed() const noexcept { return deadline_ns != kDisarmedNs; }
    Timestamp deadline() const noexcept { return Timestamp{Duration{deadline_ns}}; }
  };

  /// Owner only. Returns the new generation.
  std::uint64_t arm(Timestamp at) noexcept;
  /// Owner only. No-op on a disarmed cell; otherwise bumps the generation.
  void disarm() noexcept;

  Snapshot read() const noexcept;

  std::uint32_t owner() const noexcept { return owner_; }
  void set_owner(std::uint32_t owner) noexcept { owner_ = owner; }

 private:
  void write(std::int64_t deadline_ns) noexcept;

  std::atomic<std::uint64_t> seq_{0};
  std::atomic<std::int64_t> deadline_ns_{kDisarmedNs};
  std::atomic<std::uint64_t> generation_{0};
  std::uint32_t owner_ = 0;
};

static_assert(sizeof(DeadlineCell) == 64);
static_assert(alignof(DeadlineCell) == 64);

enum class PollMode : std::uint8_t { BusyPoll, Yield };

struct TimerConfig {
  Duration poll_interval{0};  // 0: tight loop
  PollMode poll_mode = PollMode::BusyPoll;
  bool use_wheel = false;
  Duration wheel_slot{3000};  // 3us, the minimum quantum
  std::size_t wheel_slots = 1024;
  std::size_t capacity = kDefaultCellCapacity;
};

void validate(const TimerConfig& cfg);

struct Notification {
  std::uint32_t owner = 0;
  CellId cell;
  std::uint64_t generation = 0;
  Timestamp deadline{};
  Timestamp fired_at{};
};

/// Runs in the timer service's context (the event loop in simulation, the
/// poller thread in real time). Real-time handlers must only set flags and
/// post signals.
using NotifyFn = std::function<void(const Notification&)>;

// ---------------------------------------------------------------------------

/// Timer service for the simulation backend. Schedules QuantumExpiry events
/// on the queue; the driver hands them back through handle(). Notifications
/// fire at exactly the armed deadline (or at the next dispatch when armed in
/// the past), ordered by (deadline, cell).
class SimTimerService {
 public:
  explicit SimTimerService(EventQueue& queue, TimerConfig cfg = {});
  ~SimTimerService();
  SimTimerService(const SimTimerService&) = delete;
  SimTimerService& operator=(const SimTimerService&) = delete;

  CellId register_cell(std::uint32_t owner, NotifyFn on_fire);
  std::uint64_t arm(CellId cell, Timestamp at);
  void disarm(CellId cell);

  /// Returns true if the event belonged to this service.
  bool handle(const SimEvent& event);

  Timestamp now() const noexcept { return queue_.now(); }
  EventQueue& queue() noexcept { return queue_; }
  const DeadlineCell& cell(CellId id) const { return slots_[id.index].cell; }
  std::size_t cell_count() const noexcept { return count_; }
  std::uint64_t delivered() const noexcept { return delivered_; }
  const TimerConfig& config() const noexcept { return cfg_; }

 private:
  struct Slot {
    DeadlineCell cell;
    NotifyFn on_fire;
    std::uint64_t fired_generation = 0;
  };

  std::optional<Timestamp> earliest_pending();
  void collect_due(Timestamp now, std::vector<TimerEntry>& due);
  void reschedule();

  EventQueue& queue_;
  TimerConfig cfg_;
  std::unique_ptr<Slot[]> slots_;
  std::size_t count_ = 0;
  std::unique_ptr<TimingWheel> wheel_;
  std::optional<Timestamp> wake_at_;
  std::uint64_t wake_token_ = 0;
  std::uint64_t delivered_ = 0;
  std::vector<TimerEntry> scratch_;
};

// ---------------------------------------------------------------------------

/// Real-time timer service: one dedicated poller thread watching every
/// registered cell and invoking the cell's handler once per armed
/// generation when the clock passes the deadline. Only one instance may be
/// live per process.
class RealTimerService {
 public:
  explicit RealTimerService(TimerConfig cfg = {});
  ~RealTimerService();
  RealTimerService(const RealTimerService&) = delete;
  RealTimerService& operator=(const RealTimerService&) = delete;

  /// Any thread. Throws Errc::CapacityExceeded when the table is full.
  CellId register_cell(std::uint32_t owner, NotifyFn on_fire);
  /// Owner only.
  std::uint64_t arm(CellId cell, Timestamp at);
  /// Owner only.
  void disarm(CellId cell);

  Timestamp now() const noexcept { return clock_.now(); }
  const DeadlineCell& cell(CellId id) const { return slots_[id.index].cell; }
  std::uint64_t delivered() const noexcept { return delivered_.load(std::memory_order_relaxed); }
  const TimerConfig& config() const noexcept { return cfg_; }

  /// Stops and joins the poller. Idempotent.
  void shutdown();

 private:
  struct alignas(64) Slot {
    DeadlineCell cell;
    NotifyFn on_fire;
    std::uint64_t fired_generation = 0;  // poller-private
  };

  void poll_loop();
  void fire(std::uint32_t index, const DeadlineCell::Snapshot& snap, Timestamp now);

  TimerConfig cfg_;
  RealClock clock_;
  std::unique_ptr<Slot[]> slots_;
  std::atomic<std::uint32_t> reserved_{0};
  std::atomic<std::uint32_t> published_{0};
  std::atomic<bool> stop_{false};
  std::atomic<std::uint64_t> delivered_{0};

  // Wheel mode: owners post arms here; the poller drains them into the wheel.
  std::unique_ptr<TimingWheel> wheel_;
  std::mutex arm_mutex_;
  std::vector<TimerEntry> arm_queue_;
  std::atomic<bool> arm_pending_{false};

  std::thread poller_;
};

// ---------------------------------------------------------------------------
// Precision measurement

struct PrecisionStats {
  std::size_t cells = 0;
  Duration period{};
  std::vector<std::int64_t> errors_ns;  // actual gap - period, per firing
  double mean_abs_err_ns = 0;
  double rel_err = 0;  // mean |error| / period
  double p99_abs_err_ns = 0;
  double mean_gap_ns = 0;
};

PrecisionStats summarize_precision(std::vector<std::int64_t> errors_ns, std::vector<std::int64_t> gaps_ns,
                                   Duration period, std::size_t cells);

/// Arms one periodic deadline n+1 times and reports gap errors between
/// consecutive firings.
PrecisionStats measure_precision(SimTimerService& service, Duration period, std::size_t n);
PrecisionStats measure_precision(RealTimerService& service, Duration period, std::size_t n);

/// Arms `cells` periodic deadlines (phases spread evenly over one period),
/// each firing `samples_per_cell` times, and pools the gap errors.
PrecisionStats scalability_probe(SimTimerService& service, std::size_t cells, Duration period,
                                 std::size_t samples_per_cell);
PrecisionStats scalability_probe(RealTimerService& service, std::size_t cells, Duration period,
                                 std::size_t samples_per_cell);

}  // namespace preemptible
