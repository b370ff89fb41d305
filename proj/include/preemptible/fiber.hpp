#pragma once

#include <ucontext.h>

#include <atomic>
#include <csignal>
#include <exception>
#include <functional>
#include <memory>

#include "preemptible/preempt.hpp"
#include "preemptible/utimer.hpp"

namespace preemptible {

inline constexpr std::size_t kDefaultStackSize = 64 * 1024;

/// Real-backend context: its own stack and a saved ucontext.
class Fiber {
 public:
  explicit Fiber(std::size_t stack_size = kDefaultStackSize);
  Fiber(const Fiber&) = delete;
  Fiber& operator=(const Fiber&) = delete;

  void reset(std::uint64_t new_id) noexcept;

  std::uint64_t id = 0;
  ContextState state = ContextState::Fresh;
  std::uint32_t preempt_count = 0;
  Duration quantum_used{};
  std::exception_ptr error;  // set if work threw

  std::size_t stack_size() const noexcept { return stack_size_; }
  /// Time spent running so far, including the current slice.
  Duration elapsed(Timestamp now) const noexcept;

 private:
  friend class FiberExecutor;

  std::size_t stack_size_;
  std::unique_ptr<char[]> stack_;
  ucontext_t uc_{};
  std::function<void()> work_;
  Timestamp slice_start_{};
  volatile std::sig_atomic_t running_ = 0;
  volatile std::sig_atomic_t finished_ = 0;
};

using FiberPool = ContextPool<Fiber>;

/// Runs fibers on the calling thread. Each executor owns one deadline cell
/// in the timer service; when the armed slice deadline passes, the poller
/// sends SIGURG to this thread and the handler switches back to the
/// executor. At most one executor per thread.
class FiberExecutor {
 public:
  FiberExecutor(RealTimerService& timer, std::uint32_t owner);
  ~FiberExecutor();
  FiberExecutor(const FiberExecutor&) = delete;
  FiberExecutor& operator=(const FiberExecutor&) = delete;

  SliceResult launch(Fiber& fiber, std::function<void()> work, Duration timeout);
  SliceResult resume(Fiber& fiber, Duration timeout);

  std::uint64_t notifications() const noexcept { return target_->notifications.load(std::memory_order_relaxed); }
  std::uint64_t preemptions() const noexcept { return preemptions_; }
  Timestamp now() const noexcept { return timer_.now(); }

  /// Installs the process-wide SIGURG handler. Idempotent.
  static void install_signal_handler();

 private:
  static void trampoline();
  static void on_signal(int, siginfo_t*, void*);
  SliceResult run_slice(Fiber& fiber, Duration timeout);

  // Shared with the timer handler, which may run after the executor is gone.
  struct Target {
    pthread_t thread{};
    std::atomic<bool> alive{true};
    std::atomic<std::uint64_t> armed_generation{0};
    std::atomic<std::uint64_t> signalled_generation{0};
    std::atomic<std::uint64_t> notifications{0};
  };

  RealTimerService& timer_;
  std::shared_ptr<Target> target_;
  CellId cell_;
  ucontext_t sched_uc_{};
  Fiber* current_ = nullptr;
  std::uint64_t preemptions_ = 0;
};

/// Busy-runs for `demand` of the fiber's own service time; preemption
/// pauses the count. Safe to call after the fiber migrates between threads.
void spin_for(const Fiber& fiber, const RealTimerService& clock, Duration demand);

}  // namespace preemptible
