#include "preemptible/fiber.hpp"

#include <pthread.h>

#include <cstring>
#include <mutex>

namespace preemptible {

namespace {

thread_local FiberExecutor* tls_executor = nullptr;

// Fibers migrate between threads, so the thread-local must be reloaded on
// every use rather than cached across a context switch.
[[gnu::noinline, gnu::noipa]] FiberExecutor* current_executor() noexcept { return tls_executor; }

}  // namespace

Fiber::Fiber(std::size_t stack_size) : stack_size_(stack_size), stack_(std::make_unique<char[]>(stack_size)) {
  if (stack_size < 16 * 1024) throw Error(Errc::InvalidArgument, "fiber stack must be at least 16 KiB");
}

void Fiber::reset(std::uint64_t new_id) noexcept {
  id = new_id;
  state = ContextState::Fresh;
  preempt_count = 0;
  quantum_used = Duration{0};
  error = nullptr;
  work_ = nullptr;
  running_ = 0;
  finished_ = 0;
}

Duration Fiber::elapsed(Timestamp now) const noexcept {
  const Duration used = quantum_used;
  return running_ ? used + (now - slice_start_) : used;
}

void spin_for(const Fiber& fiber, const RealTimerService& clock, Duration demand) {
  while (fiber.elapsed(clock.now()) < demand) {
  }
}

// ---------------------------------------------------------------------------

void FiberExecutor::install_signal_handler() {
  static std::once_flag once;
  std::call_once(once, [] {
    struct sigaction sa;
    std::memset(&sa, 0, sizeof sa);
    sa.sa_sigaction = &FiberExecutor::on_signal;
    sa.sa_flags = SA_SIGINFO | SA_RESTART;
    sigemptyset(&sa.sa_mask);
    if (sigaction(SIGURG, &sa, nullptr) != 0) throw Error(Errc::Runtime, "sigaction(SIGURG) failed");
  });
}

FiberExecutor::FiberExecutor(RealTimerService& timer, std::uint32_t owner)
    : timer_(timer), target_(std::make_shared<Target>()) {
  if (tls_executor) throw Error(Errc::AlreadyInitialized, "this thread already has a fiber executor");
  install_signal_handler();
  target_->thread = pthread_self();
  cell_ = timer_.register_cell(owner, [t = target_](const Notification& n) {
    if (!t->alive.load(std::memory_order_acquire)) return;
    if (n.generation != t->armed_generation.load(std::memory_order_acquire)) return;
    t->signalled_generation.store(n.generation, std::memory_order_release);
    t->notifications.fetch_add(1, std::memory_order_relaxed);
    pthread_kill(t->thread, SIGURG);
  });
  tls_executor = this;
}

FiberExecutor::~FiberExecutor() {
  target_->alive.store(false, std::memory_order_release);
  timer_.disarm(cell_);
  tls_executor = nullptr;
}

void FiberExecutor::on_signal(int, siginfo_t*, void*) {
  FiberExecutor* ex = current_executor();
  if (!ex) return;
  Fiber* f = ex->current_;
  if (!f || !f->running_) return;
  const std::uint64_t armed = ex->target_->armed_generation.load(std::memory_order_acquire);
  if (armed == 0 || ex->target_->signalled_generation.load(std::memory_order_acquire) != armed) return;
  f->running_ = 0;
  swapcontext(&f->uc_, &ex->sched_uc_);
  // Resumed, possibly on another thread; sigreturn restores the mask.
}

void FiberExecutor::trampoline() {
  Fiber* f = current_executor()->current_;
  try {
    f->work_();
  } catch (...) {
    f->error = std::current_exception();
  }
  f->finished_ = 1;
  std::atomic_signal_fence(std::memory_order_seq_cst);
  f->running_ = 0;
  std::atomic_signal_fence(std::memory_order_seq_cst);
  FiberExecutor* ex = current_executor();
  swapcontext(&f->uc_, &ex->sched_uc_);
}

SliceResult FiberExecutor::launch(Fiber& fiber, std::function<void()> work, Duration timeout) {
  if (fiber.state != ContextState::Fresh) {
    throw Error(Errc::InvalidState, "launch needs a Fresh fiber, got " + std::string(to_string(fiber.state)));
  }
  if (!work) throw Error(Errc::InvalidArgument, "launch needs a work function");
  fiber.work_ = std::move(work);
  if (getcontext(&fiber.uc_) != 0) throw Error(Errc::Runtime, "getcontext failed");
  fiber.uc_.uc_stack.ss_sp = fiber.stack_.get();
  fiber.uc_.uc_stack.ss_size = fiber.stack_size_;
  fiber.uc_.uc_link = nullptr;
  makecontext(&fiber.uc_, &FiberExecutor::trampoline, 0);
  return run_slice(fiber, timeout);
}

SliceResult FiberExecutor::resume(Fiber& fiber, Duration timeout) {
  if (fiber.state != ContextState::Preempted) {
    throw Error(Errc::InvalidState, "resume needs a Preempted fiber, got " + std::string(to_string(fiber.state)));
  }
  return run_slice(fiber, timeout);
}

SliceResult FiberExecutor::run_slice(Fiber& fiber, Duration timeout) {
  if (timeout.count() <= 0) throw Error(Errc::InvalidArgument, "timeout must be positive");
  if (current_) throw Error(Errc::InvalidState, "executor is already running a fiber");
  if (current_executor() != this) throw Error(Errc::InvalidState, "executor used from a foreign thread");

  current_ = &fiber;
  fiber.state = ContextState::Running;
  fiber.slice_start_ = timer_.now();
  if (timeout != kInfinite) {
    // Single writer: the next generation is known before the arm publishes it.
    const std::uint64_t next = timer_.cell(cell_).read().generation + 1;
    target_->armed_generation.store(next, std::memory_order_release);
    timer_.arm(cell_, add_saturating(fiber.slice_start_, timeout));
  }
  fiber.running_ = 1;
  std::atomic_signal_fence(std::memory_order_seq_cst);
  swapcontext(&sched_uc_, &fiber.uc_);
  std::atomic_signal_fence(std::memory_order_seq_cst);
  fiber.running_ = 0;

  timer_.disarm(cell_);
  target_->armed_generation.store(0, std::memory_order_release);
  const Duration consumed = timer_.now() - fiber.slice_start_;
  fiber.quantum_used += consumed;
  current_ = nullptr;

  SliceResult result{.completed = fiber.finished_ != 0, .consumed = consumed};
  if (result.completed) {
    fiber.state = ContextState::Completed;
    fiber.work_ = nullptr;
  } else {
    fiber.state = ContextState::Preempted;
    ++fiber.preempt_count;
    ++preemptions_;
  }
  return result;
}

}  // namespace preemptible
