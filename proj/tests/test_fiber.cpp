#include <gtest/gtest.h>

#include <thread>

#include "preemptible/fiber.hpp"

using namespace preemptible;
using namespace std::chrono_literals;

namespace {

TimerConfig yielding() {
  TimerConfig cfg;
  cfg.poll_mode = PollMode::Yield;
  return cfg;
}

}  // namespace

TEST(Fiber, ImmediateReturnCompletesWithoutNotifications) {
  RealTimerService timer(yielding());
  FiberExecutor exec(timer, 0);
  Fiber f;
  f.reset(1);
  bool ran = false;
  const auto r = exec.launch(f, [&] { ran = true; }, 50ms);
  EXPECT_TRUE(ran);
  EXPECT_TRUE(r.completed);
  EXPECT_TRUE(fn_completed(f));
  EXPECT_EQ(exec.notifications(), 0u);
  EXPECT_EQ(f.preempt_count, 0u);
}

TEST(Fiber, ExceptionsAreCapturedOnTheFiber) {
  RealTimerService timer(yielding());
  FiberExecutor exec(timer, 0);
  Fiber f;
  const auto r = exec.launch(f, [] { throw std::runtime_error("boom"); }, kInfinite);
  EXPECT_TRUE(r.completed);
  ASSERT_TRUE(f.error);
  EXPECT_THROW(std::rethrow_exception(f.error), std::runtime_error);
}

TEST(Fiber, SpinningWorkIsPreemptedAndResumed) {
  RealTimerService timer(yielding());
  FiberExecutor exec(timer, 0);
  Fiber f;
  const Duration demand = 40ms;
  auto r = exec.launch(f, [&] { spin_for(f, timer, demand); }, 2ms);
  int slices = 1;
  while (!r.completed) {
    ASSERT_EQ(f.state, ContextState::Preempted);
    r = exec.resume(f, 2ms);
    ASSERT_LT(++slices, 10000);
  }
  EXPECT_GE(f.preempt_count, 1u);
  EXPECT_EQ(f.preempt_count, static_cast<std::uint32_t>(slices - 1));
  EXPECT_GE(f.quantum_used, demand);
  EXPECT_GE(exec.notifications(), f.preempt_count);
}

TEST(Fiber, PreemptedFiberResumesOnAnotherThread) {
  RealTimerService timer(yielding());
  Fiber f;
  const Duration demand = 20ms;
  {
    FiberExecutor exec(timer, 0);
    SliceResult r;
    // Retry until a preemption lands; a very late poller could let it finish.
    for (int attempt = 0; attempt < 5; ++attempt) {
      f.reset(static_cast<std::uint64_t>(attempt + 1));
      r = exec.launch(f, [&] { spin_for(f, timer, demand); }, 1ms);
      if (!r.completed) break;
    }
    ASSERT_FALSE(r.completed);
  }
  bool done = false;
  std::thread other([&] {
    FiberExecutor exec(timer, 1);
    SliceResult r;
    do {
      r = exec.resume(f, kInfinite);
    } while (!r.completed);
    done = true;
  });
  other.join();
  EXPECT_TRUE(done);
  EXPECT_GE(f.quantum_used, demand);
}

TEST(Fiber, StateChecks) {
  RealTimerService timer(yielding());
  FiberExecutor exec(timer, 0);
  Fiber f;
  EXPECT_THROW(exec.resume(f, 1ms), Error);
  exec.launch(f, [] {}, 1ms);
  EXPECT_THROW(exec.launch(f, [] {}, 1ms), Error);
  EXPECT_THROW(FiberExecutor(timer, 1), Error);
}

TEST(Fiber, PoolHandsOutStacks) {
  FiberPool pool(4, std::size_t{32 * 1024});
  Fiber& f = pool.acquire();
  EXPECT_EQ(f.stack_size(), 32u * 1024u);
  EXPECT_EQ(f.state, ContextState::Fresh);
  pool.release(f);
}
