#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <vector>

#include "preemptible/clock.hpp"

namespace preemptible {

enum class ContextState : std::uint8_t { Fresh, Running, Preempted, Completed };

std::string_view to_string(ContextState s) noexcept;

/// What one launch/resume did to its context.
struct SliceResult {
  bool completed = false;
  Duration consumed{};  // service time spent in this slice
  Duration overhead{};  // preemption cost charged to the worker
};

/// Fixed-capacity free list of contexts shared by all workers. Contexts are
/// allocated once; acquire hands out a Fresh one with a new id. Safe to use
/// from several threads.
template <class Context>
class ContextPool {
 public:
  template <class... Args>
  explicit ContextPool(std::size_t capacity, const Args&... args) : capacity_(capacity) {
    storage_.reserve(capacity);
    free_.reserve(capacity);
    for (std::size_t i = 0; i < capacity; ++i) {
      storage_.push_back(std::make_unique<Context>(args...));
      free_.push_back(storage_.back().get());
    }
  }

  /// Throws Errc::PoolExhausted when every context is in use.
  Context& acquire() {
    std::lock_guard lock(mutex_);
    if (free_.empty()) {
      throw Error(Errc::PoolExhausted, "all " + std::to_string(capacity_) + " contexts are in use");
    }
    Context* ctx = free_.back();
    free_.pop_back();
    ctx->reset(++last_id_);
    return *ctx;
  }

  Context* try_acquire() noexcept {
    std::lock_guard lock(mutex_);
    if (free_.empty()) return nullptr;
    Context* ctx = free_.back();
    free_.pop_back();
    ctx->reset(++last_id_);
    return ctx;
  }

  void release(Context& ctx) {
    std::lock_guard lock(mutex_);
    if (free_.size() >= capacity_) throw Error(Errc::InvalidState, "context released twice");
    free_.push_back(&ctx);
  }

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t free_count() const {
    std::lock_guard lock(mutex_);
    return free_.size();
  }
  std::size_t in_use() const { return capacity_ - free_count(); }

 private:
  std::size_t capacity_;
  std::vector<std::unique_ptr<Context>> storage_;
  std::vector<Context*> free_;
  std::uint64_t last_id_ = 0;
  mutable std::mutex mutex_;
};

/// Simulation-backend context: the saved progress is the remaining demand.
struct SimContext {
  std::uint64_t id = 0;
  ContextState state = ContextState::Fresh;
  Duration remaining{};
  std::uint32_t preempt_count = 0;
  Duration quantum_used{};

  void reset(std::uint64_t new_id) noexcept { *this = SimContext{new_id}; }
};

/// Costs charged by the simulated preemption mechanism.
struct PreemptionModel {
  Duration overhead{1000};  // per preemption, sender and receiver combined
};

/// Starts a Fresh context with `demand` of work and runs one slice of at
/// most `timeout` (kInfinite disables preemption).
SliceResult fn_launch(SimContext& ctx, Duration demand, Duration timeout, const PreemptionModel& model = {});

/// Continues a Preempted context for one more slice.
SliceResult fn_resume(SimContext& ctx, Duration timeout, const PreemptionModel& model = {});

template <class Context>
bool fn_completed(const Context& ctx) noexcept {
  return ctx.state == ContextState::Completed;
}

}  // namespace preemptible
