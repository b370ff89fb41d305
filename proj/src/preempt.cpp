#include "preemptible/preempt.hpp"

#include <algorithm>

namespace preemptible {

std::string_view to_string(ContextState s) noexcept {
  switch (s) {
    case ContextState::Fresh: return "Fresh";
    case ContextState::Running: return "Running";
    case ContextState::Preempted: return "Preempted";
    case ContextState::Completed: return "Completed";
  }
  return "?";
}

namespace {

SliceResult run_slice(SimContext& ctx, Duration timeout, const PreemptionModel& model) {
  if (timeout.count() <= 0) throw Error(Errc::InvalidArgument, "timeout must be positive");
  ctx.state = ContextState::Running;
  const Duration slice = std::min(ctx.remaining, timeout);
  ctx.remaining -= slice;
  ctx.quantum_used += slice;
  SliceResult result{.completed = ctx.remaining.count() == 0, .consumed = slice};
  if (result.completed) {
    ctx.state = ContextState::Completed;
  } else {
    ctx.state = ContextState::Preempted;
    ++ctx.preempt_count;
    result.overhead = model.overhead;
  }
  return result;
}

}  // namespace

SliceResult fn_launch(SimContext& ctx, Duration demand, Duration timeout, const PreemptionModel& model) {
  if (ctx.state != ContextState::Fresh) {
    throw Error(Errc::InvalidState, "fn_launch needs a Fresh context, got " + std::string(to_string(ctx.state)));
  }
  if (demand.count() <= 0) throw Error(Errc::InvalidArgument, "demand must be positive");
  ctx.remaining = demand;
  return run_slice(ctx, timeout, model);
}

SliceResult fn_resume(SimContext& ctx, Duration timeout, const PreemptionModel& model) {
  if (ctx.state != ContextState::Preempted) {
    throw Error(Errc::InvalidState, "fn_resume needs a Preempted context, got " + std::string(to_string(ctx.state)));
  }
  return run_slice(ctx, timeout, model);
}

}  // namespace preemptible
