#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>

#include "preemptible/fiber.hpp"
#include "preemptible/sched.hpp"

namespace preemptible {

namespace {

// Each context owns a full stack, so the real pool is capped well below
// the simulated default.
constexpr std::size_t kRealPoolCap = 1024;

struct Job {
  Request req;
  Fiber* fiber = nullptr;
  Timestamp ready_at{};
};

class RealRun {
 public:
  RealRun(const ExperimentConfig& cfg, RecordSink sink)
      : cfg_(cfg),
        sink_(std::move(sink)),
        timer_(cfg.timer),
        pool_(std::min(cfg.context_pool, kRealPoolCap)),
        local_(cfg.workers),
        static_quantum_(initial_quantum(cfg.policy)) {
    result_.aggregate = RunAggregate(cfg.slo);
    result_.horizon = cfg.horizon;
    if (const auto* d = std::get_if<PreemptFCFSDynamic>(&cfg.policy)) {
      controller_.emplace(d->hyper, d->initial);
      window_.emplace(capacity_rps(cfg.workload, cfg.workers, cfg.horizon), cfg.reservoir_size, cfg.seed,
                      cfg.tail_input);
    }
  }

  ExperimentResult run() {
    result_.load_frac = load_fraction(cfg_);
    std::vector<std::thread> threads;
    threads.reserve(cfg_.workers);
    for (std::size_t w = 0; w < cfg_.workers; ++w) threads.emplace_back([this, w] { worker_loop(w); });
    try {
      dispatch_loop();
    } catch (...) {
      stop();
      for (auto& t : threads) t.join();
      throw;
    }
    stop();
    for (auto& t : threads) t.join();
    timer_.shutdown();
    if (worker_error_) std::rethrow_exception(worker_error_);

    std::size_t resident = running_.size();
    for (const auto& q : local_) resident += q.size();
    result_.resident_at_end = resident + in_flight_;
    result_.final_quantum = quantum();
    return std::move(result_);
  }

 private:
  Duration quantum() const noexcept { return controller_ ? controller_->quantum() : static_quantum_; }

  void stop() {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
  }

  void wait_until(Timestamp t) {
    for (;;) {
      const Duration left = t - timer_.now();
      if (left.count() <= 0) return;
      if (left > std::chrono::microseconds(200)) {
        std::this_thread::sleep_for(left - std::chrono::microseconds(100));
      } else {
        std::this_thread::yield();
      }
    }
  }

  void dispatch_loop() {
    RequestGenerator gen(cfg_.workload, cfg_.arrivals, cfg_.seed);
    const Timestamp end = at(cfg_.horizon);
    std::size_t next_worker = 0;
    Timestamp next_tick = controller_ ? add_saturating(Timestamp{}, controller_->hyper().period) : end;
    for (;;) {
      Request r = gen.next();
      if (r.arrival >= end) break;
      while (next_tick <= r.arrival && next_tick < end) {
        wait_until(next_tick);
        tick(next_tick);
        next_tick = add_saturating(next_tick, controller_->hyper().period);
      }
      wait_until(r.arrival);
      {
        std::lock_guard lock(mu_);
        if (worker_error_) return;
        ++result_.arrivals;
        if (window_) window_->on_arrival();
        const std::size_t w = next_worker;
        next_worker = (next_worker + 1) % cfg_.workers;
        if (cfg_.queue_capacity > 0 && local_[w].size() >= cfg_.queue_capacity) {
          ++result_.dropped;
          continue;
        }
        local_[w].push_back(Job{std::move(r), nullptr, {}});
        ++queued_;
        if (window_) window_->observe_queue_length(queued_);
      }
      cv_.notify_all();
    }
    while (next_tick < end) {
      wait_until(next_tick);
      tick(next_tick);
      next_tick = add_saturating(next_tick, controller_->hyper().period);
    }
    wait_until(end);
  }

  void tick(Timestamp t) {
    std::lock_guard lock(mu_);
    WindowStats stats = window_->snapshot(t);
    const Duration q = controller_->update(stats);
    result_.trace.push_back(
        ControllerTraceRow{t, stats.load, stats.qlen, stats.median, stats.p99, controller_->last_alpha(), q});
  }

  // Caller holds mu_. Returns false when there is nothing runnable.
  bool take(std::size_t w, Job& job, bool& fresh) {
    auto& local = local_[w];
    bool use_local = !local.empty();
    if (use_local && !running_.empty() && std::holds_alternative<RoundRobin>(cfg_.policy)) {
      use_local = local.front().req.arrival <= running_.front().ready_at;
    }
    if (use_local) {
      Fiber* f = pool_.try_acquire();
      if (f) {
        job = std::move(local.front());
        local.pop_front();
        job.fiber = f;
        fresh = true;
        return true;
      }
    }
    if (running_.empty()) return false;
    job = std::move(running_.front());
    running_.pop_front();
    fresh = false;
    return true;
  }

  void worker_loop(std::size_t w) {
    try {
      FiberExecutor exec(timer_, static_cast<std::uint32_t>(w));
      for (;;) {
        Job job;
        bool fresh = false;
        {
          std::unique_lock lock(mu_);
          cv_.wait(lock, [&] { return stopping_ || take(w, job, fresh); });
          if (stopping_ && !job.fiber) return;
          --queued_;
          ++in_flight_;
        }
        run_slice(exec, job, fresh);
      }
    } catch (...) {
      std::lock_guard lock(mu_);
      if (!worker_error_) worker_error_ = std::current_exception();
      stopping_ = true;
      cv_.notify_all();
    }
  }

  void run_slice(FiberExecutor& exec, Job& job, bool fresh) {
    const Duration q = quantum();
    SliceResult slice;
    if (fresh) {
      job.req.dispatched_at = timer_.now();
      Fiber* f = job.fiber;
      const Duration demand = job.req.service_demand;
      slice = exec.launch(*f, [f, this, demand] { spin_for(*f, timer_, demand); }, q);
    } else {
      slice = exec.resume(*job.fiber, q);
    }
    if (job.fiber->error) std::rethrow_exception(job.fiber->error);
    job.req.preempt_count = job.fiber->preempt_count;

    if (slice.completed) {
      job.req.completed_at = timer_.now();
      job.req.remaining = Duration{0};
      const RunRecord rec = make_record(job.req);
      pool_.release(*job.fiber);
      std::lock_guard lock(mu_);
      --in_flight_;
      result_.aggregate.add(rec);
      ++result_.completions;
      if (window_) window_->on_completion(rec);
      if (sink_) sink_(rec);
      return;
    }
    {
      std::lock_guard lock(mu_);
      --in_flight_;
      ++result_.preemptions;
      job.ready_at = timer_.now();
      running_.push_back(std::move(job));
      ++queued_;
      if (window_) window_->observe_queue_length(queued_);
    }
    cv_.notify_all();
  }

  ExperimentConfig cfg_;
  RecordSink sink_;
  RealTimerService timer_;
  FiberPool pool_;

  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::deque<Job>> local_;
  std::deque<Job> running_;
  std::size_t queued_ = 0;
  std::size_t in_flight_ = 0;
  bool stopping_ = false;
  std::exception_ptr worker_error_;

  Duration static_quantum_;
  std::optional<QuantumController> controller_;
  std::optional<WindowCollector> window_;
  ExperimentResult result_;
};

}  // namespace

ExperimentResult run_realtime(const ExperimentConfig& cfg, RecordSink sink) {
  validate(cfg);
  if (cfg.timeline_bin.count() > 0) throw Error(Errc::InvalidConfig, "timeline is only available in simulation");
  RealRun run(cfg, std::move(sink));
  return run.run();
}

}  // namespace preemptible
