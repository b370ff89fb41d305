#include "preemptible/sched.hpp"

#include <algorithm>
#include <cmath>

namespace preemptible {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

[[noreturn]] void bad(const std::string& msg) { throw Error(Errc::InvalidConfig, msg); }

void check_quantum(Duration q, Duration min_quantum, const char* what) {
  if (q != kInfinite && q < min_quantum) {
    bad(std::string(what) + " quantum " + std::to_string(q.count()) + "ns is below the minimum " +
        std::to_string(min_quantum.count()) + "ns");
  }
}

}  // namespace

std::string policy_name(const Policy& p) {
  return std::visit(Overloaded{
                        [](const RunToCompletion&) { return std::string("rtc"); },
                        [](const PreemptFCFS&) { return std::string("fcfs"); },
                        [](const PreemptFCFSDynamic&) { return std::string("dynamic"); },
                        [](const RoundRobin&) { return std::string("rr"); },
                    },
                    p);
}

Duration initial_quantum(const Policy& p) {
  return std::visit(Overloaded{
                        [](const RunToCompletion&) { return kInfinite; },
                        [](const PreemptFCFS& f) { return f.quantum; },
                        [](const PreemptFCFSDynamic& d) { return std::clamp(d.initial, d.hyper.t_min, d.hyper.t_max); },
                        [](const RoundRobin& r) { return r.quantum; },
                    },
                    p);
}

void validate(const ExperimentConfig& cfg) {
  validate(cfg.workload);
  validate(cfg.arrivals);
  if (cfg.workers == 0) bad("workers must be positive");
  if (cfg.min_quantum.count() <= 0) bad("min_quantum must be positive");
  if (cfg.preemption_overhead.count() < 0) bad("preemption_overhead must be >= 0");
  if (cfg.horizon.count() < 0) bad("horizon must be >= 0");
  if (cfg.context_pool < cfg.workers) bad("context_pool must be at least the worker count");
  if (cfg.reservoir_size == 0) bad("reservoir_size must be positive");
  if (cfg.timeline_bin.count() < 0) bad("timeline_bin must be >= 0");
  if (cfg.slo.count() <= 0) bad("slo must be positive");
  std::visit(Overloaded{
                 [](const RunToCompletion&) {},
                 [&](const PreemptFCFS& f) {
                   if (f.quantum.count() <= 0) bad("quantum must be positive");
                   check_quantum(f.quantum, cfg.min_quantum, "fcfs");
                 },
                 [&](const PreemptFCFSDynamic& d) {
                   validate(d.hyper);
                   check_quantum(d.hyper.t_min, cfg.min_quantum, "dynamic t_min");
                 },
                 [&](const RoundRobin& r) {
                   if (r.quantum.count() <= 0) bad("quantum must be positive");
                   check_quantum(r.quantum, cfg.min_quantum, "rr");
                 },
             },
             cfg.policy);
  validate(cfg.timer);
}

double capacity_rps(const WorkloadSpec& w, std::size_t workers, Duration horizon) {
  const double mean_ns = w.mean_service_ns(at(horizon));
  if (!(mean_ns > 0)) throw Error(Errc::InvalidConfig, "workload mean service time must be positive");
  return static_cast<double>(workers) * 1e9 / mean_ns;
}

double load_fraction(const ExperimentConfig& cfg) {
  return mean_rate_rps(cfg.arrivals) / capacity_rps(cfg.workload, cfg.workers, cfg.horizon);
}

ArrivalProcess poisson_at_load(const WorkloadSpec& w, std::size_t workers, Duration horizon, double load) {
  return Poisson{load * capacity_rps(w, workers, horizon)};
}

void write_timeline_header(std::ostream& out) { out << "# preemptible timeline v1\n" << kTimelineHeader << '\n'; }

void write_timeline_row(std::ostream& out, const TimelineRow& row) {
  out << ns(row.bin_start) << ',' << format_double(row.offered_qps, 1) << ','
      << (row.lc_mean_ns ? format_double(*row.lc_mean_ns, 1) : "") << ','
      << (row.be_mean_ns ? format_double(*row.be_mean_ns, 1) : "") << ',' << format_quantum(row.quantum) << '\n';
}

double ExperimentResult::throughput_rps() const noexcept {
  const double s = std::chrono::duration<double>(horizon).count();
  return s > 0 ? static_cast<double>(completions) / s : 0.0;
}

SummaryRow summarize(const ExperimentConfig& cfg, const ExperimentResult& result) {
  SummaryRow row;
  row.policy = policy_name(cfg.policy);
  row.workload = cfg.workload.name;
  row.load_frac = result.load_frac;
  row.quantum = result.final_quantum;
  const auto& all = result.aggregate.all();
  if (!all.empty()) {
    row.p50 = all.quantile(0.5);
    row.p99 = all.quantile(0.99);
    row.slo_viol_rate = result.aggregate.slo_violation_rate();
  }
  row.throughput_rps = result.throughput_rps();
  row.mean_preempts = result.aggregate.mean_preempts();
  return row;
}

// ---------------------------------------------------------------------------

namespace {

enum class Sub : std::uint32_t { Complete = 1, WorkerFree = 2 };

constexpr std::uint64_t pack(Sub s, std::size_t worker) noexcept {
  return (static_cast<std::uint64_t>(s) << 32) | static_cast<std::uint64_t>(worker);
}

struct TimelineBin {
  std::uint64_t arrivals = 0;
  double lc_sum = 0;
  std::uint64_t lc_n = 0;
  double be_sum = 0;
  std::uint64_t be_n = 0;
};

}  // namespace

struct SimScheduler::Impl {
  struct Resident {
    Request req;
    SimContext* ctx = nullptr;
  };
  struct Ready {
    std::uint32_t slot;
    Timestamp ready_at;
  };
  struct Worker {
    std::deque<std::uint32_t> local;
    std::optional<std::uint32_t> current;
    bool busy = false;  // in a slice or paying preemption overhead
    bool will_complete = false;
    std::uint64_t slice_gen = 0;
    CellId cell;
  };

  ExperimentConfig cfg;
  RecordSink sink;
  EventQueue queue;
  std::unique_ptr<SimTimerService> timer;
  ContextPool<SimContext> pool;
  PreemptionModel model;

  std::optional<RequestGenerator> generator;
  std::vector<Request> trace;
  std::size_t trace_pos = 0;
  std::optional<Request> pending_arrival;

  std::optional<QuantumController> controller;
  std::optional<WindowCollector> window;
  Duration static_quantum;

  std::vector<Resident> slab;
  std::vector<std::uint32_t> free_slots;
  std::vector<Worker> workers;
  std::deque<Ready> running;
  std::size_t rr_next = 0;
  std::size_t queued = 0;  // local queues + running list
  bool starved = false;  // a launch was refused for lack of contexts

  std::vector<TimelineBin> bins;
  ExperimentResult result;

  Impl(const ExperimentConfig& c, RecordSink s)
      : cfg(c), sink(std::move(s)), pool((validate(c), c.context_pool)), model{c.preemption_overhead} {
    TimerConfig tc;
    tc.capacity = std::max<std::size_t>(cfg.workers, 1);
    timer = std::make_unique<SimTimerService>(queue, tc);
    workers.resize(cfg.workers);
    for (std::size_t w = 0; w < cfg.workers; ++w) {
      workers[w].cell = timer->register_cell(static_cast<std::uint32_t>(w),
                                             [this, w](const Notification& n) { on_expiry(w, n); });
    }
    static_quantum = initial_quantum(cfg.policy);
    result.aggregate = RunAggregate(cfg.slo);
    result.horizon = cfg.horizon;

    if (const auto* d = std::get_if<PreemptFCFSDynamic>(&cfg.policy)) {
      controller.emplace(d->hyper, d->initial);
      window.emplace(capacity_rps(cfg.workload, cfg.workers, cfg.horizon), cfg.reservoir_size, cfg.seed,
                     cfg.tail_input);
    }
    if (cfg.timeline_bin.count() > 0) {
      const auto n = static_cast<std::size_t>((cfg.horizon.count() + cfg.timeline_bin.count() - 1) /
                                              cfg.timeline_bin.count());
      bins.resize(n);
    }
  }

  Duration quantum() const noexcept { return controller ? controller->quantum() : static_quantum; }

  // -- arrivals ------------------------------------------------------------

  std::optional<Request> next_request() {
    if (generator) return generator->next();
    if (trace_pos < trace.size()) return trace[trace_pos++];
    return std::nullopt;
  }

  void schedule_next_arrival() {
    auto r = next_request();
    if (!r || r->arrival >= at(cfg.horizon)) return;
    pending_arrival = std::move(r);
    queue.schedule(pending_arrival->arrival, EventKind::Arrival);
  }

  void on_arrival() {
    Request r = std::move(*pending_arrival);
    pending_arrival.reset();
    schedule_next_arrival();

    ++result.arrivals;
    if (window) window->on_arrival();
    if (!bins.empty()) ++bins[bin_of(r.arrival)].arrivals;
    std::size_t w;
    try {
      w = dispatch(std::move(r));
    } catch (const Error& e) {
      if (e.code() != Errc::AdmissionQueueFull) throw;
      ++result.dropped;
      return;
    }
    worker_step(w);
    observe_queue();
  }

  std::size_t bin_of(Timestamp t) const {
    return std::min(static_cast<std::size_t>(ns(t) / cfg.timeline_bin.count()), bins.size() - 1);
  }

  void observe_queue() {
    if (window) window->observe_queue_length(queued);
  }

  // -- slab ----------------------------------------------------------------

  std::uint32_t admit(Request r) {
    std::uint32_t slot;
    if (!free_slots.empty()) {
      slot = free_slots.back();
      free_slots.pop_back();
      slab[slot] = Resident{std::move(r), nullptr};
    } else {
      slot = static_cast<std::uint32_t>(slab.size());
      slab.push_back(Resident{std::move(r), nullptr});
    }
    return slot;
  }

  // -- scheduling ----------------------------------------------------------

  std::size_t dispatch(Request r) {
    if (r.service_demand.count() <= 0) throw Error(Errc::InvalidArgument, "request demand must be positive");
    const std::size_t w = rr_next;
    rr_next = (rr_next + 1) % workers.size();
    if (cfg.queue_capacity > 0 && workers[w].local.size() >= cfg.queue_capacity) {
      throw Error(Errc::AdmissionQueueFull, "local queue of worker " + std::to_string(w) + " is full");
    }
    r.remaining = r.service_demand;
    workers[w].local.push_back(admit(std::move(r)));
    ++queued;
    return w;
  }

  bool prefer_local(const Worker& wk) const {
    if (wk.local.empty()) return false;
    if (running.empty()) return true;
    if (std::holds_alternative<RoundRobin>(cfg.policy)) {
      return slab[wk.local.front()].req.arrival <= running.front().ready_at;
    }
    return true;
  }

  void worker_step(std::size_t w) {
    Worker& wk = workers.at(w);
    if (wk.busy) return;
    bool local = prefer_local(wk);
    SimContext* ctx = nullptr;
    if (local) {
      ctx = pool.try_acquire();
      if (!ctx) {
        starved = true;
        local = false;
      }
    }
    if (!local && running.empty()) return;

    const Timestamp now = queue.now();
    const Duration q = quantum();
    std::uint32_t slot;
    SliceResult slice;
    if (local) {
      slot = wk.local.front();
      wk.local.pop_front();
      Resident& res = slab[slot];
      res.ctx = ctx;
      res.req.dispatched_at = now;
      slice = fn_launch(*ctx, res.req.service_demand, q, model);
    } else {
      slot = running.front().slot;
      running.pop_front();
      slice = fn_resume(*slab[slot].ctx, q, model);
    }
    --queued;
    Resident& res = slab[slot];
    res.req.remaining = res.ctx->remaining;

    wk.busy = true;
    wk.current = slot;
    wk.will_complete = slice.completed;
    if (q != kInfinite) wk.slice_gen = timer->arm(wk.cell, add_saturating(now, q));
    if (slice.completed) queue.schedule(now + slice.consumed, EventKind::Custom, pack(Sub::Complete, w));
  }

  void on_expiry(std::size_t w, const Notification& n) {
    Worker& wk = workers[w];
    // Completion wins a tie with the expiry.
    if (!wk.current || n.generation != wk.slice_gen || wk.will_complete) return;
    const std::uint32_t slot = *wk.current;
    wk.current.reset();
    Resident& res = slab[slot];
    res.req.preempt_count = res.ctx->preempt_count;
    running.push_back(Ready{slot, n.fired_at});
    ++queued;
    ++result.preemptions;
    queue.schedule(n.fired_at + model.overhead, EventKind::Custom, pack(Sub::WorkerFree, w));
    for (std::size_t i = 0; i < workers.size() && !running.empty(); ++i) worker_step(i);
    observe_queue();
  }

  void on_complete(std::size_t w) {
    Worker& wk = workers[w];
    const std::uint32_t slot = *wk.current;
    timer->disarm(wk.cell);
    wk.current.reset();
    wk.busy = false;
    wk.will_complete = false;

    Resident& res = slab[slot];
    res.req.completed_at = queue.now();
    res.req.preempt_count = res.ctx->preempt_count;
    const RunRecord rec = make_record(res.req);
    result.aggregate.add(rec);
    ++result.completions;
    if (window) window->on_completion(rec);
    if (!bins.empty()) {
      auto& b = bins[bin_of(rec.completed_at)];
      if (rec.cls == RequestClass::LC) {
        b.lc_sum += static_cast<double>(rec.sojourn.count());
        ++b.lc_n;
      } else {
        b.be_sum += static_cast<double>(rec.sojourn.count());
        ++b.be_n;
      }
    }
    pool.release(*res.ctx);
    res.ctx = nullptr;
    free_slots.push_back(slot);
    if (sink) sink(rec);

    worker_step(w);
    if (starved) {
      starved = false;
      for (std::size_t i = 0; i < workers.size(); ++i) worker_step(i);
    }
    observe_queue();
  }

  void on_worker_free(std::size_t w) {
    workers[w].busy = false;
    worker_step(w);
  }

  void on_tick() {
    const Timestamp now = queue.now();
    WindowStats stats = window->snapshot(now);
    const Duration q = controller->update(stats);
    result.trace.push_back(ControllerTraceRow{now, stats.load, stats.qlen, stats.median, stats.p99,
                                              controller->last_alpha(), q});
    window->observe_queue_length(queued);
    schedule_tick(now);
  }

  void schedule_tick(Timestamp from) {
    const Timestamp next = add_saturating(from, controller->hyper().period);
    if (next < at(cfg.horizon)) queue.schedule(next, EventKind::ControllerTick);
  }

  void handle(const SimEvent& ev) {
    switch (ev.kind) {
      case EventKind::Arrival: on_arrival(); break;
      case EventKind::QuantumExpiry: timer->handle(ev); break;
      case EventKind::ControllerTick: on_tick(); break;
      case EventKind::Custom: {
        const auto w = static_cast<std::size_t>(ev.payload & 0xffffffffU);
        switch (static_cast<Sub>(ev.payload >> 32)) {
          case Sub::Complete: on_complete(w); break;
          case Sub::WorkerFree: on_worker_free(w); break;
        }
        break;
      }
    }
  }

  ExperimentResult run() {
    result.load_frac = load_fraction(cfg);
    schedule_next_arrival();
    if (controller) schedule_tick(queue.now());
    queue.run_until(at(cfg.horizon), [this](const SimEvent& ev, EventQueue&) { handle(ev); });

    result.resident_at_end = slab.size() - free_slots.size();
    result.final_quantum = quantum();
    if (!bins.empty()) build_timeline();
    return std::move(result);
  }

  void build_timeline() {
    const double bin_s = std::chrono::duration<double>(cfg.timeline_bin).count();
    std::size_t tick = 0;
    Duration q = static_quantum;
    for (std::size_t i = 0; i < bins.size(); ++i) {
      const Timestamp start = at(cfg.timeline_bin * static_cast<std::int64_t>(i));
      while (tick < result.trace.size() && result.trace[tick].tick <= start) q = result.trace[tick++].quantum;
      const auto& b = bins[i];
      TimelineRow row{start, static_cast<double>(b.arrivals) / bin_s, std::nullopt, std::nullopt, q};
      if (b.lc_n) row.lc_mean_ns = b.lc_sum / static_cast<double>(b.lc_n);
      if (b.be_n) row.be_mean_ns = b.be_sum / static_cast<double>(b.be_n);
      result.timeline.push_back(row);
    }
  }
};

SimScheduler::SimScheduler(const ExperimentConfig& cfg, RecordSink sink)
    : impl_(std::make_unique<Impl>(cfg, std::move(sink))) {
  impl_->generator.emplace(cfg.workload, cfg.arrivals, cfg.seed);
}

SimScheduler::SimScheduler(const ExperimentConfig& cfg, std::vector<Request> trace, RecordSink sink)
    : impl_(std::make_unique<Impl>(cfg, std::move(sink))) {
  std::stable_sort(trace.begin(), trace.end(),
                   [](const Request& a, const Request& b) { return a.arrival < b.arrival; });
  impl_->trace = std::move(trace);
}

SimScheduler::~SimScheduler() = default;

ExperimentResult SimScheduler::run() { return impl_->run(); }
std::size_t SimScheduler::dispatch(Request r) { return impl_->dispatch(std::move(r)); }
void SimScheduler::worker_step(std::size_t worker) { impl_->worker_step(worker); }
std::size_t SimScheduler::local_queue_size(std::size_t worker) const { return impl_->workers.at(worker).local.size(); }
std::size_t SimScheduler::running_list_size() const noexcept { return impl_->running.size(); }
bool SimScheduler::worker_busy(std::size_t worker) const { return impl_->workers.at(worker).busy; }
Duration SimScheduler::current_quantum() const noexcept { return impl_->quantum(); }
Timestamp SimScheduler::now() const noexcept { return impl_->queue.now(); }

ExperimentResult run_experiment(const ExperimentConfig& cfg, RecordSink sink) {
  if (cfg.backend == Backend::Realtime) return run_realtime(cfg, std::move(sink));
  SimScheduler s(cfg, std::move(sink));
  return s.run();
}

ExperimentResult run_trace(const ExperimentConfig& cfg, std::vector<Request> trace, RecordSink sink) {
  SimScheduler s(cfg, std::move(trace), std::move(sink));
  return s.run();
}

// ---------------------------------------------------------------------------

ThroughputResult max_throughput(const ExperimentConfig& cfg, const SloRule& rule) {
  if (!(rule.low_load > 0 && rule.low_load < 1 && rule.multiple > 0)) {
    throw Error(Errc::InvalidArgument, "invalid SLO rule");
  }
  const double capacity = capacity_rps(cfg.workload, cfg.workers, cfg.horizon);
  auto run_at = [&](double load) {
    ExperimentConfig c = cfg;
    c.arrivals = Poisson{load * capacity};
    return run_experiment(c);
  };

  ThroughputResult out;
  const auto base = run_at(rule.low_load);
  if (base.aggregate.count() == 0) throw Error(Errc::NoData, "no completions at the baseline load");
  out.baseline_mean = Duration{static_cast<std::int64_t>(std::llround(base.aggregate.all().mean_ns()))};
  out.p99_bound = Duration{static_cast<std::int64_t>(std::llround(rule.multiple * base.aggregate.all().mean_ns()))};

  auto ok = [&](double load) {
    const auto r = run_at(load);
    return r.aggregate.count() > 0 && r.aggregate.all().quantile(0.99) <= out.p99_bound;
  };
  double lo = rule.low_load, hi = 1.0;
  if (!ok(lo)) {
    lo = 0.0;
  } else if (ok(hi)) {
    lo = hi;
  }
  while (hi - lo > 0.01) {
    const double mid = 0.5 * (lo + hi);
    (ok(mid) ? lo : hi) = mid;
  }
  out.load_frac = lo;
  out.rate_rps = lo * capacity;
  return out;
}

}  // namespace preemptible
