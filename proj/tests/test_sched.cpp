#include <gtest/gtest.h>

#include <map>
#include <set>

#include "preemptible/sched.hpp"

using namespace preemptible;
using namespace std::chrono_literals;

namespace {

Request req(std::uint64_t id, Duration arrival, Duration demand) {
  Request r;
  r.id = id;
  r.arrival = at(arrival);
  r.service_demand = demand;
  return r;
}

ExperimentConfig trace_config(std::size_t workers, Policy p, Duration overhead = 0ns) {
  ExperimentConfig c;
  c.workload = preset("B", 1s);
  c.workers = workers;
  c.policy = p;
  c.preemption_overhead = overhead;
  c.horizon = 1s;
  return c;
}

std::map<std::uint64_t, RunRecord> by_id(const ExperimentConfig& c, std::vector<Request> trace) {
  std::map<std::uint64_t, RunRecord> out;
  run_trace(c, std::move(trace), [&](const RunRecord& r) { out.emplace(r.id, r); });
  return out;
}

std::vector<RunRecord> records(const ExperimentConfig& c) {
  std::vector<RunRecord> out;
  run_experiment(c, [&](const RunRecord& r) { out.push_back(r); });
  return out;
}

ExperimentConfig mm1(double rho, Duration horizon) {
  ExperimentConfig c;
  c.workload = preset("B", horizon);
  c.workers = 1;
  c.horizon = horizon;
  c.arrivals = poisson_at_load(c.workload, 1, horizon, rho);
  return c;
}

}  // namespace

TEST(Dispatch, RoundRobinPlacement) {
  SimScheduler s(trace_config(4, RunToCompletion{}));
  for (std::uint64_t i = 0; i < 8; ++i) EXPECT_EQ(s.dispatch(req(i, 0ns, 1us)), i % 4);
  for (std::size_t w = 0; w < 4; ++w) {
    EXPECT_EQ(s.local_queue_size(w), 2u);
    EXPECT_FALSE(s.worker_busy(w));
  }
}

TEST(Dispatch, BoundedQueueRejects) {
  auto c = trace_config(1, RunToCompletion{});
  c.queue_capacity = 1;
  SimScheduler s(c);
  s.dispatch(req(0, 0ns, 1us));
  try {
    s.dispatch(req(1, 0ns, 1us));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::AdmissionQueueFull);
  }
}

TEST(Dispatch, WorkerStepStartsASlice) {
  SimScheduler s(trace_config(2, PreemptFCFS{10us}));
  s.dispatch(req(0, 0ns, 50us));
  s.worker_step(0);
  EXPECT_TRUE(s.worker_busy(0));
  EXPECT_EQ(s.local_queue_size(0), 0u);
  s.worker_step(1);  // nothing to run
  EXPECT_FALSE(s.worker_busy(1));
}

TEST(Dispatch, DroppedRequestsAreCounted) {
  auto c = trace_config(1, RunToCompletion{});
  c.queue_capacity = 1;
  // r0 starts at once, r1 waits, r2 finds the queue full.
  auto r = run_trace(c, {req(0, 0ns, 10us), req(1, 1us, 1us), req(2, 2us, 1us)});
  EXPECT_EQ(r.arrivals, 3u);
  EXPECT_EQ(r.dropped, 1u);
  EXPECT_EQ(r.completions, 2u);
}

TEST(WorkerStep, SingleWorkerKeepsFifoOrder) {
  auto c = mm1(0.7, 50ms);
  std::vector<std::uint64_t> order;
  run_experiment(c, [&](const RunRecord& r) { order.push_back(r.id); });
  ASSERT_GT(order.size(), 1000u);
  EXPECT_TRUE(std::is_sorted(order.begin(), order.end()));
}

TEST(WorkerStep, HeadOfLineBlockingIsBroken) {
  const std::vector<Request> t{req(1, 0us, 1000us), req(2, 1us, 10us)};
  auto pre = by_id(trace_config(1, PreemptFCFS{20us}), t);
  EXPECT_EQ(pre.at(2).completed_at, at(30us));  // R1 0-20, R2 20-30
  EXPECT_EQ(pre.at(2).sojourn, 29us);
  EXPECT_EQ(pre.at(1).completed_at, at(1010us));
  EXPECT_EQ(pre.at(1).preempt_count, 49u);

  auto rtc = by_id(trace_config(1, RunToCompletion{}), t);
  EXPECT_EQ(rtc.at(2).completed_at, at(1010us));
  EXPECT_EQ(rtc.at(1).completed_at, at(1000us));
}

TEST(WorkerStep, RunToCompletionHandTrace) {
  auto r = by_id(trace_config(1, RunToCompletion{}), {req(1, 0us, 10us), req(2, 1us, 5us)});
  EXPECT_EQ(r.at(1).completed_at, at(10us));
  EXPECT_EQ(r.at(2).completed_at, at(15us));
  EXPECT_EQ(r.at(1).sojourn, 10us);
  EXPECT_EQ(r.at(2).sojourn, 14us);
  EXPECT_EQ(r.at(2).queueing(), 9us);
}

TEST(WorkerStep, NewRequestsGoBeforePreemptedOnes) {
  // q=10, overhead 0, one worker. R1 0-10, R2 10-20, R3 20-30, then the
  // running list in FIFO order: R1 R2 R3 R1 R2(done 80) R3(done 90) R1 R1(done 110).
  auto r = by_id(trace_config(1, PreemptFCFS{10us}),
                 {req(1, 0us, 50us), req(2, 1us, 30us), req(3, 2us, 30us)});
  EXPECT_EQ(r.at(2).dispatched_at, at(10us));
  EXPECT_EQ(r.at(3).dispatched_at, at(20us));
  EXPECT_EQ(r.at(2).completed_at, at(80us));
  EXPECT_EQ(r.at(3).completed_at, at(90us));
  EXPECT_EQ(r.at(1).completed_at, at(110us));
}

TEST(WorkerStep, RoundRobinServesTheOldestFirst) {
  // Two workers, q=10, overhead 2. R1 is preempted at 10 and waits while
  // worker 0 pays the overhead; R3 reaches worker 0's local queue at 11.5.
  // At 12 FCFS runs R3; round-robin resumes R1, which has waited since 10.
  const std::vector<Request> t{req(1, 0us, 50us), req(2, 1us, 50us), req(3, 11500ns, 5us)};
  auto fcfs = by_id(trace_config(2, PreemptFCFS{10us}, 2us), t);
  auto rr = by_id(trace_config(2, RoundRobin{10us}, 2us), t);
  EXPECT_EQ(fcfs.at(3).completed_at, at(17us));
  EXPECT_EQ(rr.at(3).completed_at, at(29us));
}

TEST(WorkerStep, PreemptedWorkMovesToAnIdleWorker) {
  // One 100us request, q=20, overhead 5: with a spare worker the slices run
  // back to back; alone it pays the overhead four times.
  auto two = by_id(trace_config(2, PreemptFCFS{20us}, 5us), {req(1, 0us, 100us)});
  auto one = by_id(trace_config(1, PreemptFCFS{20us}, 5us), {req(1, 0us, 100us)});
  EXPECT_EQ(two.at(1).completed_at, at(100us));
  EXPECT_EQ(one.at(1).completed_at, at(120us));
  EXPECT_EQ(one.at(1).preempt_count, 4u);
}

TEST(WorkerStep, SingleWorkerNeverIdlesWithWorkQueued) {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto c = mm1(0.8, 20ms);
    c.seed = seed;
    Timestamp prev{};
    for (const auto& r : records(c)) {
      ASSERT_EQ(r.dispatched_at, std::max(r.arrival, prev)) << r.id;
      prev = r.completed_at;
    }
  }
}

TEST(RunExperiment, InfiniteQuantumMatchesRunToCompletion) {
  for (const char* name : {"A1", "B", "FIG2-BIMODAL", "COLOC"}) {
    auto c = mm1(0.7, 20ms);
    c.workload = preset(name, c.horizon);
    c.workers = 4;
    c.arrivals = poisson_at_load(c.workload, 4, c.horizon, 0.7);
    c.seed = 9;
    const auto rtc = records(c);
    c.policy = PreemptFCFS{kInfinite};
    const auto inf = records(c);
    ASSERT_EQ(rtc.size(), inf.size()) << name;
    for (std::size_t i = 0; i < rtc.size(); ++i) {
      ASSERT_EQ(rtc[i].id, inf[i].id);
      ASSERT_EQ(rtc[i].completed_at, inf[i].completed_at);
      ASSERT_EQ(inf[i].preempt_count, 0u);
    }
  }
}

TEST(RunExperiment, ZeroArrivals) {
  auto c = trace_config(4, PreemptFCFS{10us});
  auto r = run_experiment(c, [](const RunRecord&) { FAIL(); });
  EXPECT_EQ(r.arrivals, 0u);
  EXPECT_EQ(r.completions, 0u);
}

TEST(RunExperiment, Deterministic) {
  auto c = mm1(0.7, 20ms);
  c.workload = preset("A1", c.horizon);
  c.workers = 4;
  c.arrivals = poisson_at_load(c.workload, 4, c.horizon, 0.7);
  c.policy = PreemptFCFS{5us};
  const auto a = records(c), b = records(c);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].id, b[i].id);
    ASSERT_EQ(a[i].completed_at, b[i].completed_at);
    ASSERT_EQ(a[i].preempt_count, b[i].preempt_count);
  }
}

TEST(RunExperiment, ConservesRequests) {
  for (double load : {0.5, 1.3}) {
    auto c = mm1(load, 10ms);
    c.workload = preset("A1", c.horizon);
    c.workers = 3;
    c.arrivals = poisson_at_load(c.workload, 3, c.horizon, load);
    c.policy = PreemptFCFS{5us};
    std::set<std::uint64_t> seen;
    auto r = run_experiment(c, [&](const RunRecord& rec) { ASSERT_TRUE(seen.insert(rec.id).second); });
    EXPECT_EQ(r.arrivals, r.completions + r.resident_at_end + r.dropped);
    EXPECT_EQ(seen.size(), r.completions);
    ASSERT_FALSE(seen.empty());
    EXPECT_LT(*seen.rbegin(), r.arrivals);  // ids are 0..arrivals-1
  }
}

TEST(RunExperiment, SmallContextPoolStillDrains) {
  auto c = mm1(0.6, 10ms);
  c.workload = preset("A1", c.horizon);
  c.workers = 2;
  c.context_pool = 2;
  c.arrivals = poisson_at_load(c.workload, 2, c.horizon, 0.6);
  c.policy = PreemptFCFS{5us};
  auto r = run_experiment(c);
  EXPECT_EQ(r.arrivals, r.completions + r.resident_at_end);
  EXPECT_GT(r.completions, r.arrivals * 9 / 10);
}

TEST(RunExperiment, MM1MeanSojourn) {
  // E[T] = E[S] / (1 - rho) with E[S] = 5us.
  auto r = run_experiment(mm1(0.5, 10200ms));
  ASSERT_GE(r.completions, 1'000'000u);
  EXPECT_NEAR(r.aggregate.all().mean_ns(), 10'000.0, 300.0);
}

TEST(RunExperiment, ControllerTicksOnPeriod) {
  auto c = trace_config(1, PreemptFCFSDynamic{});
  c.horizon = 35s;
  auto r = run_experiment(c);
  ASSERT_EQ(r.trace.size(), 3u);
  EXPECT_EQ(r.trace[0].tick, at(10s));
  EXPECT_EQ(r.trace[2].tick, at(30s));
}

TEST(RunExperiment, ControllerShortensTheQuantumUnderHeavyTail) {
  // Workload C at moderate load with a short period. The quantum steps down
  // during the heavy-tailed half; nothing at this load can raise it again,
  // since only a window below L_low does.
  ExperimentConfig c;
  c.horizon = 400ms;
  c.workload = preset("C", c.horizon);
  c.workers = 4;
  c.arrivals = poisson_at_load(c.workload, 4, c.horizon, 0.5);
  PreemptFCFSDynamic d;
  d.hyper.period = 10ms;
  c.policy = d;
  auto r = run_experiment(c);
  ASSERT_EQ(r.trace.size(), 39u);
  Duration prev = d.initial;
  for (const auto& row : r.trace) {
    EXPECT_LE(row.quantum, prev);
    prev = row.quantum;
  }
  EXPECT_EQ(r.trace[18].quantum, d.hyper.t_min);  // last tick of the first half
  EXPECT_EQ(r.final_quantum, d.hyper.t_min);
}

TEST(RunExperiment, ValidationRejectsBadConfigs) {
  auto c = trace_config(1, PreemptFCFS{2us});
  EXPECT_THROW(run_experiment(c), Error);
  c.min_quantum = 2us;
  EXPECT_NO_THROW(run_experiment(c));
  c = trace_config(0, RunToCompletion{});
  EXPECT_THROW(run_experiment(c), Error);
  c = trace_config(4, RunToCompletion{});
  c.context_pool = 2;
  EXPECT_THROW(run_experiment(c), Error);
}

TEST(LoadFraction, Definition) {
  auto c = mm1(0.5, 1s);
  EXPECT_NEAR(capacity_rps(c.workload, 1, c.horizon), 200'000.0, 1e-6);
  EXPECT_NEAR(load_fraction(c), 0.5, 1e-12);
}

TEST(MaxThroughput, BoundedByCapacity) {
  ExperimentConfig c;
  c.horizon = 200ms;
  c.workload.name = "const";
  c.workload.lc = Constant{10us};
  c.workers = 1;
  auto t = max_throughput(c);
  EXPECT_LE(t.rate_rps, 100'000.0);
  EXPECT_GT(t.rate_rps, 0.0);
  EXPECT_GE(t.baseline_mean, 10us);  // demand plus a little M/D/1 queueing
  EXPECT_LT(t.baseline_mean, 11us);
}

TEST(MaxThroughput, RegressionBaselines) {
  // Frozen from the first verified build; the simulation is deterministic.
  const std::pair<const char*, double> expected[] = {{"A1", 1.0}, {"B", 0.7890625}};
  for (const auto& [name, load] : expected) {
    ExperimentConfig c;
    c.horizon = 200ms;
    c.workload = preset(name, c.horizon);
    c.workers = 4;
    c.policy = PreemptFCFS{3us};
    auto t = max_throughput(c);
    EXPECT_NEAR(t.load_frac, load, 1e-6) << name;
    EXPECT_NEAR(t.rate_rps, load * capacity_rps(c.workload, 4, c.horizon), 1e-3) << name;
  }
}
