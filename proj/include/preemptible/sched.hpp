#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "preemptible/controller.hpp"
#include "preemptible/metrics.hpp"
#include "preemptible/preempt.hpp"
#include "preemptible/utimer.hpp"
#include "preemptible/workload.hpp"

namespace preemptible {

inline constexpr Duration kMinQuantum{3'000};

struct RunToCompletion {};
struct PreemptFCFS {
  Duration quantum{30'000};
};
/// Preemptive FCFS whose quantum is owned by a QuantumController.
struct PreemptFCFSDynamic {
  ControllerHyperparams hyper;
  Duration initial{30'000};
};
/// Preemptive, but picks whichever of the local head and running-list head
/// has waited longest.
struct RoundRobin {
  Duration quantum{30'000};
};

using Policy = std::variant<RunToCompletion, PreemptFCFS, PreemptFCFSDynamic, RoundRobin>;

std::string policy_name(const Policy& p);

/// Static quantum of the policy (kInfinite for run-to-completion), or the
/// controller's initial value.
Duration initial_quantum(const Policy& p);

enum class Backend : std::uint8_t { Sim, Realtime };

struct ExperimentConfig {
  Backend backend = Backend::Sim;
  WorkloadSpec workload;
  ArrivalProcess arrivals = Poisson{0.0};
  std::size_t workers = 4;
  Policy policy = RunToCompletion{};
  Duration preemption_overhead{1'000};
  Duration horizon{1'000'000'000};
  std::uint64_t seed = 1;
  std::size_t queue_capacity = 0;  // per local queue; 0 = unbounded
  std::size_t context_pool = 65'536;
  Duration min_quantum = kMinQuantum;
  Duration slo{50'000};
  TailInput tail_input = TailInput::Sojourn;
  std::size_t reservoir_size = 4096;
  Duration timeline_bin{0};  // 0 disables the timeline
  TimerConfig timer;  // real backend
};

/// Throws Errc::InvalidConfig.
void validate(const ExperimentConfig& cfg);

/// workers / E[S]; E[S] is time-weighted over the horizon.
double capacity_rps(const WorkloadSpec& w, std::size_t workers, Duration horizon);
double load_fraction(const ExperimentConfig& cfg);
/// Poisson arrivals at `load` times capacity.
ArrivalProcess poisson_at_load(const WorkloadSpec& w, std::size_t workers, Duration horizon, double load);

struct TimelineRow {
  Timestamp bin_start{};
  double offered_qps = 0;
  std::optional<double> lc_mean_ns;
  std::optional<double> be_mean_ns;
  Duration quantum{};
};

inline constexpr std::string_view kTimelineHeader = "bin_start_ns,offered_qps,lc_mean_ns,be_mean_ns,quantum_ns";
void write_timeline_header(std::ostream& out);
void write_timeline_row(std::ostream& out, const TimelineRow& row);

struct ExperimentResult {
  RunAggregate aggregate;
  std::uint64_t arrivals = 0;
  std::uint64_t completions = 0;
  std::uint64_t dropped = 0;
  std::uint64_t resident_at_end = 0;
  std::uint64_t preemptions = 0;
  Duration horizon{};
  Duration final_quantum{};
  double load_frac = 0;
  std::vector<ControllerTraceRow> trace;
  std::vector<TimelineRow> timeline;

  double throughput_rps() const noexcept;
};

SummaryRow summarize(const ExperimentConfig& cfg, const ExperimentResult& result);

using RecordSink = std::function<void(const RunRecord&)>;

// ---------------------------------------------------------------------------

/// Discrete-event model of the two-level scheduler: a round-robin
/// dispatcher feeding per-worker FIFO local queues, a global FIFO running
/// list of preempted requests, and a shared context pool. Workers take the
/// local head before the running-list head (RoundRobin: the older of the
/// two). Slices are bounded by per-worker deadline cells in the simulated
/// timer service.
class SimScheduler {
 public:
  /// Requests come from a seeded generator over cfg.workload/cfg.arrivals.
  explicit SimScheduler(const ExperimentConfig& cfg, RecordSink sink = {});
  /// Requests come from a fixed list, ordered by arrival.
  SimScheduler(const ExperimentConfig& cfg, std::vector<Request> trace, RecordSink sink = {});
  ~SimScheduler();
  SimScheduler(const SimScheduler&) = delete;
  SimScheduler& operator=(const SimScheduler&) = delete;

  /// Drives the run to the horizon and returns the totals.
  ExperimentResult run();

  /// Places a request on the next worker's local queue (round-robin) and
  /// returns that worker. Throws Errc::AdmissionQueueFull when bounded and full.
  std::size_t dispatch(Request r);
  /// Starts the next slice on an idle worker, if it has anything to run.
  void worker_step(std::size_t worker);

  std::size_t local_queue_size(std::size_t worker) const;
  std::size_t running_list_size() const noexcept;
  bool worker_busy(std::size_t worker) const;
  Duration current_quantum() const noexcept;
  Timestamp now() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg, RecordSink sink = {});

/// Runs a fixed request list through the simulation backend.
ExperimentResult run_trace(const ExperimentConfig& cfg, std::vector<Request> trace, RecordSink sink = {});

/// Real-time backend: dispatcher thread, worker threads running fibers, and
/// the poller thread of a RealTimerService.
ExperimentResult run_realtime(const ExperimentConfig& cfg, RecordSink sink = {});

struct SloRule {
  double low_load = 0.1;
  double multiple = 200.0;  // p99 bound as a multiple of the low-load mean
};

struct ThroughputResult {
  double rate_rps = 0;
  double load_frac = 0;
  Duration baseline_mean{};
  Duration p99_bound{};
};

/// Highest Poisson rate (to 1% of capacity) whose p99 stays within
/// rule.multiple x the mean sojourn measured at rule.low_load. cfg.arrivals
/// is ignored.
ThroughputResult max_throughput(const ExperimentConfig& cfg, const SloRule& rule = {});

}  // namespace preemptible
