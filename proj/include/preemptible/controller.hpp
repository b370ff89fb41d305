#pragma once

#include <atomic>
#include <limits>
#include <optional>
#include <ostream>
#include <span>

#include "preemptible/metrics.hpp"

namespace preemptible {

struct ControllerHyperparams {
  double l_high = 0.9;  // fractions of max load
  double l_low = 0.1;
  Duration k1{5'000};  // decrease step at high load
  Duration k2{5'000};  // decrease step on long queues or heavy tail
  Duration k3{10'000};  // increase step at low load
  std::size_t q_threshold = 8;
  Duration t_min{3'000};
  Duration t_max{100'000};
  Duration period{10'000'000'000};
  double k_fraction = 0.1;  // share of order statistics used by the tail fit
};

/// Throws Errc::InvalidConfig.
void validate(const ControllerHyperparams& h);

/// Hill estimate of the tail index from the top ceil(k_fraction * n) order
/// statistics. Returns +infinity when those are all equal.
/// Throws Errc::InsufficientSamples below 50 samples.
double estimate_tail_index(std::span<const double> samples, double k_fraction = 0.1);

inline constexpr std::size_t kMinTailSamples = 50;

/// 0 <= alpha < 2.
bool is_heavy_tailed(double alpha) noexcept;

/// One evaluation of the quantum update rules. `alpha` empty skips the tail test.
Duration update_quantum(Duration tq, const ControllerHyperparams& h, double load, std::size_t qlen,
                        std::optional<double> alpha);

/// Holds TQ across ticks. update() refits alpha from the window's samples
/// when there are enough of them and otherwise reuses the last fit.
class QuantumController {
 public:
  QuantumController(ControllerHyperparams h, Duration initial);

  Duration update(const WindowStats& stats);

  /// Readable from any thread.
  Duration quantum() const noexcept { return Duration{published_.load(std::memory_order_acquire)}; }
  std::optional<double> last_alpha() const noexcept { return last_alpha_; }
  const ControllerHyperparams& hyper() const noexcept { return h_; }

 private:
  ControllerHyperparams h_;
  std::atomic<std::int64_t> published_;
  std::optional<double> last_alpha_;
};

struct ControllerTraceRow {
  Timestamp tick{};
  double load = 0;
  std::size_t qlen = 0;
  std::optional<Duration> median;
  std::optional<Duration> p99;
  std::optional<double> alpha;
  Duration quantum{};
};

inline constexpr std::string_view kControllerTraceHeader = "tick_ts,load,qlen,median_ns,p99_ns,alpha,quantum_ns";

void write_controller_trace_header(std::ostream& out);
void write_controller_trace_row(std::ostream& out, const ControllerTraceRow& row);

}  // namespace preemptible
