#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "preemptible/workload.hpp"

namespace preemptible {

/// One completed request. sojourn == completed_at - arrival >= service_demand.
struct RunRecord {
  std::uint64_t id = 0;
  RequestClass cls = RequestClass::LC;
  Timestamp arrival{};
  Timestamp dispatched_at{};
  Timestamp completed_at{};
  Duration service_demand{};
  Duration sojourn{};
  std::uint32_t preempt_count = 0;

  Duration queueing() const noexcept { return dispatched_at - arrival; }
};

/// Throws Errc::InvalidState unless the request has completed consistently.
RunRecord make_record(const Request& r);

/// Log-bucketed latency counters over [100ns, 10s], each bucket 1% wide.
/// Quantiles are nearest-rank, reported at the bucket midpoint and clamped
/// to the exact observed [min, max].
class LatencyHistogram {
 public:
  static constexpr std::int64_t kLowestNs = 100;
  static constexpr std::int64_t kHighestNs = 10'000'000'000;
  static constexpr double kRatio = 1.01;
  static const std::size_t kBuckets;

  LatencyHistogram();

  /// Out-of-span values are clamped to the span and flag overflowed().
  void record(Duration value);
  void merge(const LatencyHistogram& other);

  /// 0 < q < 1. Throws Errc::NoData when empty.
  Duration quantile(double q) const;
  double mean_ns() const;

  std::uint64_t count() const noexcept { return count_; }
  double sum_ns() const noexcept { return sum_ns_; }
  Duration min() const;
  Duration max() const;
  bool overflowed() const noexcept { return overflowed_; }
  bool empty() const noexcept { return count_ == 0; }

  static std::size_t bucket_of(std::int64_t v_ns) noexcept;
  static double bucket_lower(std::size_t i) noexcept;

 private:
  std::vector<std::uint64_t> buckets_;
  std::uint64_t count_ = 0;
  double sum_ns_ = 0;
  std::int64_t min_ns_ = 0;
  std::int64_t max_ns_ = 0;
  bool overflowed_ = false;
};

/// Fraction of records (optionally of one class) with sojourn > slo.
/// Throws Errc::NoData when nothing passes the filter.
double slo_violation_rate(std::span<const RunRecord> records, Duration slo,
                          std::optional<RequestClass> cls = std::nullopt);

/// Streaming totals for a run, so long runs need not keep every record.
class RunAggregate {
 public:
  explicit RunAggregate(Duration slo = Duration{50'000}) : slo_(slo) {}

  void add(const RunRecord& r);

  const LatencyHistogram& all() const noexcept { return all_; }
  const LatencyHistogram& of(RequestClass c) const noexcept { return per_class_[static_cast<int>(c)]; }
  std::uint64_t count() const noexcept { return all_.count(); }
  std::uint64_t slo_violations() const noexcept { return violations_; }
  /// Throws Errc::NoData when empty.
  double slo_violation_rate() const;
  double mean_preempts() const noexcept;
  Duration slo() const noexcept { return slo_; }

 private:
  Duration slo_;
  LatencyHistogram all_;
  std::array<LatencyHistogram, 2> per_class_;
  std::uint64_t violations_ = 0;
  std::uint64_t preempts_ = 0;
};

// ---------------------------------------------------------------------------
// Windowed statistics for the controller

enum class TailInput : std::uint8_t { Sojourn, Service };

struct WindowStats {
  Timestamp start{};
  Timestamp end{};
  std::uint64_t arrivals = 0;
  std::uint64_t completions = 0;
  double load = 0;  // offered rate / max load
  std::size_t qlen = 0;  // max total queued requests seen
  std::optional<Duration> median;  // empty when no completions
  std::optional<Duration> p99;
  std::vector<double> latency_samples;  // reservoir, ns
};

/// Accumulates one controller window at a time. snapshot() closes the
/// current window and starts the next, so consecutive windows partition
/// the event stream.
class WindowCollector {
 public:
  WindowCollector(double max_load_rps, std::size_t reservoir_size, std::uint64_t seed,
                  TailInput tail_input = TailInput::Sojourn, Timestamp start = {});

  void on_arrival() noexcept { ++arrivals_; }
  void observe_queue_length(std::size_t qlen) noexcept {
    if (qlen > qlen_max_) qlen_max_ = qlen;
  }
  void on_completion(const RunRecord& r);

  WindowStats snapshot(Timestamp now);

  double max_load_rps() const noexcept { return max_load_rps_; }
  TailInput tail_input() const noexcept { return tail_input_; }

 private:
  double max_load_rps_;
  std::size_t reservoir_size_;
  TailInput tail_input_;
  Rng rng_;
  Timestamp start_;
  std::uint64_t arrivals_ = 0;
  std::size_t qlen_max_ = 0;
  LatencyHistogram latencies_;
  std::vector<double> reservoir_;
  std::uint64_t seen_ = 0;
};

// ---------------------------------------------------------------------------
// CSV output. Each file starts with one "# preemptible <kind> v<N>" line.

struct SummaryRow {
  std::string policy;
  std::string workload;
  double load_frac = 0;
  Duration quantum{};  // kInfinite prints as "inf"
  std::optional<Duration> p50;
  std::optional<Duration> p99;
  std::optional<double> slo_viol_rate;
  double throughput_rps = 0;
  double mean_preempts = 0;
};

inline constexpr std::string_view kSummaryHeader =
    "policy,workload,load_frac,quantum_ns,p50_ns,p99_ns,slo_viol_rate,throughput_rps,mean_preempts";
inline constexpr std::string_view kRecordHeader =
    "id,class,arrival_ns,dispatched_ns,completed_ns,service_ns,sojourn_ns,preempt_count";

void write_summary_header(std::ostream& out);
void write_summary_row(std::ostream& out, const SummaryRow& row);
void write_record_header(std::ostream& out);
void write_record_row(std::ostream& out, const RunRecord& r);

std::string format_quantum(Duration q);
/// Fixed-precision decimal that prints identically on every run.
std::string format_double(double v, int digits = 6);

}  // namespace preemptible
