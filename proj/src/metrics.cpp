#include "preemptible/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace preemptible {

RunRecord make_record(const Request& r) {
  if (!r.completed_at || !r.dispatched_at) {
    throw Error(Errc::InvalidState, "request " + std::to_string(r.id) + " has not completed");
  }
  RunRecord rec{
      .id = r.id,
      .cls = r.cls,
      .arrival = r.arrival,
      .dispatched_at = *r.dispatched_at,
      .completed_at = *r.completed_at,
      .service_demand = r.service_demand,
      .sojourn = *r.completed_at - r.arrival,
      .preempt_count = r.preempt_count,
  };
  if (rec.sojourn < rec.service_demand || rec.dispatched_at < rec.arrival) {
    throw Error(Errc::InvalidState, "request " + std::to_string(r.id) + " has inconsistent timestamps");
  }
  return rec;
}

// ---------------------------------------------------------------------------

namespace {

const double kLogRatio = std::log(LatencyHistogram::kRatio);

}  // namespace

const std::size_t LatencyHistogram::kBuckets = static_cast<std::size_t>(
    std::ceil(std::log(static_cast<double>(kHighestNs) / static_cast<double>(kLowestNs)) / kLogRatio));

LatencyHistogram::LatencyHistogram() : buckets_(kBuckets, 0) {}

std::size_t LatencyHistogram::bucket_of(std::int64_t v_ns) noexcept {
  v_ns = std::clamp(v_ns, kLowestNs, kHighestNs);
  const double idx = std::log(static_cast<double>(v_ns) / static_cast<double>(kLowestNs)) / kLogRatio;
  return std::min(static_cast<std::size_t>(idx), kBuckets - 1);
}

double LatencyHistogram::bucket_lower(std::size_t i) noexcept {
  return static_cast<double>(kLowestNs) * std::exp(static_cast<double>(i) * kLogRatio);
}

void LatencyHistogram::record(Duration value) {
  std::int64_t v = value.count();
  if (v < kLowestNs || v > kHighestNs) {
    overflowed_ = true;
    v = std::clamp(v, kLowestNs, kHighestNs);
  }
  ++buckets_[bucket_of(v)];
  if (count_ == 0) {
    min_ns_ = max_ns_ = v;
  } else {
    min_ns_ = std::min(min_ns_, v);
    max_ns_ = std::max(max_ns_, v);
  }
  ++count_;
  sum_ns_ += static_cast<double>(v);
}

void LatencyHistogram::merge(const LatencyHistogram& other) {
  if (other.count_ == 0) return;
  for (std::size_t i = 0; i < kBuckets; ++i) buckets_[i] += other.buckets_[i];
  if (count_ == 0) {
    min_ns_ = other.min_ns_;
    max_ns_ = other.max_ns_;
  } else {
    min_ns_ = std::min(min_ns_, other.min_ns_);
    max_ns_ = std::max(max_ns_, other.max_ns_);
  }
  count_ += other.count_;
  sum_ns_ += other.sum_ns_;
  overflowed_ = overflowed_ || other.overflowed_;
}

Duration LatencyHistogram::quantile(double q) const {
  if (!(q > 0.0 && q < 1.0)) throw Error(Errc::InvalidArgument, "quantile must be in (0, 1)");
  if (count_ == 0) throw Error(Errc::NoData, "quantile of an empty histogram");
  const auto rank = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(q * static_cast<double>(count_))));
  std::uint64_t cumulative = 0;
  std::size_t i = 0;
  for (; i < kBuckets; ++i) {
    cumulative += buckets_[i];
    if (cumulative >= rank) break;
  }
  const double mid = bucket_lower(i) * (1.0 + kRatio) / 2.0;
  const auto v = static_cast<std::int64_t>(std::llround(mid));
  return Duration{std::clamp(v, min_ns_, max_ns_)};
}

double LatencyHistogram::mean_ns() const {
  if (count_ == 0) throw Error(Errc::NoData, "mean of an empty histogram");
  return sum_ns_ / static_cast<double>(count_);
}

Duration LatencyHistogram::min() const {
  if (count_ == 0) throw Error(Errc::NoData, "min of an empty histogram");
  return Duration{min_ns_};
}

Duration LatencyHistogram::max() const {
  if (count_ == 0) throw Error(Errc::NoData, "max of an empty histogram");
  return Duration{max_ns_};
}

double slo_violation_rate(std::span<const RunRecord> records, Duration slo, std::optional<RequestClass> cls) {
  std::uint64_t total = 0, violating = 0;
  for (const auto& r : records) {
    if (cls && r.cls != *cls) continue;
    ++total;
    if (r.sojourn > slo) ++violating;
  }
  if (total == 0) throw Error(Errc::NoData, "no records match the SLO filter");
  return static_cast<double>(violating) / static_cast<double>(total);
}

void RunAggregate::add(const RunRecord& r) {
  all_.record(r.sojourn);
  per_class_[static_cast<int>(r.cls)].record(r.sojourn);
  if (r.sojourn > slo_) ++violations_;
  preempts_ += r.preempt_count;
}

double RunAggregate::slo_violation_rate() const {
  if (count() == 0) throw Error(Errc::NoData, "no completed requests");
  return static_cast<double>(violations_) / static_cast<double>(count());
}

double RunAggregate::mean_preempts() const noexcept {
  return count() == 0 ? 0.0 : static_cast<double>(preempts_) / static_cast<double>(count());
}

// ---------------------------------------------------------------------------

WindowCollector::WindowCollector(double max_load_rps, std::size_t reservoir_size, std::uint64_t seed,
                                 TailInput tail_input, Timestamp start)
    : max_load_rps_(max_load_rps),
      reservoir_size_(reservoir_size),
      tail_input_(tail_input),
      rng_(seed, Stream::Reservoir),
      start_(start) {
  if (!(max_load_rps > 0)) throw Error(Errc::InvalidArgument, "max load must be positive");
  if (reservoir_size == 0) throw Error(Errc::InvalidArgument, "reservoir size must be positive");
  reservoir_.reserve(reservoir_size);
}

void WindowCollector::on_completion(const RunRecord& r) {
  latencies_.record(r.sojourn);
  const double sample =
      static_cast<double>((tail_input_ == TailInput::Service ? r.service_demand : r.sojourn).count());
  ++seen_;
  if (reservoir_.size() < reservoir_size_) {
    reservoir_.push_back(sample);
  } else {
    const std::uint64_t j = rng_.next_u64() % seen_;
    if (j < reservoir_size_) reservoir_[j] = sample;
  }
}

WindowStats WindowCollector::snapshot(Timestamp now) {
  WindowStats s;
  s.start = start_;
  s.end = now;
  s.arrivals = arrivals_;
  s.completions = latencies_.count();
  s.qlen = qlen_max_;
  const double seconds = std::chrono::duration<double>(now - start_).count();
  s.load = seconds > 0 ? static_cast<double>(arrivals_) / seconds / max_load_rps_ : 0.0;
  if (!latencies_.empty()) {
    s.median = latencies_.quantile(0.5);
    s.p99 = latencies_.quantile(0.99);
  }
  s.latency_samples = std::move(reservoir_);

  start_ = now;
  arrivals_ = 0;
  qlen_max_ = 0;
  latencies_ = LatencyHistogram{};
  reservoir_ = {};
  reservoir_.reserve(reservoir_size_);
  seen_ = 0;
  return s;
}

// ---------------------------------------------------------------------------

std::string format_quantum(Duration q) { return q == kInfinite ? "inf" : std::to_string(q.count()); }

std::string format_double(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

namespace {

std::string opt_ns(const std::optional<Duration>& d) { return d ? std::to_string(d->count()) : ""; }

}  // namespace

void write_summary_header(std::ostream& out) {
  out << "# preemptible summary v1 (nearest-rank quantiles, 1% log buckets)\n" << kSummaryHeader << '\n';
}

void write_summary_row(std::ostream& out, const SummaryRow& row) {
  out << row.policy << ',' << row.workload << ',' << format_double(row.load_frac, 4) << ','
      << format_quantum(row.quantum) << ',' << opt_ns(row.p50) << ',' << opt_ns(row.p99) << ','
      << (row.slo_viol_rate ? format_double(*row.slo_viol_rate, 6) : "") << ','
      << format_double(row.throughput_rps, 1) << ',' << format_double(row.mean_preempts, 4) << '\n';
}

void write_record_header(std::ostream& out) { out << "# preemptible records v1\n" << kRecordHeader << '\n'; }

void write_record_row(std::ostream& out, const RunRecord& r) {
  out << r.id << ',' << to_string(r.cls) << ',' << ns(r.arrival) << ',' << ns(r.dispatched_at) << ','
      << ns(r.completed_at) << ',' << r.service_demand.count() << ',' << r.sojourn.count() << ','
      << r.preempt_count << '\n';
}

}  // namespace preemptible
