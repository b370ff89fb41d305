#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "preemptible/metrics.hpp"

using namespace preemptible;
using namespace std::chrono_literals;

namespace {

// Exact nearest-rank quantile over a sorted copy.
std::int64_t exact_quantile(std::vector<std::int64_t> v, double q) {
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::max<std::size_t>(rank, 1) - 1];
}

RunRecord rec(std::uint64_t id, Duration sojourn, RequestClass cls = RequestClass::LC) {
  RunRecord r;
  r.id = id;
  r.cls = cls;
  r.completed_at = at(sojourn);
  r.sojourn = sojourn;
  r.service_demand = std::min<Duration>(sojourn, 1us);
  return r;
}

}  // namespace

TEST(Histogram, BucketCountCoversTheSpanAtOnePercent) {
  EXPECT_EQ(LatencyHistogram::kBuckets, 1852u);
  EXPECT_LE(LatencyHistogram::bucket_lower(LatencyHistogram::kBuckets - 1), 1e10);
  EXPECT_GE(LatencyHistogram::bucket_lower(LatencyHistogram::kBuckets), 1e10);
}

TEST(Histogram, ConstantValues) {
  LatencyHistogram h;
  for (int i = 0; i < 100; ++i) h.record(10us);
  EXPECT_EQ(h.quantile(0.5), 10us);
  EXPECT_EQ(h.quantile(0.01), 10us);
  EXPECT_EQ(h.quantile(0.99), 10us);
  EXPECT_FALSE(h.overflowed());
}

TEST(Histogram, NearestRankOnOneToHundred) {
  LatencyHistogram h;
  for (int i = 1; i <= 100; ++i) h.record(Duration{i * 1000});
  EXPECT_NEAR(static_cast<double>(h.quantile(0.99).count()), 99'000, 990);
  EXPECT_NEAR(static_cast<double>(h.quantile(0.5).count()), 50'000, 500);
}

TEST(Histogram, OutOfSpanIsClampedAndFlagged) {
  LatencyHistogram h;
  h.record(5ns);
  EXPECT_TRUE(h.overflowed());
  EXPECT_EQ(h.min(), 100ns);
  LatencyHistogram g;
  g.record(20s);
  EXPECT_TRUE(g.overflowed());
  EXPECT_EQ(g.max(), 10s);
}

TEST(Histogram, EmptyHasNoData) {
  LatencyHistogram h;
  try {
    h.quantile(0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NoData);
  }
  EXPECT_THROW(h.quantile(1.0), Error);
}

TEST(Histogram, AgreesWithTheSortOracle) {
  std::mt19937_64 gen(21);
  std::lognormal_distribution<double> dist(std::log(20'000.0), 1.5);
  std::vector<std::int64_t> values;
  LatencyHistogram h;
  for (int i = 0; i < 10000; ++i) {
    const auto v = std::clamp<std::int64_t>(std::llround(dist(gen)), 100, 10'000'000'000);
    values.push_back(v);
    h.record(Duration{v});
  }
  double worst = 0;
  for (double q = 0.01; q < 0.995; q += 0.01) {
    const double exact = static_cast<double>(exact_quantile(values, q));
    worst = std::max(worst, std::abs(static_cast<double>(h.quantile(q).count()) - exact) / exact);
  }
  EXPECT_LE(worst, 0.01);
}

TEST(Histogram, QuantileIsMonotoneInQ) {
  std::mt19937_64 gen(4);
  LatencyHistogram h;
  for (int i = 0; i < 5000; ++i) h.record(Duration{static_cast<std::int64_t>(100 + gen() % 5'000'000)});
  Duration prev{0};
  for (double q = 0.001; q < 1.0; q += 0.001) {
    const auto v = h.quantile(q);
    ASSERT_GE(v, prev);
    prev = v;
  }
}

TEST(Histogram, MergeIsAssociative) {
  std::mt19937_64 gen(8);
  LatencyHistogram a, b, c;
  for (auto* h : {&a, &b, &c}) {
    for (int i = 0; i < 3000; ++i) h->record(Duration{static_cast<std::int64_t>(100 + gen() % 50'000'000)});
  }
  LatencyHistogram left = a, bc = b;
  bc.merge(c);
  left.merge(bc);
  LatencyHistogram right = a;
  right.merge(b);
  right.merge(c);
  ASSERT_EQ(left.count(), right.count());
  for (double q = 0.01; q < 1.0; q += 0.01) ASSERT_EQ(left.quantile(q), right.quantile(q));
  EXPECT_EQ(left.min(), right.min());
  EXPECT_EQ(left.max(), right.max());
}

TEST(SloViolation, Examples) {
  const std::vector<RunRecord> ten{rec(0, 10us), rec(1, 10us)};
  EXPECT_EQ(slo_violation_rate(ten, 50us), 0.0);
  const std::vector<RunRecord> mixed{rec(0, 40us), rec(1, 60us)};
  EXPECT_EQ(slo_violation_rate(mixed, 50us), 0.5);
  const std::vector<RunRecord> classes{rec(0, 40us), rec(1, 60us, RequestClass::BE), rec(2, 70us, RequestClass::BE)};
  EXPECT_EQ(slo_violation_rate(classes, 50us, RequestClass::LC), 0.0);
  EXPECT_EQ(slo_violation_rate(classes, 50us, RequestClass::BE), 1.0);
  EXPECT_THROW(slo_violation_rate(std::vector<RunRecord>{}, 50us), Error);
}

TEST(RunAggregate, PerClassCountsSumToTotal) {
  RunAggregate agg(50us);
  std::mt19937_64 gen(2);
  for (std::uint64_t i = 0; i < 1000; ++i) {
    auto r = rec(i, Duration{static_cast<std::int64_t>(1000 + gen() % 100'000)},
                 gen() % 10 == 0 ? RequestClass::BE : RequestClass::LC);
    r.preempt_count = static_cast<std::uint32_t>(i % 3);
    agg.add(r);
  }
  EXPECT_EQ(agg.of(RequestClass::LC).count() + agg.of(RequestClass::BE).count(), agg.count());
  EXPECT_NEAR(agg.mean_preempts(), 0.999, 1e-12);
}

TEST(RunRecord, MakeRecordChecksConsistency) {
  Request r;
  r.id = 3;
  r.arrival = at(1us);
  r.service_demand = 5us;
  EXPECT_THROW(make_record(r), Error);
  r.dispatched_at = at(2us);
  r.completed_at = at(7us);
  const auto rr = make_record(r);
  EXPECT_EQ(rr.sojourn, 6us);
  EXPECT_EQ(rr.queueing(), 1us);
  r.completed_at = at(4us);
  EXPECT_THROW(make_record(r), Error);
}

TEST(WindowCollector, SyntheticFeedMatchesHandComputation) {
  // 1000 arrivals over a 1s window against a 10k rps max load is 10% load.
  WindowCollector w(10'000, 4096, 1, TailInput::Sojourn, at(0s));
  for (int i = 0; i < 1000; ++i) w.on_arrival();
  w.observe_queue_length(3);
  w.observe_queue_length(7);
  w.observe_queue_length(2);
  for (int i = 1; i <= 99; ++i) w.on_completion(rec(static_cast<std::uint64_t>(i), Duration{i * 1000}));
  const auto s = w.snapshot(at(1s));
  EXPECT_DOUBLE_EQ(s.load, 0.1);
  EXPECT_EQ(s.qlen, 7u);
  EXPECT_EQ(s.arrivals, 1000u);
  EXPECT_EQ(s.completions, 99u);
  ASSERT_TRUE(s.median);
  EXPECT_NEAR(static_cast<double>(s.median->count()), 50'000, 500);
  EXPECT_EQ(s.latency_samples.size(), 99u);
}

TEST(WindowCollector, EmptyWindowAndPartition) {
  WindowCollector w(1000, 16, 1, TailInput::Service, at(0s));
  w.on_arrival();
  const auto first = w.snapshot(at(1s));
  EXPECT_FALSE(first.median);
  EXPECT_DOUBLE_EQ(first.load, 0.001);
  for (int i = 0; i < 100; ++i) w.on_completion(rec(static_cast<std::uint64_t>(i), 20us));
  const auto second = w.snapshot(at(2s));
  const auto third = w.snapshot(at(3s));
  EXPECT_EQ(second.arrivals, 0u);
  EXPECT_EQ(second.completions, 100u);
  EXPECT_EQ(second.latency_samples.size(), 16u);  // reservoir bound
  for (double v : second.latency_samples) EXPECT_EQ(v, 1000.0);  // service, not sojourn
  EXPECT_EQ(second.start, at(1s));
  EXPECT_EQ(third.completions, 0u);
}

TEST(Csv, HeadersAndRows) {
  std::ostringstream os;
  write_summary_header(os);
  write_summary_row(os, SummaryRow{"fcfs", "B", 0.5, kInfinite, 10us, 50us, 0.25, 1000.0, 0.5});
  const std::string s = os.str();
  EXPECT_EQ(s.rfind("# preemptible summary v1", 0), 0u);
  EXPECT_NE(s.find(std::string(kSummaryHeader) + "\n"), std::string::npos);
  EXPECT_NE(s.find("fcfs,B,0.5000,inf,10000,50000,0.250000,1000.0,0.5000\n"), std::string::npos);

  std::ostringstream r;
  write_record_header(r);
  RunRecord x = rec(4, 12us, RequestClass::BE);
  x.arrival = at(1us);
  x.dispatched_at = at(2us);
  write_record_row(r, x);
  EXPECT_NE(r.str().find("4,BE,1000,2000,12000,1000,12000,0\n"), std::string::npos);
}
