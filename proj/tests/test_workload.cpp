#include <gtest/gtest.h>

#include <cmath>

#include "preemptible/workload.hpp"

using namespace preemptible;
using namespace std::chrono_literals;

TEST(Rng, UniformIsInsideTheOpenInterval) {
  Rng rng(7, Stream::Service);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, StreamsDiffer) {
  Rng a(7, Stream::Arrivals), b(7, Stream::Service), c(7, Stream::Arrivals);
  EXPECT_NE(a.next_u64(), b.next_u64());
  Rng a2(7, Stream::Arrivals);
  EXPECT_EQ(a2.next_u64(), c.next_u64());
}

TEST(Service, ExponentialMeanMatches) {
  Rng rng(1, Stream::Service);
  const ServiceDistribution d = Exponential{5us};
  double sum = 0;
  const int n = 1'000'000;
  for (int i = 0; i < n; ++i) sum += static_cast<double>(sample_service(d, {}, rng).count());
  EXPECT_NEAR(sum / n, 5000.0, 5000.0 * 0.01);
}

TEST(Service, BimodalSplit) {
  Rng rng(2, Stream::Service);
  const ServiceDistribution d = Bimodal{0.995, 10us, 1000us};
  int longs = 0;
  const int n = 1'000'000;
  for (int i = 0; i < n; ++i) {
    const auto s = sample_service(d, {}, rng);
    ASSERT_TRUE(s == 10us || s == 1000us);
    longs += s == 1000us;
  }
  EXPECT_NEAR(longs / static_cast<double>(n), 0.005, 0.0005);
  EXPECT_DOUBLE_EQ(mean_service_ns(d, {}), 0.995 * 10'000 + 0.005 * 1'000'000);
}

TEST(Service, ShiftSwitchesAtTheBoundary) {
  const ServiceDistribution d = make_shift(Constant{1us}, Constant{2us}, at(10ms));
  EXPECT_EQ(sample_service(d, at(10ms - 1ns), 0.5), 1us);
  EXPECT_EQ(sample_service(d, at(10ms), 0.5), 2us);
  EXPECT_DOUBLE_EQ(mean_service_ns(d, at(20ms)), 1500.0);
  EXPECT_DOUBLE_EQ(mean_service_ns(d, at(40ms)), 0.25 * 1000 + 0.75 * 2000);
}

TEST(Service, ExponentialNeverZero) {
  EXPECT_EQ(sample_service(Exponential{5us}, {}, 1.0 - 1e-16), 1ns);
}

TEST(Service, ValidationRejectsBadParameters) {
  EXPECT_THROW(validate(ServiceDistribution{Exponential{0ns}}), Error);
  EXPECT_THROW(validate(ServiceDistribution{Bimodal{1.5, 1us, 2us}}), Error);
  EXPECT_THROW(validate(ServiceDistribution{Constant{-1ns}}), Error);
  EXPECT_NO_THROW(validate(ServiceDistribution{Bimodal{0.995, 1us, 2us}}));
}

TEST(Presets, MatchTheirDefinitions) {
  const auto a1 = preset("A1", 1s);
  const auto& b1 = std::get<Bimodal>(a1.lc.variant());
  EXPECT_EQ(b1.short_value, 500ns);
  EXPECT_EQ(b1.long_value, 500us);
  EXPECT_DOUBLE_EQ(b1.p_short, 0.995);
  EXPECT_EQ(std::get<Bimodal>(preset("A2", 1s).lc.variant()).short_value, 5us);
  EXPECT_EQ(std::get<Exponential>(preset("B", 1s).lc.variant()).mean, 5us);
  const auto c = preset("C", 4s);
  EXPECT_EQ(std::get<Shift>(c.lc.variant()).switch_at, at(2s));
  const auto f2 = preset("FIG2-BIMODAL", 1s);
  EXPECT_EQ(std::get<Bimodal>(f2.lc.variant()).long_value, 1000us);
  EXPECT_EQ(std::get<Exponential>(preset("FIG2-EXP", 1s).lc.variant()).mean, 10us);
  const auto co = preset("COLOC", 1s);
  ASSERT_TRUE(co.be);
  EXPECT_DOUBLE_EQ(co.be_fraction, 0.02);
  EXPECT_DOUBLE_EQ(co.mean_service_ns({}), 0.98 * 1000 + 0.02 * 100'000);
  EXPECT_THROW(preset("nope", 1s), Error);
}

TEST(Arrivals, StrictlyIncreasingAndPoissonRate) {
  const ArrivalProcess p = Poisson{100'000};
  Rng rng(3, Stream::Arrivals);
  Timestamp t{};
  const int n = 200'000;
  for (int i = 0; i < n; ++i) {
    const Timestamp next = next_arrival(p, t, rng);
    ASSERT_GT(next, t);
    t = next;
  }
  const double rate = n / std::chrono::duration<double>(t.time_since_epoch()).count();
  EXPECT_NEAR(rate, 100'000, 1'000);
}

TEST(Arrivals, ZeroRateNeverArrives) {
  EXPECT_EQ(next_arrival(Poisson{0}, {}, 0.5), Timestamp{Duration::max()});
}

TEST(Arrivals, BurstyHitsItsMeanAndSpikes) {
  const Bursty b{40'000, 110'000, 1s, 200ms};
  const ArrivalProcess p = b;
  EXPECT_DOUBLE_EQ(mean_rate_rps(p), 0.2 * 110'000 + 0.8 * 40'000);
  Rng rng(4, Stream::Arrivals);
  Timestamp t{};
  std::uint64_t in_spike = 0, outside = 0;
  while (t < at(10s)) {
    t = next_arrival(p, t, rng);
    if (t >= at(10s)) break;
    (rate_at(p, t) == b.spike_rate ? in_spike : outside)++;
  }
  EXPECT_NEAR(in_spike / 2.0, 110'000, 110'000 * 0.02);
  EXPECT_NEAR(outside / 8.0, 40'000, 40'000 * 0.02);
}

TEST(Generator, DeterministicAndIndependentStreams) {
  const auto w = preset("COLOC", 1s);
  RequestGenerator g1(w, Poisson{50'000}, 11), g2(w, Poisson{50'000}, 11);
  WorkloadSpec w_more_be = w;
  w_more_be.be_fraction = 0.5;
  RequestGenerator g3(w_more_be, Poisson{50'000}, 11);
  for (int i = 0; i < 1000; ++i) {
    const auto a = g1.next(), b = g2.next(), c = g3.next();
    ASSERT_EQ(a.id, static_cast<std::uint64_t>(i));
    ASSERT_EQ(a.arrival, b.arrival);
    ASSERT_EQ(a.service_demand, b.service_demand);
    ASSERT_EQ(a.cls, b.cls);
    ASSERT_EQ(a.arrival, c.arrival);  // class mix does not disturb arrivals
    ASSERT_EQ(a.remaining, a.service_demand);
  }
}
