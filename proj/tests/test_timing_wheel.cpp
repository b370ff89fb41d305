#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "preemptible/timing_wheel.hpp"

using namespace preemptible;
using namespace std::chrono_literals;

TEST(TimingWheel, RejectsBadGeometry) {
  EXPECT_THROW(TimingWheel(0ns, 8), Error);
  EXPECT_THROW(TimingWheel(1us, 1), Error);
}

TEST(TimingWheel, ExpiresExactlyTheDueEntries) {
  TimingWheel w(1us, 8);
  w.insert({at(500ns), 0, 1});
  w.insert({at(3us), 1, 1});
  w.insert({at(100us), 2, 1});  // beyond one revolution
  EXPECT_EQ(w.size(), 3u);
  EXPECT_EQ(w.earliest(), at(500ns));
  std::vector<TimerEntry> due;
  w.expire(at(2999ns), due);
  ASSERT_EQ(due.size(), 1u);
  EXPECT_EQ(due[0].cell, 0u);
  due.clear();
  w.expire(at(99us), due);
  ASSERT_EQ(due.size(), 1u);
  EXPECT_EQ(due[0].cell, 1u);
  due.clear();
  w.expire(at(100us), due);
  ASSERT_EQ(due.size(), 1u);
  EXPECT_EQ(due[0].cell, 2u);
  EXPECT_TRUE(w.empty());
}

TEST(TimingWheel, MatchesASortedOracle) {
  std::mt19937_64 gen(5);
  std::uniform_int_distribution<std::int64_t> dist(0, 2'000'000);
  TimingWheel w(3us, 64);
  std::vector<std::int64_t> deadlines;
  for (std::uint32_t i = 0; i < 5000; ++i) {
    const auto d = dist(gen);
    deadlines.push_back(d);
    w.insert({at(Duration{d}), i, 1});
  }
  std::vector<TimerEntry> due;
  std::size_t total = 0;
  for (std::int64_t now = 0; now <= 2'000'000; now += 7'919) {
    due.clear();
    w.expire(at(Duration{now}), due);
    for (const auto& e : due) {
      ASSERT_LE(ns(e.deadline), now);
      ASSERT_GT(ns(e.deadline), now - 7'919);  // not late by more than one step
    }
    total += due.size();
  }
  due.clear();
  w.expire(at(Duration{3'000'000}), due);
  total += due.size();
  EXPECT_EQ(total, deadlines.size());
}

TEST(TimingWheel, InsertBehindTheCursorFiresOnNextExpire) {
  TimingWheel w(1us, 4);
  std::vector<TimerEntry> due;
  w.expire(at(50us), due);
  w.insert({at(10us), 3, 2});
  w.expire(at(50us), due);
  ASSERT_EQ(due.size(), 1u);
  EXPECT_EQ(due[0].generation, 2u);
}
