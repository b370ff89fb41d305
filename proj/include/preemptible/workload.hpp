#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <variant>

#include "preemptible/clock.hpp"

namespace preemptible {

/// Independent random streams, one per purpose, so that changing one knob
/// (say the class mix) does not perturb the draws of another.
enum class Stream : std::uint64_t {
  Arrivals = 1,
  Service = 2,
  Class = 3,
  Reservoir = 4,
  Oracle = 5,
};

/// 64-bit Mersenne Twister (std::mt19937_64) whose seed is derived from the
/// run seed and the stream id through one SplitMix64 step. uniform() maps the
/// top 53 bits onto the open interval (0, 1), so log(u) is always finite.
class Rng {
 public:
  Rng(std::uint64_t seed, Stream stream);
  explicit Rng(std::uint64_t raw_seed) : engine_(raw_seed) {}

  double uniform() noexcept {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }
  std::uint64_t next_u64() noexcept { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

template <class R>
concept UniformSource = requires(R& r) {
  { r.uniform() } -> std::convertible_to<double>;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// ---------------------------------------------------------------------------
// Service-time distributions

struct Bimodal {
  double p_short = 0.995;
  Duration short_value{};
  Duration long_value{};
};

struct Exponential {
  Duration mean{};
};

struct Constant {
  Duration value{};
};

class ServiceDistribution;

/// Samples from `first` before `switch_at` and from `second` afterwards.
struct Shift {
  std::shared_ptr<const ServiceDistribution> first;
  std::shared_ptr<const ServiceDistribution> second;
  Timestamp switch_at{};
};

class ServiceDistribution {
 public:
  using Variant = std::variant<Bimodal, Exponential, Constant, Shift>;

  ServiceDistribution(Bimodal d) : v_(d) {}
  ServiceDistribution(Exponential d) : v_(d) {}
  ServiceDistribution(Constant d) : v_(d) {}
  ServiceDistribution(Shift d) : v_(std::move(d)) {}

  const Variant& variant() const noexcept { return v_; }

 private:
  Variant v_;
};

Shift make_shift(ServiceDistribution first, ServiceDistribution second, Timestamp switch_at);

/// Throws Errc::InvalidConfig when a parameter is out of range.
void validate(const ServiceDistribution& dist);

/// One draw given a single uniform variate u in (0, 1). Always >= 1ns.
Duration sample_service(const ServiceDistribution& dist, Timestamp now, double u);

template <UniformSource R>
Duration sample_service(const ServiceDistribution& dist, Timestamp now, R& rng) {
  return sample_service(dist, now, static_cast<double>(rng.uniform()));
}

/// Mean service time in ns. For Shift this is the time-weighted mean over
/// [0, horizon).
double mean_service_ns(const ServiceDistribution& dist, Timestamp horizon);

std::string describe(const ServiceDistribution& dist);

// ---------------------------------------------------------------------------
// Arrival processes

/// rate 0 never arrives.
struct Poisson {
  double rate_rps = 0;
};

/// Poisson arrivals at spike_rate inside [k*period, k*period + width), at
/// base_rate otherwise.
struct Bursty {
  double base_rate = 0;
  double spike_rate = 0;
  Duration spike_period{};
  Duration spike_width{};
};

using ArrivalProcess = std::variant<Poisson, Bursty>;

void validate(const ArrivalProcess& proc);

/// Next arrival strictly after `now`, driven by one uniform variate.
Timestamp next_arrival(const ArrivalProcess& proc, Timestamp now, double u);

template <UniformSource R>
Timestamp next_arrival(const ArrivalProcess& proc, Timestamp now, R& rng) {
  return next_arrival(proc, now, static_cast<double>(rng.uniform()));
}

double mean_rate_rps(const ArrivalProcess& proc);
double rate_at(const ArrivalProcess& proc, Timestamp t);

// ---------------------------------------------------------------------------
// Requests

enum class RequestClass : std::uint8_t { LC, BE };

std::string_view to_string(RequestClass c) noexcept;

inline constexpr double kColocationBeFraction = 0.02;

RequestClass colocation_mix(double u, double be_fraction = kColocationBeFraction) noexcept;

template <UniformSource R>
RequestClass colocation_mix(R& rng, double be_fraction = kColocationBeFraction) {
  return colocation_mix(static_cast<double>(rng.uniform()), be_fraction);
}

struct Request {
  std::uint64_t id = 0;
  Timestamp arrival{};
  Duration service_demand{};
  Duration remaining{};
  RequestClass cls = RequestClass::LC;
  std::optional<Timestamp> dispatched_at;
  std::optional<Timestamp> completed_at;
  std::uint32_t preempt_count = 0;
};

/// Service model for a whole run: LC requests, and optionally a BE class
/// drawn with probability be_fraction.
struct WorkloadSpec {
  std::string name;
  ServiceDistribution lc = Constant{Duration{1000}};
  std::optional<ServiceDistribution> be;
  double be_fraction = 0.0;

  const ServiceDistribution& service_for(RequestClass c) const;
  double mean_service_ns(Timestamp horizon) const;
};

void validate(const WorkloadSpec& spec);

/// Named workloads: A1, A2, B, C, FIG2-BIMODAL, FIG2-EXP, COLOC. C switches
/// from A1 to B at horizon/2. Throws Errc::InvalidConfig for unknown names.
WorkloadSpec preset(std::string_view name, Duration horizon);

/// Deterministic stream of requests for one run.
class RequestGenerator {
 public:
  RequestGenerator(WorkloadSpec workload, ArrivalProcess arrivals, std::uint64_t seed);

  /// Next request, arriving strictly after the previous one.
  Request next();

  const WorkloadSpec& workload() const noexcept { return workload_; }
  const ArrivalProcess& arrivals() const noexcept { return arrivals_; }

 private:
  WorkloadSpec workload_;
  ArrivalProcess arrivals_;
  Rng arrival_rng_;
  Rng service_rng_;
  Rng class_rng_;
  Timestamp last_{};
  std::uint64_t next_id_ = 0;
};

}  // namespace preemptible
