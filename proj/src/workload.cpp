#include "preemptible/workload.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace preemptible {

namespace {

Duration round_positive(double nanos) {
  const double r = std::llround(nanos);
  return Duration{std::max<std::int64_t>(1, static_cast<std::int64_t>(r))};
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

[[noreturn]] void bad(const std::string& what) { throw Error(Errc::InvalidConfig, what); }

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, Stream stream)
    : engine_(splitmix64(seed ^ (static_cast<std::uint64_t>(stream) * 0xd1342543de82ef95ULL))) {}

Shift make_shift(ServiceDistribution first, ServiceDistribution second, Timestamp switch_at) {
  return Shift{std::make_shared<const ServiceDistribution>(std::move(first)),
               std::make_shared<const ServiceDistribution>(std::move(second)), switch_at};
}

void validate(const ServiceDistribution& dist) {
  std::visit(Overloaded{
                 [](const Bimodal& b) {
                   if (!(b.p_short >= 0.0 && b.p_short <= 1.0)) bad("bimodal p_short must be in [0, 1]");
                   if (b.short_value.count() <= 0 || b.long_value.count() <= 0)
                     bad("bimodal durations must be positive");
                 },
                 [](const Exponential& e) {
                   if (e.mean.count() <= 0) bad("exponential mean must be positive");
                 },
                 [](const Constant& c) {
                   if (c.value.count() <= 0) bad("constant service must be positive");
                 },
                 [](const Shift& s) {
                   if (!s.first || !s.second) bad("shift needs both distributions");
                   if (ns(s.switch_at) <= 0) bad("shift switch_at must be positive");
                   validate(*s.first);
                   validate(*s.second);
                 },
             },
             dist.variant());
}

Duration sample_service(const ServiceDistribution& dist, Timestamp now, double u) {
  return std::visit(Overloaded{
                        [&](const Bimodal& b) { return u < b.p_short ? b.short_value : b.long_value; },
                        [&](const Exponential& e) {
                          return round_positive(-static_cast<double>(e.mean.count()) * std::log(u));
                        },
                        [&](const Constant& c) { return c.value; },
                        [&](const Shift& s) {
                          return sample_service(now < s.switch_at ? *s.first : *s.second, now, u);
                        },
                    },
                    dist.variant());
}

double mean_service_ns(const ServiceDistribution& dist, Timestamp horizon) {
  return std::visit(
      Overloaded{
          [](const Bimodal& b) {
            return b.p_short * static_cast<double>(b.short_value.count()) +
                   (1.0 - b.p_short) * static_cast<double>(b.long_value.count());
          },
          [](const Exponential& e) { return static_cast<double>(e.mean.count()); },
          [](const Constant& c) { return static_cast<double>(c.value.count()); },
          [&](const Shift& s) {
            const double m1 = mean_service_ns(*s.first, horizon);
            const double m2 = mean_service_ns(*s.second, horizon);
            if (horizon <= s.switch_at || ns(horizon) <= 0) return m1;
            const double h = static_cast<double>(ns(horizon));
            const double w = static_cast<double>(ns(s.switch_at)) / h;
            return w * m1 + (1.0 - w) * m2;
          },
      },
      dist.variant());
}

std::string describe(const ServiceDistribution& dist) {
  std::ostringstream os;
  std::visit(Overloaded{
                 [&](const Bimodal& b) {
                   os << "bimodal(" << b.p_short << "," << b.short_value.count() << "ns," << b.long_value.count()
                      << "ns)";
                 },
                 [&](const Exponential& e) { os << "exp(" << e.mean.count() << "ns)"; },
                 [&](const Constant& c) { os << "const(" << c.value.count() << "ns)"; },
                 [&](const Shift& s) {
                   os << "shift(" << describe(*s.first) << "," << describe(*s.second) << "," << ns(s.switch_at)
                      << "ns)";
                 },
             },
             dist.variant());
  return os.str();
}

// ---------------------------------------------------------------------------

void validate(const ArrivalProcess& proc) {
  std::visit(Overloaded{
                 [](const Poisson& p) {
                   if (!(p.rate_rps >= 0) || std::isinf(p.rate_rps)) bad("poisson rate must be finite and >= 0");
                 },
                 [](const Bursty& b) {
                   if (!(b.base_rate > 0) || !(b.spike_rate > 0)) bad("bursty rates must be positive");
                   if (b.spike_width.count() <= 0 || b.spike_width >= b.spike_period)
                     bad("bursty spike_width must be in (0, spike_period)");
                 },
             },
             proc);
}

double rate_at(const ArrivalProcess& proc, Timestamp t) {
  return std::visit(Overloaded{
                        [](const Poisson& p) { return p.rate_rps; },
                        [&](const Bursty& b) {
                          const auto phase = ns(t) % b.spike_period.count();
                          return phase < b.spike_width.count() ? b.spike_rate : b.base_rate;
                        },
                    },
                    proc);
}

double mean_rate_rps(const ArrivalProcess& proc) {
  return std::visit(Overloaded{
                        [](const Poisson& p) { return p.rate_rps; },
                        [](const Bursty& b) {
                          const double w = static_cast<double>(b.spike_width.count()) /
                                           static_cast<double>(b.spike_period.count());
                          return w * b.spike_rate + (1.0 - w) * b.base_rate;
                        },
                    },
                    proc);
}

Timestamp next_arrival(const ArrivalProcess& proc, Timestamp now, double u) {
  // Unit-rate exponential hazard, spent against the (piecewise constant) rate.
  double hazard = -std::log(u);
  return std::visit(
      Overloaded{
          [&](const Poisson& p) {
            if (p.rate_rps <= 0) return Timestamp{Duration::max()};
            return now + round_positive(hazard / p.rate_rps * 1e9);
          },
          [&](const Bursty& b) {
            const std::int64_t period = b.spike_period.count();
            const std::int64_t width = b.spike_width.count();
            std::int64_t t = ns(now);
            double frac = 0.0;  // sub-ns offset carried across segments
            for (;;) {
              const std::int64_t phase = t % period;
              const bool in_spike = phase < width;
              const double rate_per_ns = (in_spike ? b.spike_rate : b.base_rate) * 1e-9;
              const std::int64_t seg_end = t - phase + (in_spike ? width : period);
              const double room = static_cast<double>(seg_end - t) - frac;
              const double need = hazard / rate_per_ns;
              if (need <= room) {
                const Timestamp next = at(Duration{t}) + round_positive(frac + need);
                return std::max(next, now + Duration{1});
              }
              hazard -= room * rate_per_ns;
              t = seg_end;
              frac = 0.0;
            }
          },
      },
      proc);
}

// ---------------------------------------------------------------------------

std::string_view to_string(RequestClass c) noexcept { return c == RequestClass::LC ? "LC" : "BE"; }

RequestClass colocation_mix(double u, double be_fraction) noexcept {
  return u < be_fraction ? RequestClass::BE : RequestClass::LC;
}

const ServiceDistribution& WorkloadSpec::service_for(RequestClass c) const {
  if (c == RequestClass::BE && be) return *be;
  return lc;
}

double WorkloadSpec::mean_service_ns(Timestamp horizon) const {
  const double m_lc = preemptible::mean_service_ns(lc, horizon);
  if (!be || be_fraction <= 0.0) return m_lc;
  return (1.0 - be_fraction) * m_lc + be_fraction * preemptible::mean_service_ns(*be, horizon);
}

void validate(const WorkloadSpec& spec) {
  validate(spec.lc);
  if (spec.be) validate(*spec.be);
  if (!(spec.be_fraction >= 0.0 && spec.be_fraction <= 1.0)) bad("be_fraction must be in [0, 1]");
  if (spec.be_fraction > 0.0 && !spec.be) bad("be_fraction > 0 needs a BE distribution");
}

WorkloadSpec preset(std::string_view name, Duration horizon) {
  using namespace std::chrono_literals;
  const ServiceDistribution a1 = Bimodal{0.995, 500ns, 500us};
  const ServiceDistribution b = Exponential{5us};
  WorkloadSpec spec;
  spec.name = std::string(name);
  if (name == "A1") {
    spec.lc = a1;
  } else if (name == "A2") {
    spec.lc = Bimodal{0.995, 5us, 500us};
  } else if (name == "B") {
    spec.lc = b;
  } else if (name == "C") {
    const auto half = horizon.count() > 1 ? horizon / 2 : Duration{1};
    spec.lc = make_shift(a1, b, at(half));
  } else if (name == "FIG2-BIMODAL") {
    spec.lc = Bimodal{0.995, 10us, 1000us};
  } else if (name == "FIG2-EXP") {
    spec.lc = Exponential{10us};
  } else if (name == "COLOC") {
    spec.lc = Exponential{1us};
    spec.be = Constant{100us};
    spec.be_fraction = kColocationBeFraction;
  } else {
    bad("unknown workload preset '" + std::string(name) + "'");
  }
  return spec;
}

RequestGenerator::RequestGenerator(WorkloadSpec workload, ArrivalProcess arrivals, std::uint64_t seed)
    : workload_(std::move(workload)),
      arrivals_(std::move(arrivals)),
      arrival_rng_(seed, Stream::Arrivals),
      service_rng_(seed, Stream::Service),
      class_rng_(seed, Stream::Class) {
  validate(workload_);
  validate(arrivals_);
}

Request RequestGenerator::next() {
  Request r;
  r.id = next_id_++;
  r.arrival = next_arrival(arrivals_, last_, arrival_rng_);
  last_ = r.arrival;
  r.cls = workload_.be_fraction > 0.0 ? colocation_mix(class_rng_, workload_.be_fraction) : RequestClass::LC;
  r.service_demand = sample_service(workload_.service_for(r.cls), r.arrival, service_rng_);
  r.remaining = r.service_demand;
  return r;
}

}  // namespace preemptible
