#include "preemptible/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

namespace preemptible {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& msg) { throw Error(Errc::InvalidConfig, msg); }

void reject_unknown(const json& obj, std::string_view where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) bad(std::string(where) + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) bad("unknown key '" + key + "' in " + std::string(where));
  }
}

template <class T>
T get_number(const json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) bad("'" + key + "' must be a number");
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0)) {
      bad("'" + key + "' must be a non-negative integer");
    }
  }
  return v.get<T>();
}

std::string get_string(const json& obj, const std::string& key, std::string fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_string()) bad("'" + key + "' must be a string");
  return obj.at(key).get<std::string>();
}

Duration get_duration(const json& obj, const std::string& key, Duration fallback, bool allow_infinite = false) {
  if (!obj.contains(key)) return fallback;
  return duration_from_json(obj.at(key), key, allow_infinite);
}

}  // namespace

Duration parse_duration(std::string_view text, bool allow_infinite) {
  const std::string original(text);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  if (text == "inf" || text == "INF" || text == "infinite") {
    if (!allow_infinite) bad("duration '" + original + "' may not be infinite here");
    return kInfinite;
  }
  std::size_t split = text.size();
  while (split > 0 && std::isalpha(static_cast<unsigned char>(text[split - 1]))) --split;
  const std::string_view number = text.substr(0, split);
  const std::string_view unit = text.substr(split);
  double scale;
  if (unit.empty() || unit == "ns") {
    scale = 1;
  } else if (unit == "us") {
    scale = 1e3;
  } else if (unit == "ms") {
    scale = 1e6;
  } else if (unit == "s") {
    scale = 1e9;
  } else {
    bad("duration '" + original + "' has an unknown unit (use ns, us, ms or s)");
  }
  double value = 0;
  const auto [ptr, ec] = std::from_chars(number.data(), number.data() + number.size(), value);
  if (number.empty() || ec != std::errc{} || ptr != number.data() + number.size()) {
    bad("cannot parse duration '" + original + "'");
  }
  const double total = std::round(value * scale);
  if (!(total >= 0) || total > 9.2e18) bad("duration '" + original + "' is out of range");
  return Duration{static_cast<std::int64_t>(total)};
}

Duration duration_from_json(const json& j, std::string_view key, bool allow_infinite) {
  if (j.is_number_integer()) {
    const auto v = j.get<std::int64_t>();
    if (v < 0) bad("'" + std::string(key) + "' must be >= 0");
    return Duration{v};
  }
  if (j.is_string()) return parse_duration(j.get<std::string>(), allow_infinite);
  bad("'" + std::string(key) + "' must be a duration string or integer nanoseconds");
}

ServiceDistribution parse_distribution(const json& j) {
  if (!j.is_object() || !j.contains("type")) bad("a distribution needs a 'type'");
  const std::string type = get_string(j, "type", "");
  if (type == "bimodal") {
    reject_unknown(j, "bimodal", {"type", "p_short", "short", "long"});
    if (!j.contains("short") || !j.contains("long")) bad("bimodal needs 'short' and 'long'");
    return Bimodal{get_number<double>(j, "p_short", 0.995), duration_from_json(j.at("short"), "short"),
                   duration_from_json(j.at("long"), "long")};
  }
  if (type == "exponential") {
    reject_unknown(j, "exponential", {"type", "mean"});
    if (!j.contains("mean")) bad("exponential needs 'mean'");
    return Exponential{duration_from_json(j.at("mean"), "mean")};
  }
  if (type == "constant") {
    reject_unknown(j, "constant", {"type", "value"});
    if (!j.contains("value")) bad("constant needs 'value'");
    return Constant{duration_from_json(j.at("value"), "value")};
  }
  if (type == "shift") {
    reject_unknown(j, "shift", {"type", "first", "second", "switch_at"});
    if (!j.contains("first") || !j.contains("second") || !j.contains("switch_at")) {
      bad("shift needs 'first', 'second' and 'switch_at'");
    }
    return make_shift(parse_distribution(j.at("first")), parse_distribution(j.at("second")),
                      at(duration_from_json(j.at("switch_at"), "switch_at")));
  }
  bad("unknown distribution type '" + type + "'");
}

ArrivalProcess parse_arrivals(const json& j) {
  const std::string type = get_string(j, "type", "poisson");
  if (type == "poisson") {
    reject_unknown(j, "arrivals", {"type", "rate_rps"});
    return Poisson{get_number<double>(j, "rate_rps", 0.0)};
  }
  if (type == "bursty") {
    reject_unknown(j, "arrivals", {"type", "base_rate", "spike_rate", "spike_period", "spike_width"});
    return Bursty{get_number<double>(j, "base_rate", 0.0), get_number<double>(j, "spike_rate", 0.0),
                  get_duration(j, "spike_period", Duration{0}), get_duration(j, "spike_width", Duration{0})};
  }
  bad("unknown arrival type '" + type + "'");
}

Policy make_policy(std::string_view name, Duration quantum, const PreemptFCFSDynamic& dynamic) {
  if (name == "rtc") return RunToCompletion{};
  if (name == "fcfs") return PreemptFCFS{quantum};
  if (name == "rr") return RoundRobin{quantum};
  if (name == "dynamic") return dynamic;
  bad("unknown policy '" + std::string(name) + "' (use rtc, fcfs, dynamic or rr)");
}

namespace {

WorkloadSpec parse_workload(const json& j, Duration horizon) {
  if (j.is_string()) return preset(j.get<std::string>(), horizon);
  reject_unknown(j, "workload", {"name", "lc", "be", "be_fraction"});
  WorkloadSpec w;
  w.name = get_string(j, "name", "custom");
  if (!j.contains("lc")) bad("workload needs an 'lc' distribution");
  w.lc = parse_distribution(j.at("lc"));
  if (j.contains("be")) w.be = parse_distribution(j.at("be"));
  w.be_fraction = get_number<double>(j, "be_fraction", w.be ? kColocationBeFraction : 0.0);
  return w;
}

ControllerHyperparams parse_controller(const json& j, std::size_t workers, Duration& initial) {
  ControllerHyperparams h;
  h.q_threshold = 2 * workers;
  if (j.is_null()) return h;
  reject_unknown(j, "controller",
                 {"l_high", "l_low", "k1", "k2", "k3", "q_threshold", "t_min", "t_max", "period", "k_fraction",
                  "initial"});
  h.l_high = get_number<double>(j, "l_high", h.l_high);
  h.l_low = get_number<double>(j, "l_low", h.l_low);
  h.k1 = get_duration(j, "k1", h.k1);
  h.k2 = get_duration(j, "k2", h.k2);
  h.k3 = get_duration(j, "k3", h.k3);
  h.q_threshold = get_number<std::size_t>(j, "q_threshold", h.q_threshold);
  h.t_min = get_duration(j, "t_min", h.t_min);
  h.t_max = get_duration(j, "t_max", h.t_max);
  h.period = get_duration(j, "period", h.period);
  h.k_fraction = get_number<double>(j, "k_fraction", h.k_fraction);
  initial = get_duration(j, "initial", initial);
  return h;
}

TimerConfig parse_timer(const json& j) {
  TimerConfig t;
  if (j.is_null()) return t;
  reject_unknown(j, "timer", {"poll_interval", "poll_mode", "use_wheel", "wheel_slot", "wheel_slots", "capacity"});
  t.poll_interval = get_duration(j, "poll_interval", t.poll_interval);
  const std::string mode = get_string(j, "poll_mode", "busy");
  if (mode == "busy") {
    t.poll_mode = PollMode::BusyPoll;
  } else if (mode == "yield") {
    t.poll_mode = PollMode::Yield;
  } else {
    bad("timer poll_mode must be 'busy' or 'yield'");
  }
  if (j.contains("use_wheel")) {
    if (!j.at("use_wheel").is_boolean()) bad("'use_wheel' must be a boolean");
    t.use_wheel = j.at("use_wheel").get<bool>();
  }
  t.wheel_slot = get_duration(j, "wheel_slot", t.wheel_slot);
  t.wheel_slots = get_number<std::size_t>(j, "wheel_slots", t.wheel_slots);
  t.capacity = get_number<std::size_t>(j, "capacity", t.capacity);
  return t;
}

SweepSpec parse_sweep(const json& j) {
  reject_unknown(j, "sweep", {"axis", "points"});
  SweepSpec s;
  const std::string axis = get_string(j, "axis", "quantum");
  if (!j.contains("points") || !j.at("points").is_array() || j.at("points").empty()) {
    bad("sweep needs a non-empty 'points' array");
  }
  if (axis == "quantum") {
    s.axis = SweepAxis::Quantum;
    for (const auto& p : j.at("points")) s.quanta.push_back(duration_from_json(p, "points", true));
  } else if (axis == "load") {
    s.axis = SweepAxis::Load;
    for (const auto& p : j.at("points")) {
      if (!p.is_number()) bad("load sweep points must be numbers");
      const double v = p.get<double>();
      if (!(v > 0)) bad("load sweep points must be positive");
      s.loads.push_back(v);
    }
  } else {
    bad("sweep axis must be 'quantum' or 'load'");
  }
  return s;
}

BenchSpec parse_bench(const json& j) {
  reject_unknown(j, "bench", {"period", "samples", "cells"});
  BenchSpec b;
  b.period = get_duration(j, "period", b.period);
  b.samples = get_number<std::size_t>(j, "samples", b.samples);
  if (j.contains("cells")) {
    if (!j.at("cells").is_array() || j.at("cells").empty()) bad("bench 'cells' must be a non-empty array");
    b.cells.clear();
    for (const auto& c : j.at("cells")) {
      if (!c.is_number_integer() || c.get<std::int64_t>() <= 0) bad("bench cells must be positive integers");
      b.cells.push_back(c.get<std::size_t>());
    }
  }
  if (b.period.count() <= 0 || b.samples == 0) bad("bench period and samples must be positive");
  return b;
}

}  // namespace

RunConfig parse_config(const json& j) {
  reject_unknown(j, "config",
                 {"backend", "workload", "arrivals", "load", "workers", "policy", "quantum", "controller",
                  "preemption_overhead", "horizon", "seed", "queue_capacity", "context_pool", "min_quantum", "slo",
                  "reservoir_size", "tail_input", "timeline_bin", "timer", "sweep", "bench"});
  RunConfig rc;
  ExperimentConfig& e = rc.experiment;

  const std::string backend = get_string(j, "backend", "sim");
  if (backend == "sim") {
    e.backend = Backend::Sim;
  } else if (backend == "realtime") {
    e.backend = Backend::Realtime;
  } else {
    bad("backend must be 'sim' or 'realtime'");
  }
  e.horizon = get_duration(j, "horizon", e.horizon);
  e.workers = get_number<std::size_t>(j, "workers", e.workers);
  e.seed = get_number<std::uint64_t>(j, "seed", e.seed);
  e.preemption_overhead = get_duration(j, "preemption_overhead", e.preemption_overhead);
  e.queue_capacity = get_number<std::size_t>(j, "queue_capacity", e.queue_capacity);
  e.context_pool = get_number<std::size_t>(j, "context_pool", e.context_pool);
  e.min_quantum = get_duration(j, "min_quantum", e.min_quantum);
  e.slo = get_duration(j, "slo", e.slo);
  e.reservoir_size = get_number<std::size_t>(j, "reservoir_size", e.reservoir_size);
  e.timeline_bin = get_duration(j, "timeline_bin", e.timeline_bin);
  const std::string tail = get_string(j, "tail_input", "sojourn");
  if (tail == "sojourn") {
    e.tail_input = TailInput::Sojourn;
  } else if (tail == "service") {
    e.tail_input = TailInput::Service;
  } else {
    bad("tail_input must be 'sojourn' or 'service'");
  }
  e.timer = parse_timer(j.value("timer", json()));

  if (j.contains("workload")) {
    e.workload = parse_workload(j.at("workload"), e.horizon);
    rc.has_workload = true;
  }

  PreemptFCFSDynamic dynamic;
  dynamic.hyper = parse_controller(j.value("controller", json()), e.workers, dynamic.initial);
  const Duration quantum = get_duration(j, "quantum", Duration{30'000}, true);
  e.policy = make_policy(get_string(j, "policy", "rtc"), quantum, dynamic);

  if (j.contains("arrivals") && j.contains("load")) bad("give either 'arrivals' or 'load', not both");
  if (j.contains("arrivals")) e.arrivals = parse_arrivals(j.at("arrivals"));
  if (j.contains("load")) {
    if (!rc.has_workload) bad("'load' needs a 'workload'");
    rc.load = get_number<double>(j, "load", 0.0);
    if (!(*rc.load >= 0)) bad("load must be >= 0");
    e.arrivals = poisson_at_load(e.workload, e.workers, e.horizon, *rc.load);
  }
  if (j.contains("sweep")) rc.sweep = parse_sweep(j.at("sweep"));
  if (j.contains("bench")) rc.bench = parse_bench(j.at("bench"));
  return rc;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) bad("cannot open config file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    bad("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

}  // namespace preemptible
