#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "preemptible/sched.hpp"

namespace preemptible {

/// "250", "250ns", "3us", "1.5ms", "10s" -> nanoseconds. "inf" -> kInfinite
/// when allow_infinite. Throws Errc::InvalidConfig.
Duration parse_duration(std::string_view text, bool allow_infinite = false);
/// A JSON string as above, or a bare integer count of nanoseconds.
Duration duration_from_json(const nlohmann::json& j, std::string_view key, bool allow_infinite = false);

enum class SweepAxis : std::uint8_t { Quantum, Load };

struct SweepSpec {
  SweepAxis axis = SweepAxis::Quantum;
  std::vector<Duration> quanta;
  std::vector<double> loads;
};

struct BenchSpec {
  Duration period{100'000};
  std::size_t samples = 5000;
  std::vector<std::size_t> cells{1};
};

struct RunConfig {
  ExperimentConfig experiment;
  bool has_workload = false;
  std::optional<double> load;  // already folded into experiment.arrivals
  std::optional<SweepSpec> sweep;
  BenchSpec bench;
};

/// Rejects unknown keys and out-of-range values with Errc::InvalidConfig.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

ServiceDistribution parse_distribution(const nlohmann::json& j);
ArrivalProcess parse_arrivals(const nlohmann::json& j);
Policy make_policy(std::string_view name, Duration quantum, const PreemptFCFSDynamic& dynamic);

}  // namespace preemptible
