#pragma once

#include <filesystem>
#include <optional>

#include "preemptible/config.hpp"

namespace preemptible {

struct CommandOptions {
  std::filesystem::path out_dir = ".";
  bool summary_only = false;
  bool controller_trace = false;
};

enum class LogLevel : std::uint8_t { Quiet, Info, Debug };

/// From PREEMPTIBLE_LOG: "quiet", "info" (default) or "debug".
LogLevel log_level_from_env();

// Each command writes its CSVs under opts.out_dir. Returns the files written.

std::vector<std::filesystem::path> cmd_simulate(const RunConfig& cfg, const CommandOptions& opts);
std::vector<std::filesystem::path> cmd_sweep(const RunConfig& cfg, const CommandOptions& opts);
std::vector<std::filesystem::path> cmd_colocate(const RunConfig& cfg, const CommandOptions& opts);
std::vector<std::filesystem::path> cmd_bench_timer(const RunConfig& cfg, const CommandOptions& opts);

/// Per-class colocation row: class,policy,p50_ns,p99_ns,mean_ns,count.
inline constexpr std::string_view kColocateHeader = "class,policy,p50_ns,p99_ns,mean_ns,count";
inline constexpr std::string_view kBenchHeader = "cells,period_ns,mean_err_ns,rel_err,p99_err_ns";

}  // namespace preemptible
