#include <CLI11.hpp>

#include <iostream>

#include "preemptible/commands.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

}  // namespace

int main(int argc, char** argv) {
  using namespace preemptible;

  CLI::App app{"User-level preemptive scheduling runtime: simulation and real-time experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  bool summary_only = false;
  bool controller_trace = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON experiment config")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
  };

  auto* simulate = app.add_subcommand("simulate", "Run one experiment; write records.csv and summary.csv");
  add_common(simulate);
  simulate->add_flag("--summary-only", summary_only, "Skip the per-request records");
  simulate->add_flag("--controller-trace", controller_trace, "Also write controller_trace.csv");

  auto* sweep = app.add_subcommand("sweep", "Run the config's sweep axis; write sweep.csv");
  add_common(sweep);

  auto* colocate = app.add_subcommand("colocate", "LC/BE co-location run; write colocate.csv and timeline.csv");
  add_common(colocate);
  colocate->add_flag("--controller-trace", controller_trace, "Also write controller_trace.csv");

  auto* bench = app.add_subcommand("bench-timer", "Measure real timer firing precision; write bench_timer.csv");
  add_common(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    RunConfig cfg = load_config(config_path);
    if (seed) cfg.experiment.seed = *seed;
    const CommandOptions opts{out_dir, summary_only, controller_trace};
    if (simulate->parsed()) {
      cmd_simulate(cfg, opts);
    } else if (sweep->parsed()) {
      cmd_sweep(cfg, opts);
    } else if (colocate->parsed()) {
      cmd_colocate(cfg, opts);
    } else {
      cmd_bench_timer(cfg, opts);
    }
  } catch (const Error& e) {
    std::cerr << "preemptible: " << e.what() << '\n';
    const bool config = e.code() == Errc::InvalidConfig || e.code() == Errc::InvalidArgument;
    return config ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "preemptible: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
