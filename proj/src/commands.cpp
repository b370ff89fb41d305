#include "preemptible/commands.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>

namespace preemptible {

namespace fs = std::filesystem;

LogLevel log_level_from_env() {
  const char* v = std::getenv("PREEMPTIBLE_LOG");
  if (!v) return LogLevel::Info;
  const std::string_view s(v);
  if (s == "quiet" || s == "0" || s == "off") return LogLevel::Quiet;
  if (s == "debug" || s == "2") return LogLevel::Debug;
  return LogLevel::Info;
}

namespace {

void info(const std::string& line) {
  if (log_level_from_env() != LogLevel::Quiet) std::clog << "preemptible: " << line << '\n';
}

void debug(const std::string& line) {
  if (log_level_from_env() == LogLevel::Debug) std::clog << "preemptible: " << line << '\n';
}

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Runtime, "cannot write '" + path.string() + "'");
  return out;
}

void require_workload(const RunConfig& cfg, std::string_view cmd) {
  if (!cfg.has_workload) throw Error(Errc::InvalidConfig, std::string(cmd) + " needs a 'workload'");
  if (cfg.experiment.backend != Backend::Sim && cmd != "simulate") {
    throw Error(Errc::InvalidConfig, std::string(cmd) + " requires the sim backend");
  }
}

std::string describe_run(const ExperimentConfig& e, const ExperimentResult& r) {
  std::string s = policy_name(e.policy) + " " + e.workload.name + " load=" + format_double(r.load_frac, 3) +
                  " completed=" + std::to_string(r.completions) + "/" + std::to_string(r.arrivals);
  if (r.aggregate.count() > 0) {
    s += " p50=" + std::to_string(r.aggregate.all().quantile(0.5).count()) +
         "ns p99=" + std::to_string(r.aggregate.all().quantile(0.99).count()) + "ns";
  }
  return s;
}

void write_trace(const fs::path& path, const ExperimentResult& r) {
  auto out = open_out(path);
  write_controller_trace_header(out);
  for (const auto& row : r.trace) write_controller_trace_row(out, row);
}

void write_timeline(const fs::path& path, const ExperimentResult& r) {
  auto out = open_out(path);
  write_timeline_header(out);
  for (const auto& row : r.timeline) write_timeline_row(out, row);
}

}  // namespace

std::vector<fs::path> cmd_simulate(const RunConfig& cfg, const CommandOptions& opts) {
  require_workload(cfg, "simulate");
  const ExperimentConfig& e = cfg.experiment;
  std::vector<fs::path> written;

  std::ofstream records;
  RecordSink sink;
  if (!opts.summary_only) {
    written.push_back(opts.out_dir / "records.csv");
    records = open_out(written.back());
    write_record_header(records);
    sink = [&records](const RunRecord& r) { write_record_row(records, r); };
  }
  const ExperimentResult result = run_experiment(e, sink);
  if (records.is_open()) {
    records.close();
    if (!records) throw Error(Errc::Runtime, "failed writing records.csv");
  }

  written.push_back(opts.out_dir / "summary.csv");
  {
    auto out = open_out(written.back());
    write_summary_header(out);
    write_summary_row(out, summarize(e, result));
  }
  if (opts.controller_trace) {
    written.push_back(opts.out_dir / "controller_trace.csv");
    write_trace(written.back(), result);
  }
  if (!result.timeline.empty()) {
    written.push_back(opts.out_dir / "timeline.csv");
    write_timeline(written.back(), result);
  }
  info(describe_run(e, result));
  return written;
}

std::vector<fs::path> cmd_sweep(const RunConfig& cfg, const CommandOptions& opts) {
  require_workload(cfg, "sweep");
  if (!cfg.sweep) throw Error(Errc::InvalidConfig, "sweep needs a 'sweep' section");
  const SweepSpec& sw = *cfg.sweep;

  std::vector<ExperimentConfig> points;
  if (sw.axis == SweepAxis::Quantum) {
    for (Duration q : sw.quanta) {
      ExperimentConfig c = cfg.experiment;
      if (std::holds_alternative<RoundRobin>(c.policy)) {
        c.policy = RoundRobin{q};
      } else {
        c.policy = PreemptFCFS{q};
      }
      points.push_back(std::move(c));
    }
  } else {
    for (double load : sw.loads) {
      ExperimentConfig c = cfg.experiment;
      c.arrivals = poisson_at_load(c.workload, c.workers, c.horizon, load);
      points.push_back(std::move(c));
    }
  }
  for (const auto& c : points) validate(c);

  const fs::path path = opts.out_dir / "sweep.csv";
  auto out = open_out(path);
  write_summary_header(out);
  for (const auto& c : points) {
    const ExperimentResult r = run_experiment(c);
    write_summary_row(out, summarize(c, r));
    info(describe_run(c, r));
  }
  return {path};
}

std::vector<fs::path> cmd_colocate(const RunConfig& cfg, const CommandOptions& opts) {
  require_workload(cfg, "colocate");
  ExperimentConfig e = cfg.experiment;
  if (e.timeline_bin.count() == 0) e.timeline_bin = std::chrono::milliseconds(100);
  const ExperimentResult r = run_experiment(e);

  std::vector<fs::path> written{opts.out_dir / "colocate.csv"};
  {
    auto out = open_out(written.back());
    out << "# preemptible colocate v1 (nearest-rank quantiles, 1% log buckets)\n" << kColocateHeader << '\n';
    auto row = [&](std::string_view name, const LatencyHistogram& h) {
      if (h.empty()) return;
      out << name << ',' << policy_name(e.policy) << ',' << h.quantile(0.5).count() << ','
          << h.quantile(0.99).count() << ',' << format_double(h.mean_ns(), 1) << ',' << h.count() << '\n';
    };
    row("LC", r.aggregate.of(RequestClass::LC));
    row("BE", r.aggregate.of(RequestClass::BE));
    row("all", r.aggregate.all());
  }
  written.push_back(opts.out_dir / "summary.csv");
  {
    auto out = open_out(written.back());
    write_summary_header(out);
    write_summary_row(out, summarize(e, r));
  }
  written.push_back(opts.out_dir / "timeline.csv");
  write_timeline(written.back(), r);
  if (opts.controller_trace) {
    written.push_back(opts.out_dir / "controller_trace.csv");
    write_trace(written.back(), r);
  }
  info(describe_run(e, r));
  return written;
}

std::vector<fs::path> cmd_bench_timer(const RunConfig& cfg, const CommandOptions& opts) {
  if (cfg.experiment.backend != Backend::Realtime) {
    throw Error(Errc::InvalidConfig, "bench-timer requires realtime backend");
  }
  const BenchSpec& b = cfg.bench;
  const fs::path path = opts.out_dir / "bench_timer.csv";
  auto out = open_out(path);
  out << "# preemptible bench-timer v1 (errors are |gap - period|)\n" << kBenchHeader << '\n';
  for (std::size_t cells : b.cells) {
    TimerConfig tc = cfg.experiment.timer;
    tc.capacity = std::max(tc.capacity, cells);
    PrecisionStats s;
    {
      RealTimerService svc(tc);
      s = scalability_probe(svc, cells, b.period, b.samples);
    }
    out << cells << ',' << b.period.count() << ',' << format_double(s.mean_abs_err_ns, 1) << ','
        << format_double(s.rel_err, 6) << ',' << format_double(s.p99_abs_err_ns, 1) << '\n';
    debug("bench-timer cells=" + std::to_string(cells) + " rel_err=" + format_double(s.rel_err, 4));
  }
  info("bench-timer wrote " + path.string());
  return {path};
}

}  // namespace preemptible
