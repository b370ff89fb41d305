#include "preemptible/controller.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace preemptible {

void validate(const ControllerHyperparams& h) {
  if (!(0.0 <= h.l_low && h.l_low < h.l_high && h.l_high <= 1.0)) {
    throw Error(Errc::InvalidConfig, "controller needs 0 <= l_low < l_high <= 1");
  }
  if (!(h.t_min.count() > 0 && h.t_min <= h.t_max)) {
    throw Error(Errc::InvalidConfig, "controller needs 0 < t_min <= t_max");
  }
  if (h.k1.count() <= 0 || h.k2.count() <= 0 || h.k3.count() <= 0) {
    throw Error(Errc::InvalidConfig, "controller steps k1, k2, k3 must be positive");
  }
  if (h.period.count() <= 0) throw Error(Errc::InvalidConfig, "controller period must be positive");
  if (!(h.k_fraction > 0.0 && h.k_fraction <= 0.25)) {
    throw Error(Errc::InvalidConfig, "controller k_fraction must be in (0, 0.25]");
  }
}

double estimate_tail_index(std::span<const double> samples, double k_fraction) {
  const std::size_t n = samples.size();
  if (n < kMinTailSamples) {
    throw Error(Errc::InsufficientSamples,
                "tail fit needs at least " + std::to_string(kMinTailSamples) + " samples, got " + std::to_string(n));
  }
  if (!(k_fraction > 0.0 && k_fraction <= 0.25)) throw Error(Errc::InvalidArgument, "k_fraction must be in (0, 0.25]");
  const auto k = static_cast<std::size_t>(std::ceil(k_fraction * static_cast<double>(n)));

  std::vector<double> top(k + 1);
  std::partial_sort_copy(samples.begin(), samples.end(), top.begin(), top.end(), std::greater<>{});
  const double threshold = top[k];
  if (!(threshold > 0.0)) throw Error(Errc::InvalidArgument, "tail fit needs positive samples");

  double denom = 0.0;
  for (std::size_t i = 0; i < k; ++i) denom += std::log(top[i] / threshold);
  if (denom <= 0.0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(k) / denom;
}

bool is_heavy_tailed(double alpha) noexcept { return alpha >= 0.0 && alpha < 2.0; }

Duration update_quantum(Duration tq, const ControllerHyperparams& h, double load, std::size_t qlen,
                        std::optional<double> alpha) {
  if (load > h.l_high) tq = std::max(tq - h.k1, h.t_min);
  if (qlen > h.q_threshold || (alpha && is_heavy_tailed(*alpha))) tq = std::max(tq - h.k2, h.t_min);
  if (load < h.l_low) tq = std::min(tq + h.k3, h.t_max);
  return tq;
}

QuantumController::QuantumController(ControllerHyperparams h, Duration initial)
    : h_(h), published_(0) {
  validate(h_);
  published_.store(std::clamp(initial, h_.t_min, h_.t_max).count(), std::memory_order_release);
}

Duration QuantumController::update(const WindowStats& stats) {
  if (stats.latency_samples.size() >= kMinTailSamples) {
    last_alpha_ = estimate_tail_index(stats.latency_samples, h_.k_fraction);
  }
  const Duration next = update_quantum(quantum(), h_, stats.load, stats.qlen, last_alpha_);
  published_.store(next.count(), std::memory_order_release);
  return next;
}

void write_controller_trace_header(std::ostream& out) {
  out << "# preemptible controller-trace v1\n" << kControllerTraceHeader << '\n';
}

void write_controller_trace_row(std::ostream& out, const ControllerTraceRow& row) {
  out << ns(row.tick) << ',' << format_double(row.load, 4) << ',' << row.qlen << ','
      << (row.median ? std::to_string(row.median->count()) : "") << ','
      << (row.p99 ? std::to_string(row.p99->count()) : "") << ','
      << (row.alpha ? (std::isinf(*row.alpha) ? std::string("inf") : format_double(*row.alpha, 4)) : "") << ','
      << row.quantum.count() << '\n';
}

}  // namespace preemptible
