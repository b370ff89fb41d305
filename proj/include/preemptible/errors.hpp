#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace preemptible {

enum class Errc {
  SchedulingInPast,
  AlreadyInitialized,
  CapacityExceeded,
  PoolExhausted,
  InvalidState,
  AdmissionQueueFull,
  InsufficientSamples,
  NoData,
  InvalidConfig,
  InvalidArgument,
  Runtime,
};

std::string_view to_string(Errc code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace preemptible
