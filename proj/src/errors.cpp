#include "preemptible/errors.hpp"

namespace preemptible {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::SchedulingInPast: return "SchedulingInPast";
    case Errc::AlreadyInitialized: return "AlreadyInitialized";
    case Errc::CapacityExceeded: return "CapacityExceeded";
    case Errc::PoolExhausted: return "PoolExhausted";
    case Errc::InvalidState: return "InvalidState";
    case Errc::AdmissionQueueFull: return "AdmissionQueueFull";
    case Errc::InsufficientSamples: return "InsufficientSamples";
    case Errc::NoData: return "NoData";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::Runtime: return "Runtime";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace preemptible
