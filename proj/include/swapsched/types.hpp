#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace swapsched {

// All durations are integer nanoseconds so that sums are exact and
// independent of evaluation order.
using TimeNs = std::int64_t;
using Bytes = std::uint64_t;
using Flops = std::uint64_t;

constexpr Bytes kAlignGranule = 512;

inline double to_seconds(TimeNs t) { return static_cast<double>(t) * 1e-9; }

inline TimeNs from_seconds(double s) {
  return static_cast<TimeNs>(std::llround(s * 1e9));
}

// bytes / (bytes/s) at nanosecond granularity
inline TimeNs transfer_duration(Bytes bytes, double bandwidth_bytes_per_s) {
  if (bandwidth_bytes_per_s <= 0.0)
    throw std::invalid_argument("bandwidth must be positive");
  return static_cast<TimeNs>(
      std::llround(1e9 * static_cast<double>(bytes) / bandwidth_bytes_per_s));
}

// flops / (flops/s) at nanosecond granularity
inline TimeNs compute_duration(Flops flops, double flops_per_s) {
  if (flops_per_s <= 0.0)
    throw std::invalid_argument("throughput must be positive");
  return static_cast<TimeNs>(
      std::llround(1e9 * static_cast<double>(flops) / flops_per_s));
}

// Parse or schema violation in an input document.
struct SpecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem-level failure: missing file, unreadable path.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Valid input that describes a configuration the tool cannot plan for.
struct UntrainableError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace swapsched
