#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "emsim/common.hpp"

namespace emsim {

// Complex baseband recording.  Samples are stored as float32, matching the
// on-disk interchange format exactly, so save/load round-trips are
// bit-identical.
struct IQRecording {
  std::vector<std::complex<float>> samples;
  double sample_rate_hz = 0.0;
  double center_frequency_hz = 0.0;
  std::uint64_t seed = 0;

  double duration_s() const {
    return sample_rate_hz > 0.0 ? static_cast<double>(samples.size()) / sample_rate_hz : 0.0;
  }
};

inline void validate_timebase(double sample_rate_hz, double duration_s, const char* who) {
  if (!(sample_rate_hz > 0.0))
    throw InvalidArgument(std::string(who) + ": sample_rate_hz must be positive");
  if (!(duration_s > 0.0))
    throw InvalidArgument(std::string(who) + ": duration_s must be positive");
}

inline std::size_t sample_count(double sample_rate_hz, double duration_s) {
  return static_cast<std::size_t>(sample_rate_hz * duration_s + 0.5);
}

}  // namespace emsim
