#pragma once

#include <vector>

#include "emsim/iq.hpp"

namespace emsim {

// Frequency-modulated clock line.  delta_f_hz / fm_hz is the modulation index
// that sets the Bessel sideband weights.  amplitude_profile, when non-empty,
// scales the analytic per-order line magnitudes; it must cover orders
// 0..n_harmonics.  An empty profile means all ones.
struct ClockSpec {
  double f0_hz = 0.0;
  double fm_hz = 0.0;
  double delta_f_hz = 0.0;
  int n_harmonics = 2;
  std::vector<double> amplitude_profile;

  double beta() const { return fm_hz != 0.0 ? delta_f_hz / fm_hz : 0.0; }
  double profile(int n) const {
    return amplitude_profile.empty() ? 1.0 : amplitude_profile[static_cast<std::size_t>(n)];
  }
};

// Truncated Fourier series of a square wave (odd harmonics only).
struct ActivityWave {
  double f_sq_hz = 0.0;
  double a_sq = 1.0;
  int n_terms = 2;
};

struct SpectralLine {
  double freq_hz = 0.0;
  double magnitude = 0.0;
};

void validate_clock(const ClockSpec& spec, double sample_rate_hz);
void validate_wave(const ActivityWave& wave, double sample_rate_hz);

// samples[k] = cos(2*pi*f0*t + beta*sin(2*pi*fm*t)), t = k/sample_rate.
// Optional initial phases (radians) shift the carrier and the modulation.
IQRecording synth_clock(const ClockSpec& spec, double sample_rate_hz, double duration_s,
                        double carrier_phase = 0.0, double mod_phase = 0.0);

// samples[k] = (2*a_sq/pi) * sum_{m=1..M} cos((2m-1)*2*pi*f_sq*t + (2m-1)*phase)/(2m-1).
IQRecording synth_square(const ActivityWave& wave, double sample_rate_hz, double duration_s,
                         double phase = 0.0);

// Pointwise product; inputs must share length and sample rate.
IQRecording modulate(const IQRecording& clock, const IQRecording& square);

// 2*n_harmonics+1 entries at f0 +/- n*fm, n = 0..n_harmonics, sorted by
// frequency.  Magnitude of order n is |J_n(beta)| * profile(n); entries whose
// Bessel weight vanishes are kept (with zero magnitude) so the count is fixed.
std::vector<SpectralLine> clock_spectrum_analytic(const ClockSpec& spec);

// Mixing-product lines at (f0 +/- n*fm) +/- (2m-1)*f_sq with one-sided cosine
// amplitudes |J_n(beta)|*profile(n)*a_sq/((2m-1)*pi).  Lines that coincide in
// frequency are merged by summing magnitudes; exact-zero lines are dropped.
// Sorted by frequency.
std::vector<SpectralLine> emanation_spectrum_analytic(const ClockSpec& spec,
                                                      const ActivityWave& wave);

}  // namespace emsim
