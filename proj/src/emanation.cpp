#include "emsim/emanation.hpp"

#include <algorithm>
#include <cmath>

namespace emsim {

void validate_clock(const ClockSpec& spec, double sample_rate_hz) {
  if (!(sample_rate_hz > 0.0)) throw InvalidArgument("synth_clock: sample_rate_hz must be positive");
  if (!(spec.f0_hz >= 0.0)) throw InvalidArgument("synth_clock: f0_hz must be non-negative");
  if (spec.f0_hz >= sample_rate_hz / 2.0)
    throw AliasingError("synth_clock: f0_hz at or above Nyquist");
  if (spec.delta_f_hz != 0.0 && !(spec.fm_hz > 0.0))
    throw InvalidArgument("synth_clock: fm_hz must be positive when delta_f_hz is nonzero");
  if (spec.fm_hz < 0.0) throw InvalidArgument("synth_clock: fm_hz must be non-negative");
  if (spec.n_harmonics < 1) throw InvalidArgument("synth_clock: n_harmonics must be >= 1");
  if (!spec.amplitude_profile.empty() &&
      spec.amplitude_profile.size() < static_cast<std::size_t>(spec.n_harmonics) + 1)
    throw InvalidArgument("synth_clock: amplitude_profile shorter than n_harmonics+1");
}

void validate_wave(const ActivityWave& wave, double sample_rate_hz) {
  if (!(sample_rate_hz > 0.0))
    throw InvalidArgument("synth_square: sample_rate_hz must be positive");
  if (!(wave.f_sq_hz > 0.0)) throw InvalidArgument("synth_square: f_sq_hz must be positive");
  if (!(wave.a_sq > 0.0)) throw InvalidArgument("synth_square: a_sq must be positive");
  if (wave.n_terms < 1) throw InvalidArgument("synth_square: n_terms must be >= 1");
  const double top = (2.0 * wave.n_terms - 1.0) * wave.f_sq_hz;
  if (top >= sample_rate_hz / 2.0)
    throw AliasingError("synth_square: harmonic (2M-1)*f_sq at or above Nyquist");
}

IQRecording synth_clock(const ClockSpec& spec, double sample_rate_hz, double duration_s,
                        double carrier_phase, double mod_phase) {
  validate_clock(spec, sample_rate_hz);
  validate_timebase(sample_rate_hz, duration_s, "synth_clock");
  const std::size_t n = sample_count(sample_rate_hz, duration_s);
  IQRecording out;
  out.sample_rate_hz = sample_rate_hz;
  out.samples.resize(n);

  const double beta = spec.beta();
  // Carrier and modulator advance by phasor recurrence; only the inner
  // beta*sin term needs per-sample trig.
  const std::complex<double> cstep(std::cos(kTwoPi * spec.f0_hz / sample_rate_hz),
                                   std::sin(kTwoPi * spec.f0_hz / sample_rate_hz));
  std::complex<double> carrier(std::cos(carrier_phase), std::sin(carrier_phase));
  if (beta == 0.0) {
    for (std::size_t k = 0; k < n; ++k) {
      out.samples[k] = std::complex<float>(static_cast<float>(carrier.real()), 0.0f);
      carrier *= cstep;
    }
    return out;
  }
  const std::complex<double> mstep(std::cos(kTwoPi * spec.fm_hz / sample_rate_hz),
                                   std::sin(kTwoPi * spec.fm_hz / sample_rate_hz));
  std::complex<double> mod(std::cos(mod_phase), std::sin(mod_phase));
  for (std::size_t k = 0; k < n; ++k) {
    const double b = beta * mod.imag();
    double sb, cb;
    sincos_small(b, sb, cb);
    const double v = carrier.real() * cb - carrier.imag() * sb;
    out.samples[k] = std::complex<float>(static_cast<float>(v), 0.0f);
    carrier *= cstep;
    mod *= mstep;
  }
  return out;
}

IQRecording synth_square(const ActivityWave& wave, double sample_rate_hz, double duration_s,
                         double phase) {
  validate_wave(wave, sample_rate_hz);
  validate_timebase(sample_rate_hz, duration_s, "synth_square");
  const std::size_t n = sample_count(sample_rate_hz, duration_s);
  IQRecording out;
  out.sample_rate_hz = sample_rate_hz;
  out.samples.resize(n);

  const int m_count = wave.n_terms;
  std::vector<std::complex<double>> ph(m_count), step(m_count);
  for (int m = 0; m < m_count; ++m) {
    const double h = 2.0 * m + 1.0;
    ph[m] = {std::cos(h * phase), std::sin(h * phase)};
    const double w = h * kTwoPi * wave.f_sq_hz / sample_rate_hz;
    step[m] = {std::cos(w), std::sin(w)};
  }
  const double scale = 2.0 * wave.a_sq / kPi;
  for (std::size_t k = 0; k < n; ++k) {
    double v = 0.0;
    for (int m = 0; m < m_count; ++m) {
      v += ph[m].real() / (2.0 * m + 1.0);
      ph[m] *= step[m];
    }
    out.samples[k] = std::complex<float>(static_cast<float>(scale * v), 0.0f);
  }
  return out;
}

IQRecording modulate(const IQRecording& clock, const IQRecording& square) {
  if (clock.samples.size() != square.samples.size())
    throw InvalidArgument("modulate: length mismatch");
  if (clock.sample_rate_hz != square.sample_rate_hz)
    throw InvalidArgument("modulate: sample rate mismatch");
  IQRecording out;
  out.sample_rate_hz = clock.sample_rate_hz;
  out.center_frequency_hz = clock.center_frequency_hz;
  out.samples.resize(clock.samples.size());
  for (std::size_t k = 0; k < out.samples.size(); ++k)
    out.samples[k] = clock.samples[k] * square.samples[k];
  return out;
}

namespace {

double bessel_weight(int n, double beta) {
  if (beta == 0.0) return n == 0 ? 1.0 : 0.0;
  return std::fabs(std::cyl_bessel_j(static_cast<double>(n), std::fabs(beta)));
}

void coalesce_sorted(std::vector<SpectralLine>& lines) {
  std::sort(lines.begin(), lines.end(),
            [](const SpectralLine& a, const SpectralLine& b) { return a.freq_hz < b.freq_hz; });
  std::vector<SpectralLine> merged;
  for (const auto& l : lines) {
    const double tol = std::max(1e-6, 1e-12 * std::fabs(l.freq_hz));
    if (!merged.empty() && std::fabs(merged.back().freq_hz - l.freq_hz) < tol) {
      merged.back().magnitude += l.magnitude;
    } else {
      merged.push_back(l);
    }
  }
  lines = std::move(merged);
}

}  // namespace

std::vector<SpectralLine> clock_spectrum_analytic(const ClockSpec& spec) {
  if (spec.n_harmonics < 1)
    throw InvalidArgument("clock_spectrum_analytic: n_harmonics must be >= 1");
  if (spec.delta_f_hz != 0.0 && !(spec.fm_hz > 0.0))
    throw InvalidArgument("clock_spectrum_analytic: fm_hz must be positive when delta_f_hz is nonzero");
  if (!spec.amplitude_profile.empty() &&
      spec.amplitude_profile.size() < static_cast<std::size_t>(spec.n_harmonics) + 1)
    throw InvalidArgument("clock_spectrum_analytic: amplitude_profile shorter than n_harmonics+1");
  const double beta = spec.beta();
  std::vector<SpectralLine> lines;
  lines.reserve(2 * spec.n_harmonics + 1);
  for (int n = spec.n_harmonics; n >= 1; --n)
    lines.push_back({spec.f0_hz - n * spec.fm_hz, bessel_weight(n, beta) * spec.profile(n)});
  lines.push_back({spec.f0_hz, bessel_weight(0, beta) * spec.profile(0)});
  for (int n = 1; n <= spec.n_harmonics; ++n)
    lines.push_back({spec.f0_hz + n * spec.fm_hz, bessel_weight(n, beta) * spec.profile(n)});
  return lines;
}

std::vector<SpectralLine> emanation_spectrum_analytic(const ClockSpec& spec,
                                                      const ActivityWave& wave) {
  const auto clock_lines = clock_spectrum_analytic(spec);
  if (!(wave.f_sq_hz > 0.0))
    throw InvalidArgument("emanation_spectrum_analytic: f_sq_hz must be positive");
  if (wave.n_terms < 1)
    throw InvalidArgument("emanation_spectrum_analytic: n_terms must be >= 1");
  std::vector<SpectralLine> lines;
  lines.reserve(clock_lines.size() * 2 * wave.n_terms);
  for (const auto& cl : clock_lines) {
    for (int m = 1; m <= wave.n_terms; ++m) {
      const double h = 2.0 * m - 1.0;
      const double mag = cl.magnitude * wave.a_sq / (h * kPi);
      lines.push_back({cl.freq_hz + h * wave.f_sq_hz, mag});
      lines.push_back({cl.freq_hz - h * wave.f_sq_hz, mag});
    }
  }
  coalesce_sorted(lines);
  std::erase_if(lines, [](const SpectralLine& l) { return l.magnitude == 0.0; });
  return lines;
}

}  // namespace emsim
