#pragma once

#include <vector>

#include "emsim/fft.hpp"
#include "emsim/iq.hpp"

namespace emsim {

struct SpectrumFrame {
  std::vector<double> freqs;
  std::vector<double> power_db;
  double band_center_hz = 0.0;
  std::size_t fft_size = 0;
};

struct Spectrogram {
  std::vector<double> times;
  std::vector<double> freqs;
  // Row-major [times.size()][freqs.size()].
  std::vector<double> power_db;
  std::string window;
  std::size_t window_len = 0;
  std::size_t hop = 0;

  double at(std::size_t t, std::size_t f) const { return power_db[t * freqs.size() + f]; }
};

struct PipelineConfig {
  std::size_t fft_size = 1024;
  std::size_t avg_frames = 16;
  std::size_t movmedian_len = 101;
  double spike_threshold_db = 10.0;
  std::size_t stft_window_len = 512;
  std::size_t stft_hop = 512;
  // Captures are cut into chunks of this many samples before processing; the
  // dataset builder emits one example per chunk.
  std::size_t chunk_samples = 50000;
};

void validate_pipeline(const PipelineConfig& cfg);

struct UsnrReport {
  double spike_freq_hz = 0.0;
  double peak_db = 0.0;
  double floor_db = 0.0;
  double usnr_db = 0.0;
};

struct Spike {
  double freq_hz = 0.0;
  double power_db = 0.0;
};

struct StateDecision {
  bool active = false;
  int spike_count = 0;
};

// Non-overlapping windowed periodograms:
// power_db = 10*log10(|FFT(frame * window)|^2 / fft_size), frequency axis
// fftshifted around the recording's center frequency.
std::vector<SpectrumFrame> psd_frames(const IQRecording& iq, std::size_t fft_size,
                                      Window window = Window::Hann);

// Linear-power mean of the first k frames, re-expressed in dB.
SpectrumFrame noncoherent_average(const std::vector<SpectrumFrame>& frames, std::size_t k);

// Centered moving median with shrinking windows at the edges (lower median
// when a shrunk window has even size).  detrended = power_db - floor.
struct MovmedianResult {
  SpectrumFrame floor;
  SpectrumFrame detrended;
};
MovmedianResult movmedian_smooth(const SpectrumFrame& frame, std::size_t window_len);

// Per-bin dB difference active - idle, clamped at -300 dB.
SpectrumFrame spectrum_subtract(const SpectrumFrame& active, const SpectrumFrame& idle);

// average(K) both recordings -> subtract -> movmedian; returns the detrended
// residual.
SpectrumFrame process_band(const IQRecording& active_iq, const IQRecording& idle_iq,
                           const PipelineConfig& cfg);

// Local maxima above threshold_db on a detrended (zero-floored) frame.
std::vector<Spike> detect_spikes(const SpectrumFrame& frame, double threshold_db);

// peak = max power within +/-1 bin of spike_freq; floor = median power over
// the surrounding +/-floor_window bins excluding +/-3 bins around the peak.
UsnrReport usnr(const SpectrumFrame& frame, double spike_freq_hz, std::size_t floor_window = 101);

// Averages the frames, subtracts the idle reference, detects spikes; Active
// iff at least one residual spike clears threshold_db.
StateDecision detect_state(const std::vector<SpectrumFrame>& frames,
                           const SpectrumFrame& reference_idle, double threshold_db);

// Streaming helper for the sliding-window mode: keeps the latest
// idle-classified average as the reference.
class IdleReferenceTracker {
 public:
  IdleReferenceTracker(double threshold_db, std::size_t history = 1);
  // Classifies one averaged frame; idle-classified frames refresh the
  // reference.  Until a reference exists, frames are treated as idle and
  // absorbed.
  StateDecision observe(const SpectrumFrame& averaged);
  bool has_reference() const { return has_ref_; }
  const SpectrumFrame& reference() const;

 private:
  double threshold_db_;
  bool has_ref_ = false;
  SpectrumFrame ref_;
};

// Hamming-windowed overlapping frames at stft_hop.
Spectrogram stft_spectrogram(const IQRecording& iq, const PipelineConfig& cfg);

// Concatenated power_db across bands, canonically reordered by band_center.
std::vector<double> concat_bands(const std::vector<SpectrumFrame>& frames);

std::string frame_to_csv(const SpectrumFrame& frame);
std::string spectrogram_to_csv(const Spectrogram& sg);

}  // namespace emsim
