#include "emsim/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace emsim {

namespace {

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

std::vector<double> shifted_axis(double center_hz, double sample_rate_hz, std::size_t n) {
  std::vector<double> freqs(n);
  const double bin = sample_rate_hz / static_cast<double>(n);
  const std::size_t half = n / 2;
  for (std::size_t i = 0; i < n; ++i)
    freqs[i] = center_hz + (static_cast<double>(i) - static_cast<double>(half)) * bin;
  return freqs;
}

void require_same_axis(const SpectrumFrame& a, const SpectrumFrame& b, const char* who) {
  if (a.fft_size != b.fft_size || a.freqs.size() != b.freqs.size() ||
      a.power_db.size() != b.power_db.size())
    throw InvalidArgument(std::string(who) + ": frame shape mismatch");
  if (a.band_center_hz != b.band_center_hz || a.freqs.front() != b.freqs.front() ||
      a.freqs.back() != b.freqs.back())
    throw InvalidArgument(std::string(who) + ": frequency axis mismatch");
}

std::size_t bin_of_freq(const SpectrumFrame& frame, double freq_hz, const char* who) {
  if (frame.freqs.empty() || freq_hz < frame.freqs.front() || freq_hz > frame.freqs.back())
    throw InvalidArgument(std::string(who) + ": frequency outside axis");
  const double bin = frame.freqs[1] - frame.freqs[0];
  const double idx = (freq_hz - frame.freqs.front()) / bin;
  const std::size_t i = static_cast<std::size_t>(idx + 0.5);
  return std::min(i, frame.freqs.size() - 1);
}

}  // namespace

void validate_pipeline(const PipelineConfig& cfg) {
  if (!is_power_of_two(cfg.fft_size))
    throw InvalidArgument("pipeline: fft_size must be a power of two");
  if (cfg.movmedian_len % 2 == 0)
    throw InvalidArgument("pipeline: movmedian_len must be odd");
  if (cfg.avg_frames < 1) throw InvalidArgument("pipeline: avg_frames must be >= 1");
  if (cfg.stft_window_len == 0 || cfg.stft_hop == 0)
    throw InvalidArgument("pipeline: stft window and hop must be positive");
  if (cfg.stft_hop > cfg.stft_window_len)
    throw InvalidArgument("pipeline: stft_hop must be <= stft_window_len");
  if (cfg.chunk_samples < cfg.fft_size * cfg.avg_frames)
    throw InvalidArgument("pipeline: chunk_samples must cover avg_frames FFT frames");
  if (cfg.chunk_samples < cfg.stft_window_len)
    throw InvalidArgument("pipeline: chunk_samples must cover one stft window");
}

std::vector<SpectrumFrame> psd_frames(const IQRecording& iq, std::size_t fft_size, Window window) {
  if (!is_power_of_two(fft_size)) throw InvalidArgument("psd_frames: fft_size must be a power of two");
  if (iq.samples.size() < fft_size)
    throw InvalidArgument("psd_frames: recording shorter than one FFT frame");
  const std::size_t n_frames = iq.samples.size() / fft_size;
  const std::vector<double> win = make_window(window, fft_size);
  const std::vector<double> axis = shifted_axis(iq.center_frequency_hz, iq.sample_rate_hz, fft_size);

  std::vector<SpectrumFrame> out(n_frames);
  std::vector<std::complex<double>> buf(fft_size), spec(fft_size);
  const std::size_t half = fft_size / 2;
  for (std::size_t f = 0; f < n_frames; ++f) {
    const std::complex<float>* src = iq.samples.data() + f * fft_size;
    for (std::size_t i = 0; i < fft_size; ++i)
      buf[i] = std::complex<double>(src[i].real() * win[i], src[i].imag() * win[i]);
    fft_forward(fft_size, buf.data(), spec.data());
    SpectrumFrame& fr = out[f];
    fr.freqs = axis;
    fr.band_center_hz = iq.center_frequency_hz;
    fr.fft_size = fft_size;
    fr.power_db.resize(fft_size);
    // fftshift: negative frequencies first.
    for (std::size_t i = 0; i < fft_size; ++i) {
      const std::size_t j = (i + half) % fft_size;
      fr.power_db[i] = power_to_db(std::norm(spec[j]) / static_cast<double>(fft_size));
    }
  }
  return out;
}

SpectrumFrame noncoherent_average(const std::vector<SpectrumFrame>& frames, std::size_t k) {
  if (k < 1) throw InvalidArgument("noncoherent_average: K must be >= 1");
  if (frames.size() < k)
    throw InvalidArgument("noncoherent_average: fewer frames than K");
  for (std::size_t f = 1; f < k; ++f) require_same_axis(frames[0], frames[f], "noncoherent_average");
  SpectrumFrame out = frames[0];
  std::vector<double> acc(out.power_db.size(), 0.0);
  for (std::size_t f = 0; f < k; ++f)
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += db_to_power(frames[f].power_db[i]);
  const double inv = 1.0 / static_cast<double>(k);
  for (std::size_t i = 0; i < acc.size(); ++i) out.power_db[i] = power_to_db(acc[i] * inv);
  return out;
}

MovmedianResult movmedian_smooth(const SpectrumFrame& frame, std::size_t window_len) {
  if (window_len % 2 == 0) throw InvalidArgument("movmedian_smooth: window_len must be odd");
  if (window_len > frame.power_db.size())
    throw InvalidArgument("movmedian_smooth: window_len exceeds bin count");
  const std::size_t n = frame.power_db.size();
  const std::size_t h = window_len / 2;

  MovmedianResult res;
  res.floor = frame;
  res.detrended = frame;

  // Sorted sliding window; insert/erase by binary search.
  std::vector<double> sorted;
  sorted.reserve(window_len);
  auto add = [&sorted](double v) {
    sorted.insert(std::lower_bound(sorted.begin(), sorted.end(), v), v);
  };
  auto remove = [&sorted](double v) {
    sorted.erase(std::lower_bound(sorted.begin(), sorted.end(), v));
  };

  std::size_t lo = 0, hi = 0;  // current window [lo, hi)
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t want_lo = i > h ? i - h : 0;
    const std::size_t want_hi = std::min(n, i + h + 1);
    while (hi < want_hi) add(frame.power_db[hi++]);
    while (lo < want_lo) remove(frame.power_db[lo++]);
    res.floor.power_db[i] = sorted[(sorted.size() - 1) / 2];
    res.detrended.power_db[i] = frame.power_db[i] - res.floor.power_db[i];
  }
  return res;
}

SpectrumFrame spectrum_subtract(const SpectrumFrame& active, const SpectrumFrame& idle) {
  require_same_axis(active, idle, "spectrum_subtract");
  SpectrumFrame out = active;
  for (std::size_t i = 0; i < out.power_db.size(); ++i)
    out.power_db[i] = std::max(active.power_db[i] - idle.power_db[i], kDbFloor);
  return out;
}

SpectrumFrame process_band(const IQRecording& active_iq, const IQRecording& idle_iq,
                           const PipelineConfig& cfg) {
  validate_pipeline(cfg);
  const auto active_frames = psd_frames(active_iq, cfg.fft_size);
  const auto idle_frames = psd_frames(idle_iq, cfg.fft_size);
  if (active_frames.size() < cfg.avg_frames || idle_frames.size() < cfg.avg_frames)
    throw InvalidArgument("process_band: fewer frames than avg_frames");
  const SpectrumFrame a = noncoherent_average(active_frames, cfg.avg_frames);
  const SpectrumFrame i = noncoherent_average(idle_frames, cfg.avg_frames);
  const SpectrumFrame sub = spectrum_subtract(a, i);
  return movmedian_smooth(sub, cfg.movmedian_len).detrended;
}

std::vector<Spike> detect_spikes(const SpectrumFrame& frame, double threshold_db) {
  std::vector<Spike> out;
  const auto& p = frame.power_db;
  for (std::size_t i = 1; i + 1 < p.size(); ++i) {
    if (p[i] > threshold_db && p[i] > p[i - 1] && p[i] > p[i + 1])
      out.push_back({frame.freqs[i], p[i]});
  }
  return out;
}

UsnrReport usnr(const SpectrumFrame& frame, double spike_freq_hz, std::size_t floor_window) {
  const std::size_t center = bin_of_freq(frame, spike_freq_hz, "usnr");
  const auto& p = frame.power_db;
  const std::size_t n = p.size();

  std::size_t peak_bin = center;
  double peak = p[center];
  const std::size_t lo = center > 0 ? center - 1 : 0;
  const std::size_t hi = std::min(n - 1, center + 1);
  for (std::size_t i = lo; i <= hi; ++i) {
    if (p[i] > peak) {
      peak = p[i];
      peak_bin = i;
    }
  }

  std::vector<double> floor_bins;
  const std::size_t wlo = peak_bin > floor_window ? peak_bin - floor_window : 0;
  const std::size_t whi = std::min(n - 1, peak_bin + floor_window);
  for (std::size_t i = wlo; i <= whi; ++i) {
    const std::size_t d = i > peak_bin ? i - peak_bin : peak_bin - i;
    if (d > 3) floor_bins.push_back(p[i]);
  }
  if (floor_bins.empty()) throw InvalidArgument("usnr: no floor bins around spike");
  std::nth_element(floor_bins.begin(), floor_bins.begin() + (floor_bins.size() - 1) / 2,
                   floor_bins.end());
  const double floor_db = floor_bins[(floor_bins.size() - 1) / 2];

  UsnrReport rep;
  rep.spike_freq_hz = spike_freq_hz;
  rep.peak_db = peak;
  rep.floor_db = floor_db;
  rep.usnr_db = peak - floor_db;
  return rep;
}

StateDecision detect_state(const std::vector<SpectrumFrame>& frames,
                           const SpectrumFrame& reference_idle, double threshold_db) {
  if (frames.empty()) throw InvalidArgument("detect_state: no frames");
  const SpectrumFrame avg = noncoherent_average(frames, frames.size());
  const SpectrumFrame residual = spectrum_subtract(avg, reference_idle);
  const auto spikes = detect_spikes(residual, threshold_db);
  return {!spikes.empty(), static_cast<int>(spikes.size())};
}

IdleReferenceTracker::IdleReferenceTracker(double threshold_db, std::size_t)
    : threshold_db_(threshold_db) {}

StateDecision IdleReferenceTracker::observe(const SpectrumFrame& averaged) {
  if (!has_ref_) {
    ref_ = averaged;
    has_ref_ = true;
    return {false, 0};
  }
  const StateDecision d = detect_state({averaged}, ref_, threshold_db_);
  if (!d.active) ref_ = averaged;
  return d;
}

const SpectrumFrame& IdleReferenceTracker::reference() const {
  if (!has_ref_) throw InvalidArgument("IdleReferenceTracker: no reference yet");
  return ref_;
}

Spectrogram stft_spectrogram(const IQRecording& iq, const PipelineConfig& cfg) {
  validate_pipeline(cfg);
  const std::size_t w = cfg.stft_window_len;
  const std::size_t hop = cfg.stft_hop;
  if (iq.samples.size() < w)
    throw InvalidArgument("stft_spectrogram: recording shorter than stft_window_len");
  const std::size_t n_frames = (iq.samples.size() - w) / hop + 1;
  const std::vector<double> win = make_window(Window::Hamming, w);

  Spectrogram sg;
  sg.window = window_name(Window::Hamming);
  sg.window_len = w;
  sg.hop = hop;
  sg.freqs = shifted_axis(iq.center_frequency_hz, iq.sample_rate_hz, w);
  sg.times.resize(n_frames);
  sg.power_db.resize(n_frames * w);

  std::vector<std::complex<double>> buf(w), spec(w);
  const std::size_t half = w / 2;
  for (std::size_t f = 0; f < n_frames; ++f) {
    const std::complex<float>* src = iq.samples.data() + f * hop;
    for (std::size_t i = 0; i < w; ++i)
      buf[i] = std::complex<double>(src[i].real() * win[i], src[i].imag() * win[i]);
    fft_forward(w, buf.data(), spec.data());
    sg.times[f] = (static_cast<double>(f * hop) + static_cast<double>(w) / 2.0) / iq.sample_rate_hz;
    for (std::size_t i = 0; i < w; ++i) {
      const std::size_t j = (i + half) % w;
      sg.power_db[f * w + i] = power_to_db(std::norm(spec[j]) / static_cast<double>(w));
    }
  }
  return sg;
}

std::vector<double> concat_bands(const std::vector<SpectrumFrame>& frames) {
  if (frames.empty()) throw InvalidArgument("concat_bands: no frames");
  std::vector<const SpectrumFrame*> order;
  order.reserve(frames.size());
  for (const auto& f : frames) order.push_back(&f);
  std::sort(order.begin(), order.end(), [](const SpectrumFrame* a, const SpectrumFrame* b) {
    return a->band_center_hz < b->band_center_hz;
  });
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i]->fft_size != order[0]->fft_size)
      throw InvalidArgument("concat_bands: fft_size mismatch across bands");
    if (i > 0 && order[i]->freqs.front() <= order[i - 1]->freqs.back())
      throw InvalidArgument("concat_bands: overlapping bands");
  }
  std::vector<double> out;
  out.reserve(order.size() * order[0]->power_db.size());
  for (const auto* f : order) out.insert(out.end(), f->power_db.begin(), f->power_db.end());
  return out;
}

std::string frame_to_csv(const SpectrumFrame& frame) {
  std::ostringstream os;
  os << "freq_hz,power_db\n";
  os.precision(12);
  for (std::size_t i = 0; i < frame.freqs.size(); ++i)
    os << frame.freqs[i] << "," << frame.power_db[i] << "\n";
  return os.str();
}

std::string spectrogram_to_csv(const Spectrogram& sg) {
  std::ostringstream os;
  os.precision(12);
  os << "time_s";
  for (double f : sg.freqs) os << "," << f;
  os << "\n";
  for (std::size_t t = 0; t < sg.times.size(); ++t) {
    os << sg.times[t];
    for (std::size_t i = 0; i < sg.freqs.size(); ++i) os << "," << sg.at(t, i);
    os << "\n";
  }
  return os.str();
}

}  // namespace emsim
