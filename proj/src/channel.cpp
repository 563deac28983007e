#include "emsim/channel.hpp"

#include <cmath>
#include <limits>

namespace emsim {

namespace {

// Side-lobe amplitude floor of the orientation pattern.
constexpr double kOrientFloor = 0.25;

double normalize_deg(double deg) {
  double d = std::fmod(deg, 360.0);
  if (d < 0.0) d += 360.0;
  return d;
}

double orient_amplitude(double theta_deg, double head_blockage_db) {
  const double th = normalize_deg(theta_deg) * kPi / 180.0;
  const double lobe = std::sin(th) * std::sin(th);
  double amp = kOrientFloor + (1.0 - kOrientFloor) * lobe;
  if (normalize_deg(theta_deg) > 180.0) amp *= db_to_amplitude(-head_blockage_db);
  return amp;
}

}  // namespace

void validate_channel(const ChannelSpec& chan) {
  if (!(chan.distance_m > 0.0)) throw InvalidArgument("channel: distance_m must be positive");
  if (!(chan.path_loss_exponent >= 1.5 && chan.path_loss_exponent <= 4.0))
    throw InvalidArgument("channel: path_loss_exponent outside [1.5, 4]");
  if (!std::isfinite(chan.antenna_gain_dbi))
    throw InvalidArgument("channel: antenna_gain_dbi must be finite");
  if (!(chan.head_blockage_db >= 0.0))
    throw InvalidArgument("channel: head_blockage_db must be >= 0");
  if (!std::isfinite(chan.orientation_deg))
    throw InvalidArgument("channel: orientation_deg must be finite");
}

double channel_gain(const ChannelSpec& chan) {
  validate_channel(chan);
  const double ant = db_to_amplitude(chan.antenna_gain_dbi);
  const double path = std::pow(chan.distance_m, -chan.path_loss_exponent / 2.0);
  return ant * path * orient_amplitude(chan.orientation_deg, chan.head_blockage_db);
}

void validate_scene(const SceneConfig& scene) {
  validate_timebase(scene.sample_rate_hz, scene.duration_s, "scene");
  validate_channel(scene.channel);
  if (!(scene.interference.drift_rate_per_s >= -0.01 && scene.interference.drift_rate_per_s <= 0.01))
    throw InvalidArgument("scene: |drift_rate_per_s| must be <= 0.01");
  for (const auto& c : scene.interference.carriers) {
    if (c.bandwidth_hz < 0.0) throw InvalidArgument("scene: carrier bandwidth_hz must be >= 0");
    if (std::fabs(c.offset_hz) > scene.sample_rate_hz / 2.0)
      throw InvalidArgument("scene: carrier offset beyond +/- sample_rate/2");
  }
  if (!std::isfinite(scene.noise.floor_tilt_db_per_band))
    throw InvalidArgument("scene: floor_tilt_db_per_band must be finite");
  if (sample_count(scene.sample_rate_hz, scene.duration_s) < 64)
    throw InvalidArgument("scene: capture shorter than one analysis frame");
  if (scene.band_index < 0) throw InvalidArgument("scene: band_index must be >= 0");
}

IQRecording gen_interference(const InterferenceSpec& spec, double sample_rate_hz,
                             double duration_s, std::uint64_t seed) {
  validate_timebase(sample_rate_hz, duration_s, "gen_interference");
  const std::size_t n = sample_count(sample_rate_hz, duration_s);
  IQRecording out;
  out.sample_rate_hz = sample_rate_hz;
  out.seed = seed;
  out.samples.assign(n, {0.0f, 0.0f});

  for (std::size_t ci = 0; ci < spec.carriers.size(); ++ci) {
    const InterferenceCarrier& c = spec.carriers[ci];
    if (std::fabs(c.offset_hz) > sample_rate_hz / 2.0)
      throw InvalidArgument("gen_interference: carrier offset beyond +/- sample_rate/2");
    if (c.bandwidth_hz < 0.0)
      throw InvalidArgument("gen_interference: bandwidth_hz must be >= 0");

    Rng rng(derive_seed(seed, "carrier", static_cast<std::uint64_t>(ci)));
    const double amp0 = db_to_amplitude(c.power_db);
    const std::complex<double> step(std::cos(kTwoPi * c.offset_hz / sample_rate_hz),
                                    std::sin(kTwoPi * c.offset_hz / sample_rate_hz));
    const double ph0 = rng.uniform(0.0, kTwoPi);
    std::complex<double> phasor(std::cos(ph0), std::sin(ph0));

    // Amplitude ramp bounding the power drift at drift_rate * duration.
    const double r = rng.uniform(-1.0, 1.0);
    const double da = 0.5 * r * spec.drift_rate_per_s / sample_rate_hz;

    // Phase random walk; increment variance sets a Lorentzian-style width of
    // roughly bandwidth_hz.
    const double dphi = c.bandwidth_hz > 0.0
                            ? std::sqrt(kTwoPi * c.bandwidth_hz / sample_rate_hz)
                            : 0.0;
    const double walk_span = dphi * 1.7320508075688772;

    double aramp = 1.0;
    if (dphi > 0.0) {
      for (std::size_t k = 0; k < n; ++k) {
        const double a = amp0 * aramp;
        out.samples[k] += std::complex<float>(static_cast<float>(a * phasor.real()),
                                              static_cast<float>(a * phasor.imag()));
        const double w = rng.uniform(-walk_span, walk_span);
        double sw, cw;
        sincos_small(w, sw, cw);
        // One combined rotation keeps the serial dependency chain short.
        phasor *= std::complex<double>(cw, sw) * step;
        aramp += da;
      }
    } else {
      for (std::size_t k = 0; k < n; ++k) {
        const double a = amp0 * aramp;
        out.samples[k] += std::complex<float>(static_cast<float>(a * phasor.real()),
                                              static_cast<float>(a * phasor.imag()));
        phasor *= step;
        aramp += da;
      }
    }
  }
  return out;
}

IQRecording gen_obfuscation(const ObfuscationSpec& obf, double sample_rate_hz,
                            double duration_s, std::uint64_t seed) {
  validate_timebase(sample_rate_hz, duration_s, "gen_obfuscation");
  if (obf.daemon_clocks.empty() || obf.daemon_waves.empty())
    throw InvalidArgument("gen_obfuscation: daemon_clocks and daemon_waves must be non-empty");

  const std::size_t n = sample_count(sample_rate_hz, duration_s);
  IQRecording out;
  out.sample_rate_hz = sample_rate_hz;
  out.seed = seed;
  out.samples.assign(n, {0.0f, 0.0f});
  if (obf.power_db == -std::numeric_limits<double>::infinity()) return out;

  const double scale = db_to_amplitude(obf.power_db);
  const std::size_t pairs = std::max(obf.daemon_clocks.size(), obf.daemon_waves.size());
  for (std::size_t k = 0; k < pairs; ++k) {
    ClockSpec clk = obf.daemon_clocks[k % obf.daemon_clocks.size()];
    ActivityWave wav = obf.daemon_waves[k % obf.daemon_waves.size()];
    Rng rng(derive_seed(seed, "daemon", static_cast<std::uint64_t>(k)));
    if (obf.randomize_per_capture) {
      clk.f0_hz = rng.uniform(0.05, 0.45) * sample_rate_hz;
      if (clk.fm_hz > 0.0) {
        const double beta = clk.beta();
        clk.fm_hz = rng.uniform(0.004, 0.018) * sample_rate_hz;
        clk.delta_f_hz = beta * clk.fm_hz;
      }
      wav.f_sq_hz = rng.uniform(0.002, 0.004) * sample_rate_hz;
    }
    const double ph_c = rng.uniform(0.0, kTwoPi);
    const double ph_m = rng.uniform(0.0, kTwoPi);
    const double ph_s = rng.uniform(0.0, kTwoPi);
    IQRecording c = synth_clock(clk, sample_rate_hz, duration_s, ph_c, ph_m);
    IQRecording s = synth_square(wav, sample_rate_hz, duration_s, ph_s);
    for (std::size_t i = 0; i < n; ++i)
      out.samples[i] += static_cast<float>(scale) * c.samples[i] * s.samples[i];
  }
  return out;
}

namespace {

void add_noise(IQRecording& rec, const NoiseSpec& noise, std::uint64_t seed) {
  if (noise.noise_power_db == -std::numeric_limits<double>::infinity()) return;
  const double sigma = db_to_amplitude(noise.noise_power_db);
  // First-order FIR tilt H(z) = 1 + a z^-1, normalized to keep total power;
  // a is set from the dB span across the band.
  const double span = db_to_amplitude(noise.floor_tilt_db_per_band);
  const double a = (span - 1.0) / (span + 1.0);
  const double norm = 1.0 / std::sqrt(1.0 + a * a);
  Rng rng(seed);
  std::complex<double> prev(0.0, 0.0);
  for (auto& s : rec.samples) {
    const std::complex<double> w = rng.normal_complex();
    const std::complex<double> v = norm * sigma * (w + a * prev);
    prev = w;
    s += std::complex<float>(static_cast<float>(v.real()), static_cast<float>(v.imag()));
  }
}

}  // namespace

IQRecording capture(const SceneConfig& scene, CaptureState state, const ObfuscationSpec* obf) {
  validate_scene(scene);
  const std::size_t n = sample_count(scene.sample_rate_hz, scene.duration_s);
  IQRecording out;
  out.sample_rate_hz = scene.sample_rate_hz;
  out.center_frequency_hz = scene.band_center_hz;
  out.seed = scene.seed;
  out.samples.assign(n, {0.0f, 0.0f});

  if (state == CaptureState::Active) {
    const double g = channel_gain(scene.channel);
    const float gf = static_cast<float>(g);
    IQRecording eman =
        synth_app_emanation(scene.signature, scene.phase, scene.sample_rate_hz, scene.duration_s,
                            derive_seed(scene.seed, "emanation"), scene.band_index);
    for (std::size_t i = 0; i < n; ++i) out.samples[i] += gf * eman.samples[i];
    if (obf) {
      // The daemon runs on the headset, so its emission rides the same channel.
      IQRecording ow = gen_obfuscation(
          *obf, scene.sample_rate_hz, scene.duration_s,
          derive_seed(scene.seed, "obfuscation", static_cast<std::uint64_t>(scene.band_index)));
      for (std::size_t i = 0; i < n; ++i) out.samples[i] += gf * ow.samples[i];
    }
  }

  if (!scene.interference.carriers.empty()) {
    IQRecording inter = gen_interference(scene.interference, scene.sample_rate_hz,
                                         scene.duration_s, derive_seed(scene.seed, "interference"));
    for (std::size_t i = 0; i < n; ++i) out.samples[i] += inter.samples[i];
  }

  add_noise(out, scene.noise,
            derive_seed(scene.seed, "noise", state == CaptureState::Active ? 1u : 0u));
  return out;
}

}  // namespace emsim
