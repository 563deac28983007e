#pragma once

#include <optional>

#include "emsim/signature.hpp"

namespace emsim {

struct ChannelSpec {
  double distance_m = 1.0;
  double path_loss_exponent = 2.0;
  double antenna_gain_dbi = 6.0;
  double orientation_deg = 90.0;
  double head_blockage_db = 8.0;
};

struct InterferenceCarrier {
  double offset_hz = 0.0;
  double power_db = 0.0;
  double bandwidth_hz = 0.0;
};

struct InterferenceSpec {
  std::vector<InterferenceCarrier> carriers;
  double drift_rate_per_s = 0.005;
};

struct NoiseSpec {
  // dB relative to unit emanation amplitude; -inf disables noise entirely.
  double noise_power_db = 0.0;
  double floor_tilt_db_per_band = 4.0;
};

struct ObfuscationSpec {
  std::vector<ClockSpec> daemon_clocks;
  std::vector<ActivityWave> daemon_waves;
  double power_db = 0.0;
  bool randomize_per_capture = true;
};

struct SceneConfig {
  AppSignature signature;
  ActivityPhase phase = ActivityPhase::Running;
  ChannelSpec channel;
  InterferenceSpec interference;
  NoiseSpec noise;
  double sample_rate_hz = 0.0;
  double duration_s = 0.0;
  double band_center_hz = 0.0;
  int band_index = 0;
  std::uint64_t seed = 0;
  // Scenes that record different bands of one physical capture share a
  // capture_id; the dataset builder groups on it and the splitter keys on it.
  std::uint64_t capture_id = 0;
};

enum class CaptureState { Active, Idle };

void validate_channel(const ChannelSpec& chan);
void validate_scene(const SceneConfig& scene);

// Amplitude factor: 10^(dBi/20) * d^(-ple/2) * orient(theta).  orient() is a
// raised-cosine lobe peaking at 90 deg with a fixed side floor, and the rear
// hemisphere (180, 360) additionally attenuated by head_blockage_db.
double channel_gain(const ChannelSpec& chan);

// Sum of narrowband carriers.  bandwidth_hz > 0 broadens a carrier by a
// random phase walk; per-carrier power ramps by at most
// drift_rate_per_s * duration.  Deterministic per seed, and each carrier
// draws from its own derived stream.
IQRecording gen_interference(const InterferenceSpec& spec, double sample_rate_hz,
                             double duration_s, std::uint64_t seed);

// Daemon emanation: sum of modulate(clock, square) over daemon pairs, scaled
// by 10^(power_db/20).  With randomize_per_capture the per-pair f0/f_sq/fm
// are redrawn per seed across the band, modeling a daemon that hops its fake
// signatures between captures.
IQRecording gen_obfuscation(const ObfuscationSpec& obf, double sample_rate_hz,
                            double duration_s, std::uint64_t seed);

// Idle: interference + noise.  Active: channel_gain * (emanation [+ daemon])
// + interference + noise.  The interference stream derives from the scene
// seed only, so Active/Idle share one ambience realization; noise is
// independent per state.
IQRecording capture(const SceneConfig& scene, CaptureState state,
                    const ObfuscationSpec* obf = nullptr);

}  // namespace emsim
