#pragma once

#include <string>
#include <vector>

#include "emsim/channel.hpp"
#include "emsim/dsp.hpp"
#include "emsim/nn.hpp"

namespace emsim {

// Per-capture ambience randomization: carrier count, placement, power and
// width are drawn from these ranges using a stream derived from the capture
// seed, so Active and Idle share one realization.
struct AmbienceConfig {
  int min_carriers = 2;
  int max_carriers = 4;
  double power_db_lo = 10.0;
  double power_db_hi = 25.0;
  double bw_frac_lo = 2e-4;    // fraction of the sample rate
  double bw_frac_hi = 1.2e-3;
  double max_offset_frac = 0.4;
  double drift_rate_per_s = 0.005;
};

struct SweepConfig {
  std::vector<double> distances_m{0.5, 1.0, 2.0, 4.0};
  std::vector<double> orientations_deg{45, 90, 135, 180, 225, 270, 315, 360};
  std::vector<double> durations_s{0.1, 0.2, 0.3, 0.4, 0.5};
  // -inf disables the daemon, giving the baseline point.
  std::vector<double> obfuscation_power_db;
  std::size_t n_seeds = 20;
  double probe_duration_s = 0.1;
};

struct ExperimentPlan {
  std::string name = "desk-default";
  std::string profile = "desk";
  double sample_rate_hz = 2.5e6;
  double duration_s = 0.5;
  std::vector<double> band_centers_hz;
  PipelineConfig pipeline;

  // Scene grid: apps x phases x distances x orientations x seeds.  An empty
  // app list resolves to the full catalog.
  std::vector<std::string> apps;
  std::vector<ActivityPhase> phases;
  std::vector<double> distances_m{1.0};
  std::vector<double> orientations_deg{90.0};
  std::size_t seeds_per_cell = 7;
  std::uint64_t master_seed = 7;

  ChannelSpec channel;
  NoiseSpec noise;
  AmbienceConfig ambience;
  ObfuscationSpec obfuscation;  // power_db = -inf keeps the daemon off

  TrainConfig appid_train;
  TrainConfig activity_train;
  double train_ratio = 0.70;
  double val_ratio = 0.15;
  double test_ratio = 0.15;
  std::uint64_t split_seed = 13;

  SweepConfig sweep;
};

// profile: "desk" (2.5 MHz CI scale) or "paper" (25 MHz, 500K chunks).
ExperimentPlan default_plan(const std::string& profile);

void validate_plan(const ExperimentPlan& plan);

// Fills defaulted lists (apps, phases, obfuscation power points) so the
// serialized plan spells out everything that will run.
ExperimentPlan resolve_plan(const ExperimentPlan& plan);

std::string plan_to_json(const ExperimentPlan& plan);
ExperimentPlan plan_from_json(const std::string& text);
std::string plan_hash(const ExperimentPlan& plan);

// Ambience realization for one band recording of one capture.
InterferenceSpec ambient_interference(const AmbienceConfig& cfg, double sample_rate_hz,
                                      std::uint64_t capture_seed, int band_index);

// The full scene grid of the resolved plan, grouped by capture (each capture
// contributes one scene per band, sharing a capture_id).
std::vector<SceneConfig> expand_scenes(const ExperimentPlan& plan);

// One off-grid scene for sweep probes; the seed space is disjoint from the
// dataset grid.  Ambience carriers sit in the lower half of the band so probe
// measurements at the predicted line bins are never masked.
SceneConfig make_probe_scene(const ExperimentPlan& plan, const AppSignature& app,
                             ActivityPhase phase, double distance_m, double orientation_deg,
                             double duration_s, std::size_t seed_idx, int band_index);

// Frequency (absolute, including band center) of the strongest analytic
// emanation line of the app's pairs in one band.
double strongest_line_freq(const AppSignature& app, ActivityPhase phase, int band_index,
                           double band_center_hz);

}  // namespace emsim
