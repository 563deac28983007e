#pragma once

#include <string>
#include <vector>

#include "emsim/dataset.hpp"
#include "emsim/iofile.hpp"
#include "emsim/plan.hpp"

namespace emsim {

struct RunPaths {
  std::string root;
  std::string resolved_plan;
  std::string dataset_dir, manifest, appid_table, activity_table;
  std::string models_dir, appid_ckpt, activity_ckpt, appid_trainlog, activity_trainlog;
  std::string metrics_dir, appid_metrics, activity_metrics, appid_confusion, activity_confusion;
  std::string sweeps_dir, captures_dir;
  std::string report;
};

RunPaths run_paths(const std::string& out_dir);

// Index lists reconstructed from the capture partition stored in the dataset
// manifest, so every stage agrees on the split.
DatasetSplit split_from_captures(const FeatureTable& table,
                                 const std::vector<std::uint64_t>& train_caps,
                                 const std::vector<std::uint64_t>& val_caps,
                                 const std::vector<std::uint64_t>& test_caps);

// Stages are idempotent: each checks the stored plan hash and skips work
// whose artifacts already match, so partial runs resume from the dataset
// store.  All stages write the resolved plan document first.
void run_dataset(const ExperimentPlan& plan, const std::string& out_dir);
void run_train(const ExperimentPlan& plan, const std::string& out_dir);
void run_eval(const ExperimentPlan& plan, const std::string& out_dir);

// kinds: bands | duration | distance | orientation | obfuscation.
void run_sweep(const ExperimentPlan& plan, const std::string& out_dir, const std::string& kind);

// Merges resolved plan, dataset manifest, metrics, train logs, checkpoint
// hashes and any sweep curves into report.json.  Missing artifacts raise
// IoError listing every absent path.
void run_report(const std::string& out_dir);

// Writes Active and Idle IQ pairs for the plan's scenes (max_captures 0 keeps
// them all); returns the data-file paths.
std::vector<std::string> run_synth(const ExperimentPlan& plan, const std::string& out_dir,
                                   std::size_t max_captures);

// Residual spectrum + spike/USNR report for one Active/Idle pair; optionally
// an STFT spectrogram CSV of the Active capture.
void run_process(const std::string& active_path, const std::string& idle_path,
                 const PipelineConfig& cfg, const std::string& out_dir, bool with_stft);

// Mean USNR at the app's strongest predicted line over n_seeds probe
// captures; shared by the distance/orientation/duration sweeps and tests.
double mean_probe_usnr(const ExperimentPlan& plan, double distance_m, double orientation_deg,
                       std::size_t n_seeds);

std::string format_double(double v);

}  // namespace emsim
