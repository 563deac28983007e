#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emsim/channel.hpp"
#include "emsim/dsp.hpp"
#include "emsim/nn.hpp"

namespace emsim {

struct ExampleMeta {
  std::uint64_t capture_id = 0;
  std::uint64_t seed = 0;
  std::string app_id;
  ActivityPhase phase = ActivityPhase::Running;
  double distance_m = 0.0;
  double orientation_deg = 0.0;
  std::size_t chunk_index = 0;
};

// Raw (unstandardized) float32 feature rows plus labels and provenance.
// AppId rows are 1 x (bands * fft_size) concatenated residuals; Activity rows
// are stft_frames x stft_bins idle-subtracted spectrograms.
struct FeatureTable {
  TaskKind task = TaskKind::AppId;
  std::size_t feat_h = 1;
  std::size_t feat_w = 0;
  std::vector<float> features;
  std::vector<int> labels;
  std::vector<ExampleMeta> meta;
  std::vector<std::string> class_names;
  std::size_t skipped_chunks = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return feat_h * feat_w; }
  const float* row(std::size_t i) const { return features.data() + i * dim(); }
};

// Scenes are grouped by capture_id; each group is one physical capture
// recorded band by band (ordered by band_center).  AppId features process
// every band of the group and concatenate; Activity features use the group's
// lowest band only.  Captures are cut into pipeline.chunk_samples chunks, one
// example per full chunk; partial tails are skipped and counted.
//
// class_names, when given, fixes the label mapping (so a table built from a
// scene subset stays label-compatible with the full table); otherwise labels
// follow first appearance.  obf, when given, rides on the Active captures.
FeatureTable build_dataset(const std::vector<SceneConfig>& scenes, TaskKind task,
                           const PipelineConfig& pipeline, const ObfuscationSpec* obf = nullptr,
                           const std::vector<std::string>* class_names = nullptr);

// One synthesis pass filling both tables (either pointer may be null).
void build_datasets(const std::vector<SceneConfig>& scenes, const PipelineConfig& pipeline,
                    const ObfuscationSpec* obf, const std::vector<std::string>* class_names,
                    FeatureTable* appid, FeatureTable* activity);

struct DatasetSplit {
  std::vector<std::size_t> train, validation, test;
  std::vector<std::uint64_t> train_captures, validation_captures, test_captures;
};

// Splits by capture_id so all chunks of one capture land in one split.
// Deterministic per seed.  Throws if any split would be empty.
DatasetSplit split_dataset(const FeatureTable& table, double train_ratio, double val_ratio,
                           double test_ratio, std::uint64_t seed);

// Per-dimension mean and 1/std over the training rows only.
Standardizer fit_standardizer(const FeatureTable& table, const std::vector<std::size_t>& train_idx);

// Keeps the first n_bands * band_width feature columns (AppId tables only);
// used by the band sweep so no capture has to be resynthesized.
FeatureTable slice_bands(const FeatureTable& table, std::size_t n_bands, std::size_t band_width);

// Binary container: magic "EMSD1", JSON metadata (labels and provenance
// included), then the raw little-endian float32 feature block.
void save_feature_table(const FeatureTable& table, const std::string& path);
FeatureTable load_feature_table(const std::string& path);

}  // namespace emsim
