#pragma once

#include <string>

#include "emsim/channel.hpp"
#include "emsim/iq.hpp"

namespace emsim {

// Canonical scene document (keys sorted, shortest round-trip numbers); its
// FNV-1a hash is the fingerprint recorded in IQ sidecars so a loaded capture
// can be checked against the scene that claims to have produced it.
std::string scene_to_json(const SceneConfig& scene);
SceneConfig scene_from_json(const std::string& text);
std::string scene_fingerprint(const SceneConfig& scene);

struct SidecarInfo {
  double sample_rate_hz = 0.0;
  double center_frequency_hz = 0.0;
  double duration_s = 0.0;
  std::uint64_t seed = 0;
  std::string scene_fingerprint;
  std::string state;
  int format_version = 0;
};

// Writes the raw interleaved little-endian float32 I,Q stream to data_path
// and a JSON sidecar to data_path + ".json".  Both writes are atomic
// (write-temp-then-rename).
void save_iq_pair(const IQRecording& iq, const std::string& data_path,
                  const std::string& fingerprint, const std::string& state);

// Loads the pair and enforces the sidecar invariants: sample count within one
// sample of duration_s * sample_rate_hz, readable fields.  Mismatches raise
// IoError naming the offending field.
IQRecording load_iq_pair(const std::string& data_path, SidecarInfo* info = nullptr);

// Fingerprint re-validation before use.
void verify_fingerprint(const SidecarInfo& info, const SceneConfig& scene,
                        const std::string& data_path);

// Shared atomic text writer for reports and CSVs.
void write_text_atomic(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);

}  // namespace emsim
