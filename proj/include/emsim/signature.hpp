#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "emsim/emanation.hpp"

namespace emsim {

enum class ActivityPhase { Entering, Configuring, Running, Exiting };

const std::vector<ActivityPhase>& all_phases();
std::string phase_name(ActivityPhase p);
ActivityPhase phase_from_name(const std::string& s);

// Burst gating applied to a phase's emanation.  duty >= 1 means continuous.
// Shapes modulate the amplitude inside each burst.
struct PhaseEnvelope {
  enum class Shape { Flat, RampUp, RampDown };
  double gate_hz = 0.0;
  double duty = 1.0;
  Shape shape = Shape::Flat;

  // u01 in [0,1) is the position within one gate period.
  double value(double u01) const;
};

struct SignaturePair {
  ClockSpec clock;
  ActivityWave wave;
  int band = 0;
};

struct PhaseProgram {
  std::vector<SignaturePair> pairs;
  PhaseEnvelope envelope;
};

struct AppSignature {
  std::string app_id;
  std::map<ActivityPhase, PhaseProgram> phases;
};

// Sums modulate(synth_clock, synth_square) over the phase's pairs, gated by
// the phase envelope.  The seed perturbs per-pair initial phases and the
// shared gate phase only; parameters come from the signature.  band >= 0
// restricts synthesis to pairs assigned to that band (their f0 values are
// offsets within the band tile); band < 0 uses every pair.
IQRecording synth_app_emanation(const AppSignature& sig, ActivityPhase phase,
                                double sample_rate_hz, double duration_s, std::uint64_t seed,
                                int band = -1);

// Deterministic 15-app catalog.  Frequencies scale linearly with sample rate
// so the same layout works at any capture bandwidth.  Three app pairs share
// identical band-0 signatures and are distinguishable only through the other
// bands.
std::vector<AppSignature> build_default_catalog(double sample_rate_hz);

std::string catalog_to_json(const std::vector<AppSignature>& catalog, double sample_rate_hz);
std::vector<AppSignature> catalog_from_json(const std::string& text, double* sample_rate_hz = nullptr);

// Single-signature (de)serialization, compact form; used by scene documents.
std::string signature_to_json(const AppSignature& app);
AppSignature signature_from_json(const std::string& text);

const AppSignature& find_app(const std::vector<AppSignature>& catalog, const std::string& app_id);

}  // namespace emsim
