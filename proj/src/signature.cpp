#include "emsim/signature.hpp"

#include <json.hpp>

namespace emsim {

using nlohmann::json;

const std::vector<ActivityPhase>& all_phases() {
  static const std::vector<ActivityPhase> p = {
      ActivityPhase::Entering, ActivityPhase::Configuring, ActivityPhase::Running,
      ActivityPhase::Exiting};
  return p;
}

std::string phase_name(ActivityPhase p) {
  switch (p) {
    case ActivityPhase::Entering: return "entering";
    case ActivityPhase::Configuring: return "configuring";
    case ActivityPhase::Running: return "running";
    case ActivityPhase::Exiting: return "exiting";
  }
  return "unknown";
}

ActivityPhase phase_from_name(const std::string& s) {
  for (ActivityPhase p : all_phases())
    if (phase_name(p) == s) return p;
  throw InvalidArgument("phase_from_name: unknown phase '" + s + "'");
}

double PhaseEnvelope::value(double u01) const {
  if (duty >= 1.0) return 1.0;
  if (u01 >= duty) return 0.0;
  const double v = u01 / duty;
  switch (shape) {
    case Shape::Flat: return 1.0;
    case Shape::RampUp: return 0.3 + 0.7 * v;
    case Shape::RampDown: return 1.0 - 0.7 * v;
  }
  return 1.0;
}

IQRecording synth_app_emanation(const AppSignature& sig, ActivityPhase phase,
                                double sample_rate_hz, double duration_s, std::uint64_t seed,
                                int band) {
  validate_timebase(sample_rate_hz, duration_s, "synth_app_emanation");
  auto it = sig.phases.find(phase);
  if (it == sig.phases.end())
    throw InvalidArgument("synth_app_emanation: app '" + sig.app_id + "' lacks phase " +
                          phase_name(phase));
  const PhaseProgram& prog = it->second;

  const std::size_t n = sample_count(sample_rate_hz, duration_s);
  IQRecording out;
  out.sample_rate_hz = sample_rate_hz;
  out.seed = seed;
  out.samples.assign(n, std::complex<float>(0.0f, 0.0f));

  for (std::size_t k = 0; k < prog.pairs.size(); ++k) {
    const SignaturePair& pair = prog.pairs[k];
    if (band >= 0 && pair.band != band) continue;
    Rng rng(derive_seed(seed, "pair-phase", static_cast<std::uint64_t>(k)));
    const double ph_c = rng.uniform(0.0, kTwoPi);
    const double ph_m = rng.uniform(0.0, kTwoPi);
    const double ph_s = rng.uniform(0.0, kTwoPi);
    IQRecording clk = synth_clock(pair.clock, sample_rate_hz, duration_s, ph_c, ph_m);
    IQRecording sq = synth_square(pair.wave, sample_rate_hz, duration_s, ph_s);
    IQRecording prod = modulate(clk, sq);
    for (std::size_t i = 0; i < n; ++i) out.samples[i] += prod.samples[i];
  }

  // All pairs of a phase gate together: one shared burst clock per capture.
  const PhaseEnvelope& env = prog.envelope;
  if (env.duty < 1.0) {
    if (!(env.gate_hz > 0.0))
      throw InvalidArgument("synth_app_emanation: gated envelope needs positive gate_hz");
    Rng grng(derive_seed(seed, "gate-phase"));
    double u = grng.uniform();
    const double du = env.gate_hz / sample_rate_hz;
    for (std::size_t i = 0; i < n; ++i) {
      out.samples[i] *= static_cast<float>(env.value(u));
      u += du;
      if (u >= 1.0) u -= 1.0;
    }
  }
  return out;
}

namespace {

PhaseEnvelope envelope_for(ActivityPhase p) {
  PhaseEnvelope e;
  switch (p) {
    case ActivityPhase::Entering:
      e = {400.0, 0.5, PhaseEnvelope::Shape::RampUp};
      break;
    case ActivityPhase::Configuring:
      e = {150.0, 0.25, PhaseEnvelope::Shape::Flat};
      break;
    case ActivityPhase::Running:
      e = {0.0, 1.0, PhaseEnvelope::Shape::Flat};
      break;
    case ActivityPhase::Exiting:
      e = {250.0, 0.5, PhaseEnvelope::Shape::RampDown};
      break;
  }
  return e;
}

}  // namespace

std::vector<AppSignature> build_default_catalog(double sample_rate_hz) {
  if (!(sample_rate_hz > 0.0))
    throw InvalidArgument("build_default_catalog: sample_rate_hz must be positive");
  static const char* kNames[15] = {"arcade",  "racer",   "gallery", "sandbox", "trainer",
                                   "puzzle",  "shooter", "builder", "rhythm",  "chess",
                                   "painter", "explorer", "fitness", "theater", "social"};
  // Frequencies below are laid out for a 2.5 MHz tile and scale with rate.
  const double u = sample_rate_hz / 2.5e6;

  std::vector<AppSignature> catalog(15);
  for (int i = 0; i < 15; ++i) {
    AppSignature& app = catalog[static_cast<std::size_t>(i)];
    app.app_id = kNames[i];

    std::vector<SignaturePair> pairs;

    // Band-0 pair.  Apps {0,1}, {2,3}, {4,5} share a slot, so band 0 alone
    // cannot separate them.
    const int slot = i < 6 ? i / 2 : i - 3;
    SignaturePair p0;
    p0.band = 0;
    p0.clock.f0_hz = (150.0e3 + 85.0e3 * slot) * u;
    p0.clock.fm_hz = (12.0e3 + 2.8e3 * slot) * u;
    p0.clock.delta_f_hz = (0.8 + 0.045 * slot) * p0.clock.fm_hz;
    p0.clock.n_harmonics = 2;
    p0.wave.f_sq_hz = (5.2e3 + 0.38e3 * slot) * u;
    p0.wave.a_sq = 1.0;
    p0.wave.n_terms = 2;
    pairs.push_back(p0);

    // Two narrowband pairs in the outer tiles; unmodulated clocks keep them
    // cheap while the f0/f_sq placement stays app-specific.
    for (int which = 0; which < 2; ++which) {
      const int b = 1 + (i + 2 * which) % 4;
      SignaturePair ps;
      ps.band = b;
      ps.clock.f0_hz = (140.0e3 + 45.0e3 * ((7 * i + 13 * b) % 21)) * u;
      ps.clock.fm_hz = 0.0;
      ps.clock.delta_f_hz = 0.0;
      ps.clock.n_harmonics = 1;
      ps.wave.f_sq_hz = (5.0e3 + 0.23e3 * ((5 * i + 3 * b) % 19)) * u;
      ps.wave.a_sq = 1.2;
      ps.wave.n_terms = 2;
      pairs.push_back(ps);
    }

    for (ActivityPhase ph : all_phases()) {
      PhaseProgram prog;
      prog.pairs = pairs;
      prog.envelope = envelope_for(ph);
      app.phases[ph] = prog;
    }
  }
  return catalog;
}

namespace {

json clock_to_json(const ClockSpec& c) {
  json j;
  j["f0_hz"] = c.f0_hz;
  j["fm_hz"] = c.fm_hz;
  j["delta_f_hz"] = c.delta_f_hz;
  j["n_harmonics"] = c.n_harmonics;
  if (!c.amplitude_profile.empty()) j["amplitude_profile"] = c.amplitude_profile;
  return j;
}

ClockSpec clock_from_json(const json& j) {
  ClockSpec c;
  c.f0_hz = j.at("f0_hz").get<double>();
  c.fm_hz = j.at("fm_hz").get<double>();
  c.delta_f_hz = j.at("delta_f_hz").get<double>();
  c.n_harmonics = j.at("n_harmonics").get<int>();
  if (j.contains("amplitude_profile"))
    c.amplitude_profile = j.at("amplitude_profile").get<std::vector<double>>();
  return c;
}

json wave_to_json(const ActivityWave& w) {
  return json{{"f_sq_hz", w.f_sq_hz}, {"a_sq", w.a_sq}, {"n_terms", w.n_terms}};
}

ActivityWave wave_from_json(const json& j) {
  ActivityWave w;
  w.f_sq_hz = j.at("f_sq_hz").get<double>();
  w.a_sq = j.at("a_sq").get<double>();
  w.n_terms = j.at("n_terms").get<int>();
  return w;
}

std::string shape_name(PhaseEnvelope::Shape s) {
  switch (s) {
    case PhaseEnvelope::Shape::Flat: return "flat";
    case PhaseEnvelope::Shape::RampUp: return "ramp_up";
    case PhaseEnvelope::Shape::RampDown: return "ramp_down";
  }
  return "flat";
}

PhaseEnvelope::Shape shape_from_name(const std::string& s) {
  if (s == "flat") return PhaseEnvelope::Shape::Flat;
  if (s == "ramp_up") return PhaseEnvelope::Shape::RampUp;
  if (s == "ramp_down") return PhaseEnvelope::Shape::RampDown;
  throw InvalidArgument("catalog: unknown envelope shape '" + s + "'");
}

json app_to_json(const AppSignature& app) {
  json ja;
  ja["app_id"] = app.app_id;
  json phases;
  for (const auto& [ph, prog] : app.phases) {
    json jp;
    jp["envelope"] = {{"gate_hz", prog.envelope.gate_hz},
                      {"duty", prog.envelope.duty},
                      {"shape", shape_name(prog.envelope.shape)}};
    json pairs = json::array();
    for (const auto& pr : prog.pairs)
      pairs.push_back(json{{"band", pr.band},
                           {"clock", clock_to_json(pr.clock)},
                           {"wave", wave_to_json(pr.wave)}});
    jp["pairs"] = pairs;
    phases[phase_name(ph)] = jp;
  }
  ja["phases"] = phases;
  return ja;
}

AppSignature app_from_json(const json& ja) {
  AppSignature app;
  app.app_id = ja.at("app_id").get<std::string>();
  for (const auto& [phname, jp] : ja.at("phases").items()) {
    PhaseProgram prog;
    const auto& je = jp.at("envelope");
    prog.envelope.gate_hz = je.at("gate_hz").get<double>();
    prog.envelope.duty = je.at("duty").get<double>();
    prog.envelope.shape = shape_from_name(je.at("shape").get<std::string>());
    for (const auto& pr : jp.at("pairs")) {
      SignaturePair pair;
      pair.band = pr.at("band").get<int>();
      pair.clock = clock_from_json(pr.at("clock"));
      pair.wave = wave_from_json(pr.at("wave"));
      prog.pairs.push_back(pair);
    }
    app.phases[phase_from_name(phname)] = prog;
  }
  return app;
}

}  // namespace

std::string signature_to_json(const AppSignature& app) { return app_to_json(app).dump(); }

AppSignature signature_from_json(const std::string& text) {
  try {
    return app_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw IoError(std::string("signature: JSON parse failed: ") + e.what());
  }
}

std::string catalog_to_json(const std::vector<AppSignature>& catalog, double sample_rate_hz) {
  json root;
  root["format_version"] = 1;
  root["sample_rate_hz"] = sample_rate_hz;
  json apps = json::array();
  for (const auto& app : catalog) apps.push_back(app_to_json(app));
  root["apps"] = apps;
  return root.dump(2);
}

std::vector<AppSignature> catalog_from_json(const std::string& text, double* sample_rate_hz) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw IoError(std::string("catalog: JSON parse failed: ") + e.what());
  }
  if (root.value("format_version", 0) != 1)
    throw IoError("catalog: unsupported format_version");
  if (sample_rate_hz) *sample_rate_hz = root.value("sample_rate_hz", 0.0);
  std::vector<AppSignature> catalog;
  try {
    for (const auto& ja : root.at("apps")) catalog.push_back(app_from_json(ja));
  } catch (const json::exception& e) {
    throw IoError(std::string("catalog: malformed app entry: ") + e.what());
  }
  return catalog;
}

const AppSignature& find_app(const std::vector<AppSignature>& catalog, const std::string& app_id) {
  for (const auto& a : catalog)
    if (a.app_id == app_id) return a;
  throw InvalidArgument("find_app: unknown app_id '" + app_id + "'");
}

}  // namespace emsim
