#include "emsim/plan.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <json.hpp>

namespace emsim {

namespace {

using nlohmann::json;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

json db_to_json(double v) {
  if (std::isinf(v) && v < 0.0) return "-inf";
  return v;
}

double db_from_json(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "-inf") return kNegInf;
    throw IoError("plan: unrecognized dB value '" + j.get<std::string>() + "'");
  }
  return j.get<double>();
}

json train_to_json(const TrainConfig& t) {
  json j;
  j["learning_rate"] = t.learning_rate;
  j["batch_size"] = t.batch_size;
  j["epochs"] = t.epochs;
  j["seed"] = t.seed;
  j["weight_decay"] = t.weight_decay;
  j["momentum"] = t.momentum;
  return j;
}

TrainConfig train_from_json(const json& j) {
  TrainConfig t;
  t.learning_rate = j.at("learning_rate").get<double>();
  t.batch_size = j.at("batch_size").get<std::size_t>();
  t.epochs = j.at("epochs").get<std::size_t>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.weight_decay = j.at("weight_decay").get<double>();
  t.momentum = j.at("momentum").get<double>();
  return t;
}

}  // namespace

ExperimentPlan default_plan(const std::string& profile) {
  ExperimentPlan p;
  p.profile = profile;
  if (profile == "desk") {
    p.name = "desk-default";
    p.sample_rate_hz = 2.5e6;
    p.duration_s = 0.35;
    p.band_centers_hz = {585e6, 595e6, 605e6, 615e6, 625e6};
    p.pipeline.fft_size = 1024;
    p.pipeline.avg_frames = 48;
    p.pipeline.movmedian_len = 101;
    p.pipeline.spike_threshold_db = 10.0;
    p.pipeline.stft_window_len = 512;
    p.pipeline.stft_hop = 512;
    p.pipeline.chunk_samples = 50000;
  } else if (profile == "paper") {
    p.name = "paper-scale";
    p.sample_rate_hz = 25e6;
    p.duration_s = 0.5;
    p.band_centers_hz = {585e6, 595e6, 605e6, 615e6, 625e6};
    p.pipeline.fft_size = 8192;
    p.pipeline.avg_frames = 48;
    p.pipeline.movmedian_len = 301;
    p.pipeline.spike_threshold_db = 10.0;
    p.pipeline.stft_window_len = 4096;
    p.pipeline.stft_hop = 4096;
    p.pipeline.chunk_samples = 500000;
  } else {
    throw InvalidArgument("unknown profile '" + profile + "' (expected desk or paper)");
  }

  p.phases = all_phases();
  p.channel.distance_m = 1.0;
  p.channel.path_loss_exponent = 2.7;
  // Sized so the strongest Running-phase line sits near 18 dB USNR at the
  // 1 m / 90 deg reference geometry, comfortably above the 10 dB spike gate.
  p.channel.antenna_gain_dbi = 10.0;
  p.channel.orientation_deg = 90.0;
  p.channel.head_blockage_db = 8.0;
  p.noise.noise_power_db = 0.0;
  p.noise.floor_tilt_db_per_band = 4.0;

  // Daemon defaults: three pairs whose exact frequencies are redrawn per
  // capture; the list fixes pair count and modulation character.
  p.obfuscation.power_db = kNegInf;
  p.obfuscation.randomize_per_capture = true;
  {
    const double u = p.sample_rate_hz / 2.5e6;
    ClockSpec c1;
    c1.f0_hz = 2.0e5 * u;
    c1.fm_hz = 1.5e4 * u;
    c1.delta_f_hz = 0.8 * c1.fm_hz;
    c1.n_harmonics = 2;
    ClockSpec c2 = c1;
    c2.f0_hz = 4.5e5 * u;
    c2.fm_hz = 2.2e4 * u;
    c2.delta_f_hz = 1.2 * c2.fm_hz;
    ClockSpec c3;
    c3.f0_hz = 7.0e5 * u;
    c3.fm_hz = 0.0;
    c3.delta_f_hz = 0.0;
    c3.n_harmonics = 1;
    p.obfuscation.daemon_clocks = {c1, c2, c3};
    ActivityWave w1;
    w1.f_sq_hz = 6.0e3 * u;
    ActivityWave w2 = w1;
    w2.f_sq_hz = 8.5e3 * u;
    ActivityWave w3 = w1;
    w3.f_sq_hz = 4.1e3 * u;
    p.obfuscation.daemon_waves = {w1, w2, w3};
  }

  p.appid_train.learning_rate = 0.02;
  p.appid_train.batch_size = 32;
  p.appid_train.epochs = 12;
  p.appid_train.seed = 101;
  p.activity_train.learning_rate = 0.005;
  p.activity_train.batch_size = 32;
  p.activity_train.epochs = 4;
  p.activity_train.seed = 202;

  p.sweep.obfuscation_power_db = {kNegInf, -10.0, -5.0, 0.0};
  return p;
}

void validate_plan(const ExperimentPlan& plan) {
  if (plan.name.empty()) throw InvalidArgument("plan: name must be non-empty");
  if (plan.profile != "desk" && plan.profile != "paper")
    throw InvalidArgument("plan: profile must be desk or paper");
  validate_timebase(plan.sample_rate_hz, plan.duration_s, "plan");
  validate_pipeline(plan.pipeline);
  if (plan.band_centers_hz.empty()) throw InvalidArgument("plan: band_centers_hz is empty");
  for (std::size_t i = 1; i < plan.band_centers_hz.size(); ++i)
    if (plan.band_centers_hz[i] <= plan.band_centers_hz[i - 1])
      throw InvalidArgument("plan: band_centers_hz must be strictly ascending");
  if (plan.phases.empty() || plan.distances_m.empty() || plan.orientations_deg.empty() ||
      plan.seeds_per_cell == 0)
    throw InvalidArgument("plan: empty scene grid");
  validate_channel(plan.channel);
  if (plan.ambience.min_carriers < 0 || plan.ambience.max_carriers < plan.ambience.min_carriers)
    throw InvalidArgument("plan: ambience carrier range invalid");
  if (std::abs(plan.train_ratio + plan.val_ratio + plan.test_ratio - 1.0) > 1e-9)
    throw InvalidArgument("plan: split ratios must sum to 1");
  validate_train_config(plan.appid_train);
  validate_train_config(plan.activity_train);
}

ExperimentPlan resolve_plan(const ExperimentPlan& plan) {
  ExperimentPlan p = plan;
  if (p.apps.empty())
    for (const AppSignature& a : build_default_catalog(p.sample_rate_hz)) p.apps.push_back(a.app_id);
  if (p.phases.empty()) p.phases = all_phases();
  if (p.sweep.obfuscation_power_db.empty())
    p.sweep.obfuscation_power_db = {kNegInf, -10.0, -5.0, 0.0};
  validate_plan(p);
  return p;
}

std::string plan_to_json(const ExperimentPlan& plan) {
  json j;
  j["format_version"] = 1;
  j["name"] = plan.name;
  j["profile"] = plan.profile;
  j["sample_rate_hz"] = plan.sample_rate_hz;
  j["duration_s"] = plan.duration_s;
  j["band_centers_hz"] = plan.band_centers_hz;
  j["pipeline"] = {{"fft_size", plan.pipeline.fft_size},
                   {"avg_frames", plan.pipeline.avg_frames},
                   {"movmedian_len", plan.pipeline.movmedian_len},
                   {"spike_threshold_db", plan.pipeline.spike_threshold_db},
                   {"stft_window_len", plan.pipeline.stft_window_len},
                   {"stft_hop", plan.pipeline.stft_hop},
                   {"chunk_samples", plan.pipeline.chunk_samples}};
  j["apps"] = plan.apps;
  json phs = json::array();
  for (ActivityPhase ph : plan.phases) phs.push_back(phase_name(ph));
  j["phases"] = phs;
  j["distances_m"] = plan.distances_m;
  j["orientations_deg"] = plan.orientations_deg;
  j["seeds_per_cell"] = plan.seeds_per_cell;
  j["master_seed"] = plan.master_seed;
  j["channel"] = {{"distance_m", plan.channel.distance_m},
                  {"path_loss_exponent", plan.channel.path_loss_exponent},
                  {"antenna_gain_dbi", plan.channel.antenna_gain_dbi},
                  {"orientation_deg", plan.channel.orientation_deg},
                  {"head_blockage_db", plan.channel.head_blockage_db}};
  j["noise"] = {{"noise_power_db", db_to_json(plan.noise.noise_power_db)},
                {"floor_tilt_db_per_band", plan.noise.floor_tilt_db_per_band}};
  j["ambience"] = {{"min_carriers", plan.ambience.min_carriers},
                   {"max_carriers", plan.ambience.max_carriers},
                   {"power_db_lo", plan.ambience.power_db_lo},
                   {"power_db_hi", plan.ambience.power_db_hi},
                   {"bw_frac_lo", plan.ambience.bw_frac_lo},
                   {"bw_frac_hi", plan.ambience.bw_frac_hi},
                   {"max_offset_frac", plan.ambience.max_offset_frac},
                   {"drift_rate_per_s", plan.ambience.drift_rate_per_s}};
  {
    json obf;
    obf["power_db"] = db_to_json(plan.obfuscation.power_db);
    obf["randomize_per_capture"] = plan.obfuscation.randomize_per_capture;
    json clocks = json::array();
    for (const ClockSpec& c : plan.obfuscation.daemon_clocks)
      clocks.push_back(json{{"f0_hz", c.f0_hz},
                            {"fm_hz", c.fm_hz},
                            {"delta_f_hz", c.delta_f_hz},
                            {"n_harmonics", c.n_harmonics}});
    obf["daemon_clocks"] = clocks;
    json waves = json::array();
    for (const ActivityWave& w : plan.obfuscation.daemon_waves)
      waves.push_back(json{{"f_sq_hz", w.f_sq_hz}, {"a_sq", w.a_sq}, {"n_terms", w.n_terms}});
    obf["daemon_waves"] = waves;
    j["obfuscation"] = obf;
  }
  j["appid_train"] = train_to_json(plan.appid_train);
  j["activity_train"] = train_to_json(plan.activity_train);
  j["train_ratio"] = plan.train_ratio;
  j["val_ratio"] = plan.val_ratio;
  j["test_ratio"] = plan.test_ratio;
  j["split_seed"] = plan.split_seed;
  json sweep;
  sweep["distances_m"] = plan.sweep.distances_m;
  sweep["orientations_deg"] = plan.sweep.orientations_deg;
  sweep["durations_s"] = plan.sweep.durations_s;
  json obf_points = json::array();
  for (double v : plan.sweep.obfuscation_power_db) obf_points.push_back(db_to_json(v));
  sweep["obfuscation_power_db"] = obf_points;
  sweep["n_seeds"] = plan.sweep.n_seeds;
  sweep["probe_duration_s"] = plan.sweep.probe_duration_s;
  j["sweep"] = sweep;
  return j.dump(2) + "\n";
}

ExperimentPlan plan_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("plan: JSON parse failed: ") + e.what());
  }
  try {
    if (j.value("format_version", 0) != 1) throw IoError("plan: unsupported format_version");
    ExperimentPlan p;
    p.name = j.at("name").get<std::string>();
    p.profile = j.at("profile").get<std::string>();
    p.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    p.duration_s = j.at("duration_s").get<double>();
    p.band_centers_hz = j.at("band_centers_hz").get<std::vector<double>>();
    const json& pp = j.at("pipeline");
    p.pipeline.fft_size = pp.at("fft_size").get<std::size_t>();
    p.pipeline.avg_frames = pp.at("avg_frames").get<std::size_t>();
    p.pipeline.movmedian_len = pp.at("movmedian_len").get<std::size_t>();
    p.pipeline.spike_threshold_db = pp.at("spike_threshold_db").get<double>();
    p.pipeline.stft_window_len = pp.at("stft_window_len").get<std::size_t>();
    p.pipeline.stft_hop = pp.at("stft_hop").get<std::size_t>();
    p.pipeline.chunk_samples = pp.at("chunk_samples").get<std::size_t>();
    p.apps = j.at("apps").get<std::vector<std::string>>();
    p.phases.clear();
    for (const json& ph : j.at("phases")) p.phases.push_back(phase_from_name(ph.get<std::string>()));
    p.distances_m = j.at("distances_m").get<std::vector<double>>();
    p.orientations_deg = j.at("orientations_deg").get<std::vector<double>>();
    p.seeds_per_cell = j.at("seeds_per_cell").get<std::size_t>();
    p.master_seed = j.at("master_seed").get<std::uint64_t>();
    const json& ch = j.at("channel");
    p.channel.distance_m = ch.at("distance_m").get<double>();
    p.channel.path_loss_exponent = ch.at("path_loss_exponent").get<double>();
    p.channel.antenna_gain_dbi = ch.at("antenna_gain_dbi").get<double>();
    p.channel.orientation_deg = ch.at("orientation_deg").get<double>();
    p.channel.head_blockage_db = ch.at("head_blockage_db").get<double>();
    p.noise.noise_power_db = db_from_json(j.at("noise").at("noise_power_db"));
    p.noise.floor_tilt_db_per_band = j.at("noise").at("floor_tilt_db_per_band").get<double>();
    const json& am = j.at("ambience");
    p.ambience.min_carriers = am.at("min_carriers").get<int>();
    p.ambience.max_carriers = am.at("max_carriers").get<int>();
    p.ambience.power_db_lo = am.at("power_db_lo").get<double>();
    p.ambience.power_db_hi = am.at("power_db_hi").get<double>();
    p.ambience.bw_frac_lo = am.at("bw_frac_lo").get<double>();
    p.ambience.bw_frac_hi = am.at("bw_frac_hi").get<double>();
    p.ambience.max_offset_frac = am.at("max_offset_frac").get<double>();
    p.ambience.drift_rate_per_s = am.at("drift_rate_per_s").get<double>();
    const json& ob = j.at("obfuscation");
    p.obfuscation.power_db = db_from_json(ob.at("power_db"));
    p.obfuscation.randomize_per_capture = ob.at("randomize_per_capture").get<bool>();
    p.obfuscation.daemon_clocks.clear();
    for (const json& c : ob.at("daemon_clocks")) {
      ClockSpec cs;
      cs.f0_hz = c.at("f0_hz").get<double>();
      cs.fm_hz = c.at("fm_hz").get<double>();
      cs.delta_f_hz = c.at("delta_f_hz").get<double>();
      cs.n_harmonics = c.at("n_harmonics").get<int>();
      p.obfuscation.daemon_clocks.push_back(cs);
    }
    p.obfuscation.daemon_waves.clear();
    for (const json& w : ob.at("daemon_waves")) {
      ActivityWave aw;
      aw.f_sq_hz = w.at("f_sq_hz").get<double>();
      aw.a_sq = w.at("a_sq").get<double>();
      aw.n_terms = w.at("n_terms").get<int>();
      p.obfuscation.daemon_waves.push_back(aw);
    }
    p.appid_train = train_from_json(j.at("appid_train"));
    p.activity_train = train_from_json(j.at("activity_train"));
    p.train_ratio = j.at("train_ratio").get<double>();
    p.val_ratio = j.at("val_ratio").get<double>();
    p.test_ratio = j.at("test_ratio").get<double>();
    p.split_seed = j.at("split_seed").get<std::uint64_t>();
    const json& sw = j.at("sweep");
    p.sweep.distances_m = sw.at("distances_m").get<std::vector<double>>();
    p.sweep.orientations_deg = sw.at("orientations_deg").get<std::vector<double>>();
    p.sweep.durations_s = sw.at("durations_s").get<std::vector<double>>();
    p.sweep.obfuscation_power_db.clear();
    for (const json& v : sw.at("obfuscation_power_db"))
      p.sweep.obfuscation_power_db.push_back(db_from_json(v));
    p.sweep.n_seeds = sw.at("n_seeds").get<std::size_t>();
    p.sweep.probe_duration_s = sw.at("probe_duration_s").get<double>();
    return p;
  } catch (const json::exception& e) {
    throw IoError(std::string("plan: missing or malformed field: ") + e.what());
  }
}

std::string plan_hash(const ExperimentPlan& plan) {
  return to_hex(fnv1a64(plan_to_json(plan)));
}

InterferenceSpec ambient_interference(const AmbienceConfig& cfg, double sample_rate_hz,
                                      std::uint64_t capture_seed, int band_index) {
  Rng rng(derive_seed(capture_seed, "ambience", static_cast<std::uint64_t>(band_index)));
  InterferenceSpec spec;
  spec.drift_rate_per_s = cfg.drift_rate_per_s;
  const int n = rng.uniform_int(cfg.min_carriers, cfg.max_carriers);
  for (int i = 0; i < n; ++i) {
    InterferenceCarrier c;
    c.offset_hz = rng.uniform(-cfg.max_offset_frac, cfg.max_offset_frac) * sample_rate_hz;
    c.power_db = rng.uniform(cfg.power_db_lo, cfg.power_db_hi);
    c.bandwidth_hz = rng.uniform(cfg.bw_frac_lo, cfg.bw_frac_hi) * sample_rate_hz;
    spec.carriers.push_back(c);
  }
  return spec;
}

std::vector<SceneConfig> expand_scenes(const ExperimentPlan& plan_in) {
  const ExperimentPlan plan = resolve_plan(plan_in);
  const std::vector<AppSignature> catalog = build_default_catalog(plan.sample_rate_hz);

  std::vector<SceneConfig> scenes;
  std::uint64_t capture_id = 0;
  for (std::size_t ai = 0; ai < plan.apps.size(); ++ai) {
    const AppSignature& app = find_app(catalog, plan.apps[ai]);
    for (std::size_t pi = 0; pi < plan.phases.size(); ++pi) {
      for (std::size_t di = 0; di < plan.distances_m.size(); ++di) {
        for (std::size_t oi = 0; oi < plan.orientations_deg.size(); ++oi) {
          for (std::size_t si = 0; si < plan.seeds_per_cell; ++si) {
            ++capture_id;
            const std::uint64_t capture_seed = derive_seed(
                plan.master_seed, {fnv1a64("capture"), ai, pi, di, oi, si});
            for (std::size_t b = 0; b < plan.band_centers_hz.size(); ++b) {
              SceneConfig sc;
              sc.signature = app;
              sc.phase = plan.phases[pi];
              sc.channel = plan.channel;
              sc.channel.distance_m = plan.distances_m[di];
              sc.channel.orientation_deg = plan.orientations_deg[oi];
              sc.interference = ambient_interference(plan.ambience, plan.sample_rate_hz,
                                                     capture_seed, static_cast<int>(b));
              sc.noise = plan.noise;
              sc.sample_rate_hz = plan.sample_rate_hz;
              sc.duration_s = plan.duration_s;
              sc.band_center_hz = plan.band_centers_hz[b];
              sc.band_index = static_cast<int>(b);
              sc.seed = derive_seed(capture_seed, "band", b);
              sc.capture_id = capture_id;
              scenes.push_back(std::move(sc));
            }
          }
        }
      }
    }
  }
  return scenes;
}

SceneConfig make_probe_scene(const ExperimentPlan& plan, const AppSignature& app,
                             ActivityPhase phase, double distance_m, double orientation_deg,
                             double duration_s, std::size_t seed_idx, int band_index) {
  SceneConfig sc;
  sc.signature = app;
  sc.phase = phase;
  sc.channel = plan.channel;
  sc.channel.distance_m = distance_m;
  sc.channel.orientation_deg = orientation_deg;
  sc.noise = plan.noise;
  sc.sample_rate_hz = plan.sample_rate_hz;
  sc.duration_s = duration_s;
  sc.band_center_hz = plan.band_centers_hz.at(static_cast<std::size_t>(band_index));
  sc.band_index = band_index;
  sc.seed = derive_seed(plan.master_seed, {fnv1a64("probe"), fnv1a64(app.app_id),
                                           static_cast<std::uint64_t>(phase), seed_idx});
  sc.capture_id = 0;

  // Deterministic ambience pinned to negative offsets; app lines live in the
  // positive half of the band, so probe bins stay clean.
  InterferenceSpec inf;
  inf.drift_rate_per_s = plan.ambience.drift_rate_per_s;
  const double mid_bw =
      0.5 * (plan.ambience.bw_frac_lo + plan.ambience.bw_frac_hi) * plan.sample_rate_hz;
  for (double frac : {-0.35, -0.2, -0.08}) {
    InterferenceCarrier c;
    c.offset_hz = frac * plan.sample_rate_hz;
    c.power_db = 0.5 * (plan.ambience.power_db_lo + plan.ambience.power_db_hi);
    c.bandwidth_hz = mid_bw;
    inf.carriers.push_back(c);
  }
  sc.interference = inf;
  return sc;
}

double strongest_line_freq(const AppSignature& app, ActivityPhase phase, int band_index,
                           double band_center_hz) {
  const auto it = app.phases.find(phase);
  if (it == app.phases.end()) throw InvalidArgument("strongest_line_freq: phase not in signature");
  double best_mag = -1.0, best_freq = 0.0;
  for (const SignaturePair& pr : it->second.pairs) {
    if (pr.band != band_index) continue;
    for (const SpectralLine& ln : emanation_spectrum_analytic(pr.clock, pr.wave)) {
      if (ln.magnitude > best_mag) {
        best_mag = ln.magnitude;
        best_freq = ln.freq_hz;
      }
    }
  }
  if (best_mag < 0.0)
    throw InvalidArgument("strongest_line_freq: app has no pairs in band " +
                          std::to_string(band_index));
  return band_center_hz + best_freq;
}

}  // namespace emsim
