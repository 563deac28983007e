#include "emsim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <set>

#include <json.hpp>

#include "emsim/signature.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace emsim {

namespace {

std::string join_path(const std::string& dir, const char* rel) {
  return (fs::path(dir) / rel).string();
}

bool file_exists(const std::string& p) { return fs::exists(fs::path(p)); }

json parse_json_file(const std::string& path, const char* who) {
  json j = json::parse(read_text(path), nullptr, false);
  if (j.is_discarded()) throw IoError(std::string(who) + ": malformed JSON in " + path);
  return j;
}

// The daemon only participates when its power is finite.
const ObfuscationSpec* obf_ptr(const ExperimentPlan& plan) {
  if (std::isinf(plan.obfuscation.power_db) && plan.obfuscation.power_db < 0.0) return nullptr;
  return &plan.obfuscation;
}

struct ManifestInfo {
  std::string plan_hash;
  std::vector<std::string> class_names;
  std::vector<std::uint64_t> train_caps, val_caps, test_caps;
};

ManifestInfo load_manifest(const std::string& path, const char* who) {
  json m = parse_json_file(path, who);
  ManifestInfo info;
  try {
    info.plan_hash = m.at("plan_hash").get<std::string>();
    info.class_names = m.at("class_names").get<std::vector<std::string>>();
    info.train_caps = m.at("split").at("train").get<std::vector<std::uint64_t>>();
    info.val_caps = m.at("split").at("validation").get<std::vector<std::uint64_t>>();
    info.test_caps = m.at("split").at("test").get<std::vector<std::uint64_t>>();
  } catch (const json::exception& e) {
    throw IoError(std::string(who) + ": manifest field missing in " + path + ": " + e.what());
  }
  return info;
}

ManifestInfo require_manifest(const RunPaths& paths, const std::string& hash, const char* who) {
  if (!file_exists(paths.manifest))
    throw IoError(std::string(who) + ": dataset manifest missing, run the dataset stage first: " +
                  paths.manifest);
  ManifestInfo man = load_manifest(paths.manifest, who);
  if (man.plan_hash != hash)
    throw IoError(std::string(who) + ": dataset in " + paths.dataset_dir +
                  " was built from a different plan (hash " + man.plan_hash + ", expected " + hash +
                  ")");
  return man;
}

}  // namespace

std::string format_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

RunPaths run_paths(const std::string& out_dir) {
  RunPaths p;
  p.root = out_dir;
  p.resolved_plan = join_path(out_dir, "resolved_plan.json");
  p.dataset_dir = join_path(out_dir, "dataset");
  p.manifest = join_path(out_dir, "dataset/manifest.json");
  p.appid_table = join_path(out_dir, "dataset/appid.emsd");
  p.activity_table = join_path(out_dir, "dataset/activity.emsd");
  p.models_dir = join_path(out_dir, "models");
  p.appid_ckpt = join_path(out_dir, "models/appid.ckpt");
  p.activity_ckpt = join_path(out_dir, "models/activity.ckpt");
  p.appid_trainlog = join_path(out_dir, "models/appid_train_log.json");
  p.activity_trainlog = join_path(out_dir, "models/activity_train_log.json");
  p.metrics_dir = join_path(out_dir, "metrics");
  p.appid_metrics = join_path(out_dir, "metrics/appid.json");
  p.activity_metrics = join_path(out_dir, "metrics/activity.json");
  p.appid_confusion = join_path(out_dir, "metrics/appid_confusion.csv");
  p.activity_confusion = join_path(out_dir, "metrics/activity_confusion.csv");
  p.sweeps_dir = join_path(out_dir, "sweeps");
  p.captures_dir = join_path(out_dir, "captures");
  p.report = join_path(out_dir, "report.json");
  return p;
}

DatasetSplit split_from_captures(const FeatureTable& table,
                                 const std::vector<std::uint64_t>& train_caps,
                                 const std::vector<std::uint64_t>& val_caps,
                                 const std::vector<std::uint64_t>& test_caps) {
  std::set<std::uint64_t> tr(train_caps.begin(), train_caps.end());
  std::set<std::uint64_t> va(val_caps.begin(), val_caps.end());
  std::set<std::uint64_t> te(test_caps.begin(), test_caps.end());
  DatasetSplit split;
  split.train_captures = train_caps;
  split.validation_captures = val_caps;
  split.test_captures = test_caps;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const std::uint64_t id = table.meta[i].capture_id;
    if (tr.count(id))
      split.train.push_back(i);
    else if (va.count(id))
      split.validation.push_back(i);
    else if (te.count(id))
      split.test.push_back(i);
    else
      throw IoError("split_from_captures: capture " + std::to_string(id) +
                    " is not assigned to any split; manifest and table are out of sync");
  }
  if (split.train.empty() || split.validation.empty() || split.test.empty())
    throw IoError("split_from_captures: a split has no examples in this table");
  return split;
}

void run_dataset(const ExperimentPlan& plan, const std::string& out_dir) {
  const ExperimentPlan resolved = resolve_plan(plan);
  const std::string hash = plan_hash(resolved);
  const RunPaths paths = run_paths(out_dir);
  fs::create_directories(fs::path(paths.dataset_dir));
  write_text_atomic(paths.resolved_plan, plan_to_json(resolved));

  if (file_exists(paths.manifest) && file_exists(paths.appid_table) &&
      file_exists(paths.activity_table)) {
    json m = parse_json_file(paths.manifest, "run_dataset");
    if (m.value("plan_hash", "") == hash) return;
  }

  const std::vector<SceneConfig> scenes = expand_scenes(resolved);
  FeatureTable appid, activity;
  build_datasets(scenes, resolved.pipeline, obf_ptr(resolved), &resolved.apps, &appid, &activity);
  const DatasetSplit split = split_dataset(appid, resolved.train_ratio, resolved.val_ratio,
                                           resolved.test_ratio, resolved.split_seed);
  save_feature_table(appid, paths.appid_table);
  save_feature_table(activity, paths.activity_table);

  json m;
  m["format_version"] = 1;
  m["plan_hash"] = hash;
  m["plan_name"] = resolved.name;
  m["master_seed"] = resolved.master_seed;
  m["class_names"] = appid.class_names;
  m["split_seed"] = resolved.split_seed;
  m["split"]["train"] = split.train_captures;
  m["split"]["validation"] = split.validation_captures;
  m["split"]["test"] = split.test_captures;
  m["examples"]["appid"] = appid.size();
  m["examples"]["activity"] = activity.size();
  m["skipped_chunks"]["appid"] = appid.skipped_chunks;
  m["skipped_chunks"]["activity"] = activity.skipped_chunks;
  write_text_atomic(paths.manifest, m.dump(2) + "\n");
}

namespace {

void train_task(const ExperimentPlan& resolved, const std::string& hash, const ManifestInfo& man,
                const RunPaths& paths, TaskKind task) {
  const bool appid = task == TaskKind::AppId;
  const std::string& table_path = appid ? paths.appid_table : paths.activity_table;
  const std::string& ckpt_path = appid ? paths.appid_ckpt : paths.activity_ckpt;
  const std::string& log_path = appid ? paths.appid_trainlog : paths.activity_trainlog;
  const TrainConfig& cfg = appid ? resolved.appid_train : resolved.activity_train;

  if (file_exists(ckpt_path) && file_exists(log_path)) {
    json lg = parse_json_file(log_path, "run_train");
    if (lg.value("plan_hash", "") == hash) return;
  }

  FeatureTable table = load_feature_table(table_path);
  const DatasetSplit split =
      split_from_captures(table, man.train_caps, man.val_caps, man.test_caps);
  ConvNetModel model =
      appid ? make_appid_model(table.dim(), table.class_names.size(), cfg.seed)
            : make_activity_model(table.feat_h, table.feat_w, table.class_names.size(), cfg.seed);
  model.scaler = fit_standardizer(table, split.train);
  const TrainLog log = train(model, table.features.data(), table.dim(), table.labels, split.train,
                             split.validation, cfg);
  save_checkpoint(model, ckpt_path);

  json lj;
  lj["task"] = task_name(task);
  lj["plan_hash"] = hash;
  lj["seed"] = cfg.seed;
  lj["best_epoch"] = log.best_epoch;
  lj["best_val_accuracy"] = log.best_val_accuracy;
  lj["epochs"] = json::array();
  for (const EpochStats& e : log.epochs)
    lj["epochs"].push_back(
        {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_accuracy", e.val_accuracy}});
  write_text_atomic(log_path, lj.dump(2) + "\n");
}

void eval_task(const std::string& hash, std::uint64_t master_seed, const ManifestInfo& man,
               const RunPaths& paths, TaskKind task) {
  const bool appid = task == TaskKind::AppId;
  const std::string& table_path = appid ? paths.appid_table : paths.activity_table;
  const std::string& ckpt_path = appid ? paths.appid_ckpt : paths.activity_ckpt;
  const std::string& metrics_path = appid ? paths.appid_metrics : paths.activity_metrics;
  const std::string& confusion_path = appid ? paths.appid_confusion : paths.activity_confusion;

  if (file_exists(metrics_path) && file_exists(confusion_path)) {
    json mg = parse_json_file(metrics_path, "run_eval");
    if (mg.value("plan_hash", "") == hash) return;
  }

  FeatureTable table = load_feature_table(table_path);
  const DatasetSplit split =
      split_from_captures(table, man.train_caps, man.val_caps, man.test_caps);
  const ConvNetModel model = load_checkpoint(ckpt_path);
  const Metrics m =
      evaluate(model, table.features.data(), table.dim(), table.labels, split.test);

  json mj = json::parse(metrics_to_json(m, table.class_names));
  mj["task"] = task_name(task);
  mj["plan_hash"] = hash;
  mj["master_seed"] = master_seed;
  mj["n_test_examples"] = split.test.size();
  write_text_atomic(metrics_path, mj.dump(2) + "\n");
  write_text_atomic(confusion_path, confusion_to_csv(m, table.class_names));
}

}  // namespace

void run_train(const ExperimentPlan& plan, const std::string& out_dir) {
  run_dataset(plan, out_dir);
  const ExperimentPlan resolved = resolve_plan(plan);
  const std::string hash = plan_hash(resolved);
  const RunPaths paths = run_paths(out_dir);
  fs::create_directories(fs::path(paths.models_dir));
  const ManifestInfo man = require_manifest(paths, hash, "run_train");
  train_task(resolved, hash, man, paths, TaskKind::AppId);
  train_task(resolved, hash, man, paths, TaskKind::Activity);
}

void run_eval(const ExperimentPlan& plan, const std::string& out_dir) {
  run_train(plan, out_dir);
  const ExperimentPlan resolved = resolve_plan(plan);
  const std::string hash = plan_hash(resolved);
  const RunPaths paths = run_paths(out_dir);
  fs::create_directories(fs::path(paths.metrics_dir));
  const ManifestInfo man = require_manifest(paths, hash, "run_eval");
  eval_task(hash, resolved.master_seed, man, paths, TaskKind::AppId);
  eval_task(hash, resolved.master_seed, man, paths, TaskKind::Activity);
}

namespace {

// One probe capture's USNR at the app's strongest predicted line.
double probe_usnr_once(const ExperimentPlan& resolved, const AppSignature& app, double distance_m,
                       double orientation_deg, double duration_s, std::size_t seed_idx) {
  const SceneConfig sc = make_probe_scene(resolved, app, ActivityPhase::Running, distance_m,
                                          orientation_deg, duration_s, seed_idx, 0);
  const IQRecording active = capture(sc, CaptureState::Active);
  const IQRecording idle = capture(sc, CaptureState::Idle);

  // Average every frame the probe provides so longer captures integrate more.
  PipelineConfig cfg = resolved.pipeline;
  cfg.avg_frames = active.samples.size() / cfg.fft_size;
  cfg.chunk_samples = active.samples.size();
  const SpectrumFrame residual = process_band(active, idle, cfg);
  const double line = strongest_line_freq(app, ActivityPhase::Running, 0, sc.band_center_hz);
  return usnr(residual, line).usnr_db;
}

double mean_probe_usnr_at(const ExperimentPlan& resolved, double distance_m,
                          double orientation_deg, double duration_s, std::size_t n_seeds) {
  if (n_seeds == 0) throw InvalidArgument("mean_probe_usnr: n_seeds must be positive");
  const std::vector<AppSignature> catalog = build_default_catalog(resolved.sample_rate_hz);
  double sum = 0.0;
  for (std::size_t s = 0; s < n_seeds; ++s) {
    const AppSignature& app =
        find_app(catalog, resolved.apps[s % resolved.apps.size()]);
    sum += probe_usnr_once(resolved, app, distance_m, orientation_deg, duration_s, s);
  }
  return sum / static_cast<double>(n_seeds);
}

void sweep_bands(const ExperimentPlan& resolved, const std::string& hash, const RunPaths& paths) {
  const ManifestInfo man = require_manifest(paths, hash, "sweep bands");
  const FeatureTable full = load_feature_table(paths.appid_table);
  const std::size_t n_bands = resolved.band_centers_hz.size();
  std::string csv = "n_bands,test_accuracy,train_seed\n";
  for (std::size_t k = 1; k <= n_bands; ++k) {
    FeatureTable sub = slice_bands(full, k, resolved.pipeline.fft_size);
    const DatasetSplit split =
        split_from_captures(sub, man.train_caps, man.val_caps, man.test_caps);
    TrainConfig cfg = resolved.appid_train;
    cfg.seed = derive_seed(resolved.appid_train.seed, "bands", k);
    ConvNetModel model = make_appid_model(sub.dim(), sub.class_names.size(), cfg.seed);
    model.scaler = fit_standardizer(sub, split.train);
    train(model, sub.features.data(), sub.dim(), sub.labels, split.train, split.validation, cfg);
    const Metrics m = evaluate(model, sub.features.data(), sub.dim(), sub.labels, split.test);
    csv += std::to_string(k) + "," + format_double(m.accuracy) + "," + std::to_string(cfg.seed) +
           "\n";
  }
  write_text_atomic(join_path(paths.sweeps_dir, "bands.csv"), csv);
}

void sweep_duration(const ExperimentPlan& resolved, const RunPaths& paths) {
  std::string csv = "duration_s,mean_usnr_db,n_seeds\n";
  for (double dur : resolved.sweep.durations_s) {
    const double m = mean_probe_usnr_at(resolved, resolved.channel.distance_m,
                                        resolved.channel.orientation_deg, dur,
                                        resolved.sweep.n_seeds);
    csv += format_double(dur) + "," + format_double(m) + "," +
           std::to_string(resolved.sweep.n_seeds) + "\n";
  }
  write_text_atomic(join_path(paths.sweeps_dir, "duration.csv"), csv);
}

void sweep_probe_axis(const ExperimentPlan& resolved, const RunPaths& paths, bool distance) {
  const std::vector<double>& points =
      distance ? resolved.sweep.distances_m : resolved.sweep.orientations_deg;
  std::string csv = distance ? "distance_m,mean_usnr_db,n_seeds\n"
                             : "orientation_deg,mean_usnr_db,n_seeds\n";
  for (double v : points) {
    const double d = distance ? v : resolved.channel.distance_m;
    const double o = distance ? resolved.channel.orientation_deg : v;
    const double m =
        mean_probe_usnr_at(resolved, d, o, resolved.sweep.probe_duration_s, resolved.sweep.n_seeds);
    csv += format_double(v) + "," + format_double(m) + "," +
           std::to_string(resolved.sweep.n_seeds) + "\n";
  }
  write_text_atomic(join_path(paths.sweeps_dir, distance ? "distance.csv" : "orientation.csv"),
                    csv);
}

void sweep_obfuscation(const ExperimentPlan& resolved, const std::string& hash,
                       const RunPaths& paths) {
  const ManifestInfo man = require_manifest(paths, hash, "sweep obfuscation");
  if (!file_exists(paths.appid_ckpt))
    throw IoError("sweep obfuscation: model checkpoint missing, run the train stage first: " +
                  paths.appid_ckpt);
  const ConvNetModel model = load_checkpoint(paths.appid_ckpt);

  double baseline = 0.0;
  {
    FeatureTable full = load_feature_table(paths.appid_table);
    const DatasetSplit split =
        split_from_captures(full, man.train_caps, man.val_caps, man.test_caps);
    baseline =
        evaluate(model, full.features.data(), full.dim(), full.labels, split.test).accuracy;
  }

  // Only the test captures are resynthesized; the model and its scaler stay
  // exactly as trained.
  const std::set<std::uint64_t> test_ids(man.test_caps.begin(), man.test_caps.end());
  std::vector<SceneConfig> test_scenes;
  for (const SceneConfig& sc : expand_scenes(resolved))
    if (test_ids.count(sc.capture_id)) test_scenes.push_back(sc);

  std::string csv = "obfuscation_power_db,test_accuracy,baseline_accuracy\n";
  for (double p : resolved.sweep.obfuscation_power_db) {
    ObfuscationSpec obf = resolved.obfuscation;
    obf.power_db = p;
    const bool off = std::isinf(p) && p < 0.0;
    const FeatureTable t = build_dataset(test_scenes, TaskKind::AppId, resolved.pipeline,
                                         off ? nullptr : &obf, &man.class_names);
    std::vector<std::size_t> idx(t.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const double acc = evaluate(model, t.features.data(), t.dim(), t.labels, idx).accuracy;
    csv += format_double(p) + "," + format_double(acc) + "," + format_double(baseline) + "\n";
  }
  write_text_atomic(join_path(paths.sweeps_dir, "obfuscation.csv"), csv);
}

}  // namespace

double mean_probe_usnr(const ExperimentPlan& plan, double distance_m, double orientation_deg,
                       std::size_t n_seeds) {
  const ExperimentPlan resolved = resolve_plan(plan);
  return mean_probe_usnr_at(resolved, distance_m, orientation_deg,
                            resolved.sweep.probe_duration_s, n_seeds);
}

void run_sweep(const ExperimentPlan& plan, const std::string& out_dir, const std::string& kind) {
  const ExperimentPlan resolved = resolve_plan(plan);
  const std::string hash = plan_hash(resolved);
  const RunPaths paths = run_paths(out_dir);
  fs::create_directories(fs::path(paths.sweeps_dir));
  if (kind == "bands") {
    run_dataset(resolved, out_dir);
    sweep_bands(resolved, hash, paths);
  } else if (kind == "duration") {
    sweep_duration(resolved, paths);
  } else if (kind == "distance") {
    sweep_probe_axis(resolved, paths, true);
  } else if (kind == "orientation") {
    sweep_probe_axis(resolved, paths, false);
  } else if (kind == "obfuscation") {
    run_train(resolved, out_dir);
    sweep_obfuscation(resolved, hash, paths);
  } else {
    throw InvalidArgument("run_sweep: unknown kind '" + kind +
                          "' (expected bands, duration, distance, orientation or obfuscation)");
  }
}

void run_report(const std::string& out_dir) {
  const RunPaths paths = run_paths(out_dir);
  std::vector<std::string> missing;
  auto need = [&](const std::string& p) {
    if (!file_exists(p)) missing.push_back(p);
  };
  need(paths.resolved_plan);
  need(paths.manifest);
  need(paths.appid_ckpt);
  need(paths.activity_ckpt);
  need(paths.appid_trainlog);
  need(paths.activity_trainlog);
  need(paths.appid_metrics);
  need(paths.activity_metrics);
  need(paths.appid_confusion);
  need(paths.activity_confusion);
  if (!missing.empty()) {
    std::string msg = "report: missing artifacts:";
    for (const std::string& m : missing) msg += " " + m;
    throw IoError(msg);
  }

  json r;
  r["format_version"] = 1;
  r["plan"] = parse_json_file(paths.resolved_plan, "report");
  r["dataset"] = parse_json_file(paths.manifest, "report");
  r["plan_hash"] = r["dataset"].value("plan_hash", "");
  r["train_logs"]["appid"] = parse_json_file(paths.appid_trainlog, "report");
  r["train_logs"]["activity"] = parse_json_file(paths.activity_trainlog, "report");
  r["metrics"]["appid"] = parse_json_file(paths.appid_metrics, "report");
  r["metrics"]["activity"] = parse_json_file(paths.activity_metrics, "report");
  r["confusion_csv"]["appid"] = read_text(paths.appid_confusion);
  r["confusion_csv"]["activity"] = read_text(paths.activity_confusion);
  r["checkpoints"]["appid"] = {{"path", "models/appid.ckpt"},
                               {"fnv1a64", to_hex(fnv1a64(read_text(paths.appid_ckpt)))}};
  r["checkpoints"]["activity"] = {{"path", "models/activity.ckpt"},
                                  {"fnv1a64", to_hex(fnv1a64(read_text(paths.activity_ckpt)))}};
  for (const char* name : {"bands", "duration", "distance", "orientation", "obfuscation"}) {
    const std::string p = join_path(paths.sweeps_dir, (std::string(name) + ".csv").c_str());
    if (file_exists(p)) r["sweeps"][name] = read_text(p);
  }
  write_text_atomic(paths.report, r.dump(2) + "\n");
}

std::vector<std::string> run_synth(const ExperimentPlan& plan, const std::string& out_dir,
                                   std::size_t max_captures) {
  const ExperimentPlan resolved = resolve_plan(plan);
  const RunPaths paths = run_paths(out_dir);
  fs::create_directories(fs::path(paths.captures_dir));
  write_text_atomic(paths.resolved_plan, plan_to_json(resolved));

  const ObfuscationSpec* obf = obf_ptr(resolved);
  std::vector<std::string> written;
  std::set<std::uint64_t> kept;
  for (const SceneConfig& sc : expand_scenes(resolved)) {
    if (max_captures > 0 && !kept.count(sc.capture_id)) {
      if (kept.size() >= max_captures) continue;
      kept.insert(sc.capture_id);
    }
    for (CaptureState st : {CaptureState::Active, CaptureState::Idle}) {
      const bool is_active = st == CaptureState::Active;
      const IQRecording iq = capture(sc, st, is_active ? obf : nullptr);
      char name[64];
      std::snprintf(name, sizeof name, "cap%05llu_band%d_%s.iq",
                    static_cast<unsigned long long>(sc.capture_id), sc.band_index,
                    is_active ? "active" : "idle");
      const std::string path = join_path(paths.captures_dir, name);
      save_iq_pair(iq, path, scene_fingerprint(sc), is_active ? "active" : "idle");
      written.push_back(path);
    }
  }
  return written;
}

void run_process(const std::string& active_path, const std::string& idle_path,
                 const PipelineConfig& cfg, const std::string& out_dir, bool with_stft) {
  SidecarInfo ia, ii;
  const IQRecording active = load_iq_pair(active_path, &ia);
  const IQRecording idle = load_iq_pair(idle_path, &ii);
  if (active.sample_rate_hz != idle.sample_rate_hz ||
      active.center_frequency_hz != idle.center_frequency_hz)
    throw InvalidArgument(
        "process: Active and Idle captures disagree on the frequency axis (rate " +
        format_double(active.sample_rate_hz) + " vs " + format_double(idle.sample_rate_hz) +
        ", center " + format_double(active.center_frequency_hz) + " vs " +
        format_double(idle.center_frequency_hz) + ")");

  fs::create_directories(fs::path(out_dir));
  PipelineConfig c = cfg;
  const std::size_t frames_avail =
      std::min(active.samples.size(), idle.samples.size()) / c.fft_size;
  c.avg_frames = std::min(c.avg_frames, frames_avail);
  c.chunk_samples = std::max(c.chunk_samples, active.samples.size());
  const SpectrumFrame residual = process_band(active, idle, c);
  const std::vector<Spike> spikes = detect_spikes(residual, c.spike_threshold_db);

  json sj;
  sj["threshold_db"] = c.spike_threshold_db;
  sj["avg_frames"] = c.avg_frames;
  sj["spike_count"] = spikes.size();
  sj["state"] = spikes.empty() ? "idle" : "active";
  sj["active_sidecar_state"] = ia.state;
  sj["idle_sidecar_state"] = ii.state;
  sj["spikes"] = json::array();
  for (const Spike& s : spikes) {
    const UsnrReport u = usnr(residual, s.freq_hz);
    sj["spikes"].push_back({{"freq_hz", s.freq_hz},
                            {"power_db", s.power_db},
                            {"usnr_db", u.usnr_db},
                            {"peak_db", u.peak_db},
                            {"floor_db", u.floor_db}});
  }
  write_text_atomic(join_path(out_dir, "spikes.json"), sj.dump(2) + "\n");
  write_text_atomic(join_path(out_dir, "residual.csv"), frame_to_csv(residual));
  if (with_stft) {
    const Spectrogram sg = stft_spectrogram(active, c);
    write_text_atomic(join_path(out_dir, "spectrogram.csv"), spectrogram_to_csv(sg));
  }
}

}  // namespace emsim
