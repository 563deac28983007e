#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "emsim/harness.hpp"
#include "emsim/iofile.hpp"
#include "emsim/nn.hpp"
#include "emsim/plan.hpp"

#include <nlohmann/json.hpp>

using namespace emsim;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Two apps, one phase, ten captures of five chunks each.  Small enough that
// every stage runs in seconds while still exercising multi-band grouping,
// splitting and both training tasks.
ExperimentPlan tiny_plan() {
  ExperimentPlan p = default_plan("desk");
  p.name = "tiny";
  p.sample_rate_hz = 2.5e5;
  p.duration_s = 0.0205;
  p.band_centers_hz = {600e6, 602e6};
  p.pipeline.fft_size = 256;
  p.pipeline.avg_frames = 4;
  p.pipeline.movmedian_len = 61;
  p.pipeline.stft_window_len = 256;
  p.pipeline.stft_hop = 256;
  p.pipeline.chunk_samples = 1024;
  p.apps = {"arcade", "racer"};
  p.phases = {ActivityPhase::Running};
  p.seeds_per_cell = 5;
  p.appid_train.epochs = 2;
  p.appid_train.batch_size = 8;
  p.appid_train.learning_rate = 0.01;
  p.activity_train.epochs = 2;
  p.activity_train.batch_size = 8;
  p.activity_train.learning_rate = 0.01;
  p.sweep.distances_m = {0.5, 1.0};
  p.sweep.orientations_deg = {90.0, 180.0};
  p.sweep.durations_s = {0.0205};
  p.sweep.n_seeds = 2;
  p.sweep.probe_duration_s = 0.0205;
  return p;
}

std::string fresh_dir(const std::string& name) {
  const std::string dir = "/tmp/emsim_harness/" + name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const std::string& path) { return read_text(path); }

template <class E, class F>
std::string thrown_what(F&& f) {
  try {
    f();
  } catch (const E& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("run_paths lays out the artifact tree under one root") {
  RunPaths p = run_paths("/data/runs/x");
  CHECK(p.root == "/data/runs/x");
  CHECK(p.resolved_plan == "/data/runs/x/resolved_plan.json");
  CHECK(p.manifest == "/data/runs/x/dataset/manifest.json");
  CHECK(p.appid_table == "/data/runs/x/dataset/appid.emsd");
  CHECK(p.activity_table == "/data/runs/x/dataset/activity.emsd");
  CHECK(p.appid_ckpt == "/data/runs/x/models/appid.ckpt");
  CHECK(p.activity_ckpt == "/data/runs/x/models/activity.ckpt");
  CHECK(p.appid_metrics == "/data/runs/x/metrics/appid.json");
  CHECK(p.activity_confusion == "/data/runs/x/metrics/activity_confusion.csv");
  CHECK(p.sweeps_dir == "/data/runs/x/sweeps");
  CHECK(p.captures_dir == "/data/runs/x/captures");
  CHECK(p.report == "/data/runs/x/report.json");
}

TEST_CASE("split_from_captures reassembles the manifest partition") {
  FeatureTable t;
  t.feat_w = 2;
  t.class_names = {"a", "b"};
  for (std::uint64_t cap : {1ull, 1ull, 2ull, 3ull, 3ull}) {
    t.features.insert(t.features.end(), {float(cap), 0.0f});
    t.labels.push_back(int(cap) % 2);
    ExampleMeta m;
    m.capture_id = cap;
    t.meta.push_back(m);
  }

  DatasetSplit s = split_from_captures(t, {1}, {2}, {3});
  CHECK(s.train == std::vector<std::size_t>{0, 1});
  CHECK(s.validation == std::vector<std::size_t>{2});
  CHECK(s.test == std::vector<std::size_t>{3, 4});

  // A capture the manifest never assigned is a hard error, not a silent drop.
  auto msg = thrown_what<IoError>([&] { split_from_captures(t, {1}, {2}, {4}); });
  CHECK(msg.find("capture 3") != std::string::npos);

  auto empty = thrown_what<IoError>([&] { split_from_captures(t, {1, 2, 3}, {}, {}); });
  CHECK(empty.find("no examples") != std::string::npos);
}

TEST_CASE("dataset stage writes tables and a manifest, then resumes by hash") {
  const std::string dir = fresh_dir("dataset");
  ExperimentPlan plan = tiny_plan();
  run_dataset(plan, dir);
  RunPaths paths = run_paths(dir);

  json man = json::parse(slurp(paths.manifest));
  CHECK(man.at("plan_hash").get<std::string>() == plan_hash(resolve_plan(plan)));
  CHECK(man.at("split").at("train").size() == 7);
  CHECK(man.at("split").at("validation").size() == 1);
  CHECK(man.at("split").at("test").size() == 2);
  CHECK(man.at("class_names") == json({"arcade", "racer"}));

  FeatureTable appid = load_feature_table(paths.appid_table);
  CHECK(appid.size() == 50);  // 10 captures x 5 chunks
  CHECK(appid.feat_w == 512);  // 2 bands x 256 bins
  FeatureTable act = load_feature_table(paths.activity_table);
  CHECK(act.size() == 50);
  CHECK(act.feat_h == 4);
  CHECK(act.feat_w == 256);

  // Matching hash + existing tables short-circuit the stage: poison a table
  // and the junk must survive a second call untouched.
  const std::string original = slurp(paths.appid_table);
  write_text_atomic(paths.appid_table, "JUNK");
  run_dataset(plan, dir);
  CHECK(slurp(paths.appid_table) == "JUNK");

  // Dropping the manifest forces a rebuild that reproduces the table bitwise.
  fs::remove(paths.manifest);
  run_dataset(plan, dir);
  CHECK(slurp(paths.appid_table) == original);
}

TEST_CASE("train and eval stages chain, resume and evaluate the saved best model") {
  const std::string dir = fresh_dir("traineval");
  ExperimentPlan plan = tiny_plan();
  run_eval(plan, dir);
  RunPaths paths = run_paths(dir);

  for (const std::string& p :
       {paths.resolved_plan, paths.manifest, paths.appid_ckpt, paths.activity_ckpt,
        paths.appid_trainlog, paths.activity_trainlog, paths.appid_metrics,
        paths.activity_metrics, paths.appid_confusion, paths.activity_confusion})
    CHECK(fs::exists(p));

  json metrics = json::parse(slurp(paths.appid_metrics));
  CHECK(metrics.at("task") == "appid");
  CHECK(metrics.at("n_test_examples") == 10);
  double acc = metrics.at("accuracy").get<double>();
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);

  // The metric must equal a fresh evaluation of the stored checkpoint on the
  // manifest's test captures.
  FeatureTable table = load_feature_table(paths.appid_table);
  json man = json::parse(slurp(paths.manifest));
  DatasetSplit split = split_from_captures(
      table, man.at("split").at("train").get<std::vector<std::uint64_t>>(),
      man.at("split").at("validation").get<std::vector<std::uint64_t>>(),
      man.at("split").at("test").get<std::vector<std::uint64_t>>());
  ConvNetModel model = load_checkpoint(paths.appid_ckpt);
  Metrics again = evaluate(model, table.features.data(), table.dim(), table.labels, split.test);
  CHECK(again.accuracy == acc);

  json act = json::parse(slurp(paths.activity_metrics));
  CHECK(act.at("task") == "activity");
  CHECK(act.at("class_names").size() == 4);

  // Eval is resumable: metric files survive a rerun byte for byte.
  const std::string before = slurp(paths.appid_metrics);
  run_eval(plan, dir);
  CHECK(slurp(paths.appid_metrics) == before);
}

TEST_CASE("identical plans reproduce every artifact byte for byte") {
  ExperimentPlan plan = tiny_plan();
  const std::string a = fresh_dir("rerun_a");
  const std::string b = fresh_dir("rerun_b");
  run_eval(plan, a);
  run_eval(plan, b);
  run_report(a);
  run_report(b);
  RunPaths pa = run_paths(a), pb = run_paths(b);

  CHECK(slurp(pa.appid_table) == slurp(pb.appid_table));
  CHECK(slurp(pa.activity_table) == slurp(pb.activity_table));
  CHECK(slurp(pa.appid_ckpt) == slurp(pb.appid_ckpt));
  CHECK(slurp(pa.appid_metrics) == slurp(pb.appid_metrics));
  CHECK(slurp(pa.activity_metrics) == slurp(pb.activity_metrics));
  CHECK(slurp(pa.report) == slurp(pb.report));
}

TEST_CASE("report collects artifacts and lists everything missing at once") {
  const std::string dir = fresh_dir("report_missing");
  RunPaths paths = run_paths(dir);
  auto msg = thrown_what<IoError>([&] { run_report(dir); });
  CHECK(msg.find("missing artifacts:") != std::string::npos);
  CHECK(msg.find(paths.resolved_plan) != std::string::npos);
  CHECK(msg.find(paths.appid_metrics) != std::string::npos);
  CHECK(msg.find(paths.activity_confusion) != std::string::npos);

  // A complete run reports cleanly and the document is reproducible.
  const std::string full = fresh_dir("report_full");
  ExperimentPlan plan = tiny_plan();
  run_eval(plan, full);
  run_report(full);
  RunPaths fp = run_paths(full);
  json rep = json::parse(slurp(fp.report));
  CHECK(rep.at("format_version") == 1);
  CHECK(rep.at("plan_hash") == plan_hash(resolve_plan(plan)));
  CHECK(rep.at("metrics").at("appid").at("task") == "appid");
  CHECK(rep.at("checkpoints").at("appid").at("fnv1a64").get<std::string>().size() == 16);
  CHECK(!rep.contains("sweeps"));

  const std::string once = slurp(fp.report);
  run_report(full);
  CHECK(slurp(fp.report) == once);
}

TEST_CASE("synth writes sidecarred IQ pairs and honors the capture cap") {
  const std::string dir = fresh_dir("synth");
  ExperimentPlan plan = tiny_plan();
  auto files = run_synth(plan, dir, 1);

  // One capture, two bands, Active + Idle.
  REQUIRE(files.size() == 4);
  RunPaths paths = run_paths(dir);
  CHECK(files[0] == paths.captures_dir + "/cap00001_band0_active.iq");
  CHECK(files[1] == paths.captures_dir + "/cap00001_band0_idle.iq");
  CHECK(files[2] == paths.captures_dir + "/cap00001_band1_active.iq");
  CHECK(fs::exists(files[0] + ".json"));

  SidecarInfo info;
  IQRecording rec = load_iq_pair(files[0], &info);
  CHECK(rec.samples.size() == 5125);
  CHECK(info.sample_rate_hz == 2.5e5);
  CHECK(info.center_frequency_hz == 600e6);
  CHECK(info.state == "active");
  CHECK(info.scene_fingerprint.size() == 16);

  // Uncapped synth covers the whole grid.
  const std::string all_dir = fresh_dir("synth_all");
  auto all = run_synth(plan, all_dir, 0);
  CHECK(all.size() == 10 * 2 * 2);
}

TEST_CASE("process reports spikes for Active pairs and silence for Idle pairs") {
  const std::string dir = fresh_dir("process_src");
  ExperimentPlan plan = tiny_plan();
  auto files = run_synth(plan, dir, 1);

  const std::string out = fresh_dir("process_out");
  run_process(files[0], files[1], plan.pipeline, out, true);
  json spikes = json::parse(slurp(out + "/spikes.json"));
  CHECK(spikes.at("state") == "active");
  CHECK(spikes.at("spike_count").get<int>() >= 1);
  CHECK(spikes.at("active_sidecar_state") == "active");
  CHECK(spikes.at("spikes")[0].contains("usnr_db"));
  const std::string residual = slurp(out + "/residual.csv");
  CHECK(residual.rfind("freq_hz,", 0) == 0);
  const std::string gram = slurp(out + "/spectrogram.csv");
  CHECK(gram.rfind("time_s,", 0) == 0);

  // Idle against itself cancels exactly: no spikes, no spectrogram file.
  const std::string quiet = fresh_dir("process_quiet");
  run_process(files[1], files[1], plan.pipeline, quiet, false);
  json none = json::parse(slurp(quiet + "/spikes.json"));
  CHECK(none.at("state") == "idle");
  CHECK(none.at("spike_count") == 0);
  CHECK(!fs::exists(quiet + "/spectrogram.csv"));

  // Captures from different radio settings do not subtract.
  ExperimentPlan other = tiny_plan();
  other.sample_rate_hz = 5e5;
  other.duration_s = 0.01025;
  const std::string odir = fresh_dir("process_other");
  auto ofiles = run_synth(other, odir, 1);
  auto msg = thrown_what<InvalidArgument>(
      [&] { run_process(files[0], ofiles[1], plan.pipeline, out, false); });
  CHECK(msg.find("frequency axis") != std::string::npos);
}

TEST_CASE("probe sweeps write CSV curves over the requested axes") {
  const std::string dir = fresh_dir("sweep_probe");
  ExperimentPlan plan = tiny_plan();
  run_sweep(plan, dir, "duration");
  run_sweep(plan, dir, "distance");
  run_sweep(plan, dir, "orientation");
  RunPaths paths = run_paths(dir);

  const std::string dur = slurp(paths.sweeps_dir + "/duration.csv");
  CHECK(dur.rfind("duration_s,mean_usnr_db,n_seeds", 0) == 0);
  CHECK(dur.find("\n0.0205,") != std::string::npos);

  const std::string dist = slurp(paths.sweeps_dir + "/distance.csv");
  const auto lines = std::count(dist.begin(), dist.end(), '\n');
  CHECK(lines == 3);  // header + one row per distance
  CHECK(dist.find("\n0.5,") != std::string::npos);
  CHECK(dist.find("\n1,") != std::string::npos);

  const std::string orient = slurp(paths.sweeps_dir + "/orientation.csv");
  CHECK(orient.rfind("orientation_deg,", 0) == 0);
  CHECK(orient.find("\n180,") != std::string::npos);

  CHECK_THROWS_AS(run_sweep(plan, dir, "voltage"), InvalidArgument);
}

TEST_CASE("mean probe USNR is deterministic and favors the close antenna") {
  ExperimentPlan plan = tiny_plan();
  double near = mean_probe_usnr(plan, 0.5, 90.0, 2);
  double near_again = mean_probe_usnr(plan, 0.5, 90.0, 2);
  double far = mean_probe_usnr(plan, 4.0, 90.0, 2);
  CHECK(near == near_again);
  CHECK(std::isfinite(near));
  CHECK(near > far);
}

TEST_CASE("bands sweep retrains on band prefixes of the stored table") {
  const std::string dir = fresh_dir("sweep_bands");
  ExperimentPlan plan = tiny_plan();
  run_dataset(plan, dir);
  run_sweep(plan, dir, "bands");
  RunPaths paths = run_paths(dir);

  const std::string csv = slurp(paths.sweeps_dir + "/bands.csv");
  CHECK(csv.rfind("n_bands,test_accuracy,train_seed", 0) == 0);
  CHECK(csv.find("\n1,") != std::string::npos);
  CHECK(csv.find("\n2,") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

  // Report picks the curve up once it exists.
  run_train(plan, dir);
  run_eval(plan, dir);
  run_report(dir);
  json rep = json::parse(slurp(paths.report));
  CHECK(rep.at("sweeps").contains("bands"));
  CHECK(rep.at("sweeps").at("bands").get<std::string>().rfind("n_bands,", 0) == 0);
}
