#include <algorithm>
#include <cstdio>
#include <set>
#include <vector>

#include "doctest.h"
#include "emsim/dataset.hpp"

using namespace emsim;

namespace {

PipelineConfig small_pipeline() {
  PipelineConfig cfg;
  cfg.fft_size = 256;
  cfg.avg_frames = 4;
  cfg.movmedian_len = 61;
  cfg.stft_window_len = 256;
  cfg.stft_hop = 256;
  cfg.chunk_samples = 1024;
  return cfg;
}

AppSignature two_band_sig(const std::string& id, double f0_a, double f0_b) {
  AppSignature sig;
  sig.app_id = id;
  SignaturePair p0;
  p0.band = 0;
  p0.clock.f0_hz = f0_a;
  p0.wave.f_sq_hz = 2.1e3;
  SignaturePair p1;
  p1.band = 1;
  p1.clock.f0_hz = f0_b;
  p1.wave.f_sq_hz = 1.7e3;
  PhaseProgram prog;
  prog.pairs = {p0, p1};
  for (ActivityPhase ph : all_phases()) sig.phases[ph] = prog;
  return sig;
}

// One capture = two band scenes sharing a capture_id.
std::vector<SceneConfig> make_scenes(std::size_t n_captures, double duration_s = 0.0205) {
  std::vector<SceneConfig> scenes;
  for (std::size_t c = 0; c < n_captures; ++c) {
    SceneConfig s;
    s.signature = two_band_sig(c % 2 == 0 ? "alpha" : "beta", 30e3 + 5e3 * (c % 2), 55e3);
    s.phase = ActivityPhase::Running;
    s.channel.path_loss_exponent = 2.0;
    s.noise.noise_power_db = -25.0;
    s.sample_rate_hz = 2.5e5;
    s.duration_s = duration_s;
    s.seed = 1000 + c;
    s.capture_id = c;
    for (int b = 0; b < 2; ++b) {
      SceneConfig sb = s;
      sb.band_index = b;
      sb.band_center_hz = 600e6 + 2e6 * b;
      scenes.push_back(sb);
    }
  }
  return scenes;
}

FeatureTable synthetic_table(std::size_t n_captures, std::size_t chunks_per_capture) {
  FeatureTable t;
  t.task = TaskKind::AppId;
  t.feat_h = 1;
  t.feat_w = 4;
  t.class_names = {"alpha", "beta"};
  for (std::size_t c = 0; c < n_captures; ++c) {
    for (std::size_t k = 0; k < chunks_per_capture; ++k) {
      ExampleMeta em;
      em.capture_id = c;
      em.chunk_index = k;
      em.app_id = c % 2 == 0 ? "alpha" : "beta";
      t.meta.push_back(em);
      t.labels.push_back(static_cast<int>(c % 2));
      for (int d = 0; d < 4; ++d)
        t.features.push_back(static_cast<float>(c * 10 + k + d * 0.1));
    }
  }
  return t;
}

}  // namespace

TEST_CASE("dataset builder emits one example per full chunk and counts tails") {
  auto scenes = make_scenes(2);  // 5125 samples: 5 chunks + a 5-sample tail
  auto table = build_dataset(scenes, TaskKind::AppId, small_pipeline());

  CHECK(table.task == TaskKind::AppId);
  CHECK(table.feat_h == 1);
  CHECK(table.feat_w == 512);  // two bands of 256 bins
  REQUIRE(table.size() == 10);
  CHECK(table.skipped_chunks == 2);
  CHECK(table.class_names == std::vector<std::string>{"alpha", "beta"});
  for (std::size_t i = 0; i < table.size(); ++i) {
    CHECK(table.meta[i].capture_id == i / 5);
    CHECK(table.meta[i].chunk_index == i % 5);
    CHECK(table.labels[i] == static_cast<int>(i / 5));
    CHECK(table.meta[i].app_id == (i < 5 ? "alpha" : "beta"));
    CHECK(table.meta[i].phase == ActivityPhase::Running);
  }

  auto again = build_dataset(scenes, TaskKind::AppId, small_pipeline());
  CHECK(again.features == table.features);
}

TEST_CASE("activity tables carry idle-subtracted spectrograms of band 0") {
  auto scenes = make_scenes(2);
  auto table = build_dataset(scenes, TaskKind::Activity, small_pipeline());

  CHECK(table.task == TaskKind::Activity);
  CHECK(table.feat_h == 4);  // 1024-sample chunk, 256 window, 256 hop
  CHECK(table.feat_w == 256);
  REQUIRE(table.size() == 10);
  CHECK(table.class_names.size() == 4);
  CHECK(table.class_names[2] == "running");
  for (int l : table.labels) CHECK(l == 2);
}

TEST_CASE("one synthesis pass fills both tables identically") {
  auto scenes = make_scenes(2);
  FeatureTable appid, activity;
  build_datasets(scenes, small_pipeline(), nullptr, nullptr, &appid, &activity);
  auto appid_solo = build_dataset(scenes, TaskKind::AppId, small_pipeline());
  auto act_solo = build_dataset(scenes, TaskKind::Activity, small_pipeline());
  CHECK(appid.features == appid_solo.features);
  CHECK(appid.labels == appid_solo.labels);
  CHECK(activity.features == act_solo.features);
  CHECK(activity.labels == act_solo.labels);
}

TEST_CASE("a frozen class list pins labels and rejects strangers") {
  auto scenes = make_scenes(2);
  std::vector<SceneConfig> beta_only(scenes.begin() + 2, scenes.end());
  const std::vector<std::string> names = {"alpha", "beta"};
  auto table = build_dataset(beta_only, TaskKind::AppId, small_pipeline(), nullptr, &names);
  for (int l : table.labels) CHECK(l == 1);
  CHECK(table.class_names == names);

  const std::vector<std::string> wrong = {"gamma"};
  CHECK_THROWS_AS(build_dataset(beta_only, TaskKind::AppId, small_pipeline(), nullptr, &wrong),
                  InvalidArgument);
}

TEST_CASE("obfuscation changes active features") {
  auto scenes = make_scenes(1);
  ObfuscationSpec obf;
  ClockSpec clk;
  clk.f0_hz = 40e3;
  obf.daemon_clocks = {clk};
  obf.daemon_waves = {ActivityWave{1.3e3, 1.0, 1}};
  obf.power_db = 0.0;
  auto plain = build_dataset(scenes, TaskKind::AppId, small_pipeline());
  auto jammed = build_dataset(scenes, TaskKind::AppId, small_pipeline(), &obf);
  CHECK(plain.features != jammed.features);
}

TEST_CASE("malformed capture groups are rejected") {
  auto scenes = make_scenes(1);
  auto dup = scenes;
  dup[1].band_center_hz = dup[0].band_center_hz;
  CHECK_THROWS_AS(build_dataset(dup, TaskKind::AppId, small_pipeline()), InvalidArgument);

  auto mixed = scenes;
  mixed[1].phase = ActivityPhase::Exiting;
  CHECK_THROWS_AS(build_dataset(mixed, TaskKind::AppId, small_pipeline()), InvalidArgument);

  CHECK_THROWS_AS(build_dataset({}, TaskKind::AppId, small_pipeline()), InvalidArgument);

  auto tiny = make_scenes(1, 0.003);  // 750 samples, below one chunk
  CHECK_THROWS_AS(build_dataset(tiny, TaskKind::AppId, small_pipeline()), InvalidArgument);
}

TEST_CASE("splits separate captures cleanly and deterministically") {
  auto table = synthetic_table(20, 3);
  auto split = split_dataset(table, 0.70, 0.15, 0.15, 13);

  CHECK(split.train_captures.size() == 14);
  CHECK(split.validation_captures.size() == 3);
  CHECK(split.test_captures.size() == 3);
  CHECK(split.train.size() == 42);
  CHECK(split.validation.size() == 9);
  CHECK(split.test.size() == 9);

  std::set<std::uint64_t> seen;
  for (auto c : split.train_captures) seen.insert(c);
  for (auto c : split.validation_captures) seen.insert(c);
  for (auto c : split.test_captures) seen.insert(c);
  CHECK(seen.size() == 20);

  // Every chunk of a capture stays in that capture's split.
  for (std::size_t i : split.test) {
    const auto cap = table.meta[i].capture_id;
    CHECK(std::find(split.test_captures.begin(), split.test_captures.end(), cap) !=
          split.test_captures.end());
  }

  auto same = split_dataset(table, 0.70, 0.15, 0.15, 13);
  CHECK(same.train_captures == split.train_captures);
  CHECK(same.test == split.test);
  auto other = split_dataset(table, 0.70, 0.15, 0.15, 14);
  CHECK(other.train_captures != split.train_captures);

  CHECK_THROWS_AS(split_dataset(table, 0.8, 0.3, 0.1, 13), InvalidArgument);
  auto small = synthetic_table(3, 1);
  CHECK_THROWS_AS(split_dataset(small, 0.70, 0.15, 0.15, 13), InvalidArgument);
  FeatureTable empty;
  CHECK_THROWS_AS(split_dataset(empty, 0.70, 0.15, 0.15, 13), InvalidArgument);
}

TEST_CASE("standardizer summarizes training rows only") {
  auto table = synthetic_table(4, 1);  // rows 0..3, col d value = c*10 + d*0.1
  std::vector<std::size_t> train_idx = {0, 2};
  auto sc = fit_standardizer(table, train_idx);
  REQUIRE(sc.mean.size() == 4);
  // Column d over rows {0, 2}: values {d*0.1, 20 + d*0.1} -> mean 10 + d*0.1.
  for (std::size_t d = 0; d < 4; ++d) {
    CHECK(sc.mean[d] == doctest::Approx(10.0 + 0.1 * d).epsilon(1e-6));
    CHECK(sc.inv_std[d] == doctest::Approx(0.1).epsilon(1e-6));
  }

  // Touching a held-out row cannot move the scaler.
  auto tampered = table;
  for (std::size_t d = 0; d < 4; ++d) tampered.features[1 * 4 + d] = 1e6f;
  auto sc2 = fit_standardizer(tampered, train_idx);
  CHECK(sc2.mean == sc.mean);
  CHECK(sc2.inv_std == sc.inv_std);

  // Constant columns fall back to the epsilon floor instead of dividing by 0.
  FeatureTable flat = synthetic_table(2, 1);
  flat.features.assign(flat.features.size(), 3.0f);
  auto sc3 = fit_standardizer(flat, {0, 1});
  CHECK(sc3.inv_std[0] == doctest::Approx(1e6));

  CHECK_THROWS_AS(fit_standardizer(table, {}), InvalidArgument);
}

TEST_CASE("band slicing keeps the leading columns and all provenance") {
  auto scenes = make_scenes(2);
  auto table = build_dataset(scenes, TaskKind::AppId, small_pipeline());
  auto one = slice_bands(table, 1, 256);
  CHECK(one.feat_w == 256);
  CHECK(one.size() == table.size());
  CHECK(one.labels == table.labels);
  CHECK(one.skipped_chunks == table.skipped_chunks);
  for (std::size_t i = 0; i < table.size(); ++i)
    for (std::size_t d = 0; d < 256; ++d) CHECK(one.row(i)[d] == table.row(i)[d]);

  auto both = slice_bands(table, 2, 256);
  CHECK(both.features == table.features);

  CHECK_THROWS_AS(slice_bands(table, 3, 256), InvalidArgument);
  CHECK_THROWS_AS(slice_bands(table, 0, 256), InvalidArgument);
  auto act = build_dataset(scenes, TaskKind::Activity, small_pipeline());
  CHECK_THROWS_AS(slice_bands(act, 1, 256), InvalidArgument);
}

TEST_CASE("feature tables survive a disk round-trip bit for bit") {
  auto scenes = make_scenes(2);
  auto table = build_dataset(scenes, TaskKind::AppId, small_pipeline());
  const std::string path = "/tmp/emsim_test_table.emsd";
  save_feature_table(table, path);
  auto back = load_feature_table(path);

  CHECK(back.task == table.task);
  CHECK(back.feat_h == table.feat_h);
  CHECK(back.feat_w == table.feat_w);
  CHECK(back.features == table.features);
  CHECK(back.labels == table.labels);
  CHECK(back.class_names == table.class_names);
  CHECK(back.skipped_chunks == table.skipped_chunks);
  REQUIRE(back.meta.size() == table.meta.size());
  for (std::size_t i = 0; i < table.meta.size(); ++i) {
    CHECK(back.meta[i].capture_id == table.meta[i].capture_id);
    CHECK(back.meta[i].seed == table.meta[i].seed);
    CHECK(back.meta[i].app_id == table.meta[i].app_id);
    CHECK(back.meta[i].phase == table.meta[i].phase);
    CHECK(back.meta[i].distance_m == table.meta[i].distance_m);
    CHECK(back.meta[i].orientation_deg == table.meta[i].orientation_deg);
    CHECK(back.meta[i].chunk_index == table.meta[i].chunk_index);
  }

  std::FILE* f = std::fopen(path.c_str(), "r+b");
  REQUIRE(f);
  std::fputs("BOGUS", f);
  std::fclose(f);
  CHECK_THROWS_AS(load_feature_table(path), IoError);
  CHECK_THROWS_AS(load_feature_table("/tmp/emsim_absent.emsd"), IoError);
  std::remove(path.c_str());
}
