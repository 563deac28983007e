#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "doctest.h"
#include "emsim/nn.hpp"

using namespace emsim;

namespace {

ConvLayer make_layer(std::size_t in_ch, std::size_t out_ch, std::size_t kw, std::size_t sw,
                     std::size_t pw, std::vector<double> w, std::vector<double> b) {
  ConvLayer c;
  c.in_ch = in_ch;
  c.out_ch = out_ch;
  c.kw = kw;
  c.sw = sw;
  c.pw = pw;
  c.w = std::move(w);
  c.b = std::move(b);
  c.gw.assign(c.w.size(), 0.0);
  c.gb.assign(c.b.size(), 0.0);
  c.vw.assign(c.w.size(), 0.0);
  c.vb.assign(c.b.size(), 0.0);
  return c;
}

// Toy blobs: n per class, class c centered at 4 on dims [c*gap, c*gap+4).
void make_blobs(std::size_t dim, std::size_t n_classes, std::size_t per_class, std::uint64_t seed,
                std::vector<float>& feats, std::vector<int>& labels) {
  Rng rng(seed);
  feats.assign(dim * n_classes * per_class, 0.0f);
  labels.clear();
  const std::size_t gap = dim / n_classes;
  for (std::size_t c = 0; c < n_classes; ++c) {
    for (std::size_t e = 0; e < per_class; ++e) {
      float* row = feats.data() + (c * per_class + e) * dim;
      for (std::size_t d = 0; d < dim; ++d) row[d] = static_cast<float>(0.3 * rng.normal());
      for (std::size_t d = c * gap; d < c * gap + 4 && d < dim; ++d)
        row[d] += 4.0f;
      labels.push_back(static_cast<int>(c));
    }
  }
}

template <class E, class F>
std::string thrown_what(F&& f) {
  try {
    f();
  } catch (const E& e) {
    return e.what();
  }
  return {};
}

std::vector<double> snapshot(ConvNetModel& m) {
  std::vector<double> out;
  auto ptrs = m.param_tensors();
  auto sizes = m.tensor_sizes();
  for (std::size_t t = 0; t < ptrs.size(); ++t)
    out.insert(out.end(), ptrs[t], ptrs[t] + sizes[t]);
  return out;
}

}  // namespace

TEST_CASE("conv layer computes a padded strided cross-correlation") {
  auto c = make_layer(1, 1, 3, 1, 1, {1.0, 2.0, 3.0}, {0.0});
  const double in[5] = {1, 2, 3, 4, 5};
  double out[5];
  c.forward(in, 1, 5, out);
  const double want[5] = {8, 14, 20, 26, 14};
  for (int i = 0; i < 5; ++i) CHECK(out[i] == want[i]);

  auto cs = make_layer(1, 1, 3, 2, 1, {1.0, 2.0, 3.0}, {0.5});
  REQUIRE(cs.out_w(5) == 3);
  double outs[3];
  cs.forward(in, 1, 5, outs);
  CHECK(outs[0] == 8.5);
  CHECK(outs[1] == 20.5);
  CHECK(outs[2] == 14.5);
}

TEST_CASE("a zero conv2 without projection makes a residual block the identity") {
  ConvNetModel m;
  m.task = TaskKind::AppId;
  m.in_h = 1;
  m.in_w = 4;
  m.n_classes = 2;
  m.adapter = make_layer(1, 2, 1, 1, 0, {1.0, 1.0}, {0.0, 0.0});
  ResBlock blk;
  blk.conv1 = make_layer(2, 2, 1, 1, 0, {1.0, 0.0, 0.0, 1.0}, {0.0, 0.0});
  blk.conv2 = make_layer(2, 2, 1, 1, 0, {0.0, 0.0, 0.0, 0.0}, {0.0, 0.0});
  blk.has_proj = false;
  m.blocks.push_back(blk);
  m.feat_dim = 2;
  m.head_w = {1.0, 0.0, 0.0, 1.0};
  m.head_b = {0.5, -0.25};
  m.ghw.assign(4, 0.0);
  m.ghb.assign(2, 0.0);
  m.vhw.assign(4, 0.0);
  m.vhb.assign(2, 0.0);

  // Positive input rides the skip path untouched; GAP averages to 2.5.
  auto logits = m.forward({1.0f, 2.0f, 3.0f, 4.0f});
  REQUIRE(logits.size() == 2);
  CHECK(logits[0] == doctest::Approx(3.0));
  CHECK(logits[1] == doctest::Approx(2.25));

  m.blocks[0].conv2.w = {0.1, 0.0, 0.0, 0.0};
  auto bent = m.forward({1.0f, 2.0f, 3.0f, 4.0f});
  CHECK(bent[0] != doctest::Approx(3.0));
}

TEST_CASE("softmax is shift-invariant, normalized and overflow-safe") {
  auto p = softmax({1.0, 2.0, 3.0});
  auto q = softmax({101.0, 102.0, 103.0});
  double sum = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(p[i] == doctest::Approx(q[i]).epsilon(1e-12));
    sum += p[i];
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p[2] > p[1]);
  CHECK(p[1] > p[0]);
  CHECK(argmax({1.0, 2.0, 3.0}) == 2);
  CHECK(argmax({5.0, 2.0, 3.0}) == 0);

  auto big = softmax({1000.0, 1000.1});
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] + big[1] == doctest::Approx(1.0));
}

TEST_CASE("standardizer applies (x - mean) * inv_std and defaults to identity") {
  Standardizer s;
  s.mean = {1.0, 2.0};
  s.inv_std = {2.0, 0.5};
  const float x[2] = {3.0f, 4.0f};
  double out[2];
  s.apply(x, 2, out);
  CHECK(out[0] == doctest::Approx(4.0));
  CHECK(out[1] == doctest::Approx(1.0));

  Standardizer id;
  CHECK(id.empty());
  id.apply(x, 2, out);
  CHECK(out[0] == doctest::Approx(3.0));
  CHECK(out[1] == doctest::Approx(4.0));
}

TEST_CASE("model factories are seed-deterministic") {
  auto a = make_appid_model(256, 5, 77);
  auto b = make_appid_model(256, 5, 77);
  auto c = make_appid_model(256, 5, 78);
  CHECK(snapshot(a) == snapshot(b));
  CHECK(snapshot(a) != snapshot(c));
  CHECK(a.param_count() == snapshot(a).size());
  CHECK(a.blocks.size() == 3);

  auto d = make_activity_model(12, 64, 4, 9);
  CHECK(d.blocks.size() == 3);
  CHECK(d.in_h == 12);
  CHECK(d.feat_dim == 64);
}

TEST_CASE("zero learning rate leaves every weight untouched") {
  std::vector<float> feats;
  std::vector<int> labels;
  make_blobs(64, 3, 10, 3, feats, labels);
  std::vector<std::size_t> train_idx, val_idx;
  for (std::size_t i = 0; i < labels.size(); ++i)
    (i % 5 == 0 ? val_idx : train_idx).push_back(i);

  auto m = make_appid_model(64, 3, 11);
  auto before = snapshot(m);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  train(m, feats.data(), 64, labels, train_idx, val_idx, cfg);
  CHECK(snapshot(m) == before);
}

TEST_CASE("training separates an easy blob problem") {
  std::vector<float> feats;
  std::vector<int> labels;
  make_blobs(64, 3, 40, 21, feats, labels);
  std::vector<std::size_t> train_idx, val_idx;
  for (std::size_t i = 0; i < labels.size(); ++i)
    (i % 4 == 0 ? val_idx : train_idx).push_back(i);

  auto m = make_appid_model(64, 3, 5);
  TrainConfig cfg;
  cfg.learning_rate = 0.02;
  cfg.batch_size = 16;
  cfg.epochs = 50;
  cfg.seed = 77;
  auto log = train(m, feats.data(), 64, labels, train_idx, val_idx, cfg);

  REQUIRE(log.epochs.size() == 50);
  CHECK(log.best_val_accuracy == 1.0);
  CHECK(log.epochs.front().train_loss > log.epochs.back().train_loss);
  CHECK(log.best_epoch >= 1);

  // The returned weights are the best-epoch snapshot, so a fresh evaluation
  // reproduces the logged score.
  auto metrics = evaluate(m, feats.data(), 64, labels, val_idx);
  CHECK(metrics.accuracy == doctest::Approx(log.best_val_accuracy));

  // evaluate() agrees with a manual argmax sweep.
  std::size_t hits = 0;
  for (std::size_t i : val_idx)
    if (argmax(m.forward(feats.data() + i * 64, 64)) == labels[i]) ++hits;
  CHECK(metrics.accuracy ==
        doctest::Approx(static_cast<double>(hits) / static_cast<double>(val_idx.size())));
  std::size_t trace = 0, total = 0;
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t p = 0; p < 3; ++p) {
      total += metrics.at(t, p);
      if (t == p) trace += metrics.at(t, p);
    }
  CHECK(total == val_idx.size());
  CHECK(trace == hits);
}

TEST_CASE("training with the same seed reproduces identical weights") {
  std::vector<float> feats;
  std::vector<int> labels;
  make_blobs(64, 3, 12, 8, feats, labels);
  std::vector<std::size_t> train_idx, val_idx;
  for (std::size_t i = 0; i < labels.size(); ++i)
    (i % 6 == 0 ? val_idx : train_idx).push_back(i);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;

  auto m1 = make_appid_model(64, 3, 44);
  auto m2 = make_appid_model(64, 3, 44);
  train(m1, feats.data(), 64, labels, train_idx, val_idx, cfg);
  train(m2, feats.data(), 64, labels, train_idx, val_idx, cfg);
  CHECK(snapshot(m1) == snapshot(m2));
}

TEST_CASE("divergent training fails loudly naming the epoch") {
  std::vector<float> feats;
  std::vector<int> labels;
  make_blobs(64, 3, 10, 2, feats, labels);
  std::vector<std::size_t> train_idx;
  for (std::size_t i = 0; i < labels.size(); ++i) train_idx.push_back(i);

  auto m = make_appid_model(64, 3, 1);
  TrainConfig cfg;
  cfg.learning_rate = 1e12;
  cfg.epochs = 4;
  const std::string msg = thrown_what<TrainingFailure>(
      [&] { train(m, feats.data(), 64, labels, train_idx, train_idx, cfg); });
  CHECK(msg.find("epoch") != std::string::npos);

  TrainConfig bad;
  bad.momentum = 1.0;
  CHECK_THROWS_AS(train(m, feats.data(), 64, labels, train_idx, train_idx, bad), InvalidArgument);
}

TEST_CASE("gradient check passes clean and catches corruption") {
  Rng rng(31);
  auto app = make_appid_model(128, 5, 3);
  std::vector<float> x(128);
  for (auto& v : x) v = static_cast<float>(rng.normal());
  CHECK(grad_check(app, x, 2, 1e-5) <= 1e-4);

  auto act = make_activity_model(12, 64, 4, 9);
  std::vector<float> img(12 * 64);
  for (auto& v : img) v = static_cast<float>(rng.normal());
  CHECK(grad_check(act, img, 1, 1e-4) <= 1e-4);

  // A deliberately biased analytic gradient must blow past the tolerance.
  CHECK(grad_check(app, x, 2, 1e-5, 60, 0.05) > 1e-2);
}

TEST_CASE("checkpoints round-trip weights, scaler and predictions") {
  auto m = make_appid_model(96, 4, 13);
  m.scaler.mean.assign(96, 0.25);
  m.scaler.inv_std.assign(96, 1.5);
  const std::string path = "/tmp/emsim_test_ckpt.bin";
  save_checkpoint(m, path);
  auto r = load_checkpoint(path);

  CHECK(r.task == m.task);
  CHECK(r.in_w == m.in_w);
  CHECK(r.n_classes == m.n_classes);
  CHECK(snapshot(r) == snapshot(m));
  CHECK(r.scaler.mean == m.scaler.mean);
  CHECK(r.scaler.inv_std == m.scaler.inv_std);

  Rng rng(5);
  std::vector<float> x(96);
  for (auto& v : x) v = static_cast<float>(rng.normal());
  CHECK(m.forward(x) == r.forward(x));

  std::FILE* f = std::fopen(path.c_str(), "r+b");
  REQUIRE(f);
  std::fputs("XXXXX", f);
  std::fclose(f);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  CHECK_THROWS_AS(load_checkpoint("/tmp/emsim_no_such_ckpt.bin"), IoError);
  std::remove(path.c_str());
}

TEST_CASE("metrics serialize to JSON and CSV with class names") {
  Metrics m;
  m.n_classes = 2;
  m.confusion = {8, 2, 1, 9};
  m.accuracy = 0.85;
  m.per_class_recall = {0.8, 0.9};
  auto js = metrics_to_json(m, {"alpha", "beta"});
  CHECK(js.find("\"accuracy\"") != std::string::npos);
  CHECK(js.find("alpha") != std::string::npos);
  CHECK(js.find("per_class_recall") != std::string::npos);

  auto csv = confusion_to_csv(m, {"alpha", "beta"});
  CHECK(csv.rfind("true_class,alpha,beta", 0) == 0);
  CHECK(csv.find("alpha,8,2") != std::string::npos);
  CHECK(csv.find("beta,1,9") != std::string::npos);

  CHECK(task_from_name(task_name(TaskKind::AppId)) == TaskKind::AppId);
  CHECK(task_from_name(task_name(TaskKind::Activity)) == TaskKind::Activity);
  CHECK_THROWS_AS(task_from_name("nope"), InvalidArgument);
}

TEST_CASE("forward rejects shape mismatches") {
  auto m = make_appid_model(64, 3, 2);
  std::vector<float> wrong(63, 0.0f);
  CHECK_THROWS_AS(m.forward(wrong), InvalidArgument);
}
