#include "emsim/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

namespace emsim {

namespace {

using nlohmann::json;

IQRecording slice(const IQRecording& iq, std::size_t start, std::size_t len) {
  IQRecording out;
  out.samples.assign(iq.samples.begin() + start, iq.samples.begin() + start + len);
  out.sample_rate_hz = iq.sample_rate_hz;
  out.center_frequency_hz = iq.center_frequency_hz;
  out.seed = iq.seed;
  return out;
}

int label_of(const std::string& name, std::vector<std::string>& names, bool frozen) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it != names.end()) return static_cast<int>(it - names.begin());
  if (frozen) throw InvalidArgument("dataset: app '" + name + "' not in the class list");
  names.push_back(name);
  return static_cast<int>(names.size()) - 1;
}

// Active spectrogram minus the idle column means, flattened into floats.
void activity_feature(const Spectrogram& active, const Spectrogram& idle, float* out) {
  const std::size_t nt = active.times.size(), nf = active.freqs.size();
  if (idle.freqs.size() != nf || idle.times.size() == 0)
    throw InvalidArgument("dataset: active/idle spectrogram axes differ");
  std::vector<double> idle_mean(nf, 0.0);
  for (std::size_t t = 0; t < idle.times.size(); ++t)
    for (std::size_t f = 0; f < nf; ++f) idle_mean[f] += idle.at(t, f);
  for (double& v : idle_mean) v /= static_cast<double>(idle.times.size());
  for (std::size_t t = 0; t < nt; ++t)
    for (std::size_t f = 0; f < nf; ++f)
      out[t * nf + f] = static_cast<float>(active.at(t, f) - idle_mean[f]);
}

}  // namespace

void build_datasets(const std::vector<SceneConfig>& scenes, const PipelineConfig& pipeline,
                    const ObfuscationSpec* obf, const std::vector<std::string>* class_names,
                    FeatureTable* appid, FeatureTable* activity) {
  validate_pipeline(pipeline);
  if (scenes.empty()) throw InvalidArgument("dataset: no scenes");
  if (!appid && !activity) return;

  // Group scenes by capture_id, first appearance order.
  std::vector<std::vector<const SceneConfig*>> groups;
  std::map<std::uint64_t, std::size_t> group_of;
  for (const SceneConfig& sc : scenes) {
    auto [it, fresh] = group_of.try_emplace(sc.capture_id, groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(&sc);
  }

  const bool frozen = class_names != nullptr;
  std::vector<std::string> names = frozen ? *class_names : std::vector<std::string>{};
  if (appid) {
    appid->task = TaskKind::AppId;
    appid->feat_h = 1;
    appid->feat_w = 0;
  }
  if (activity) {
    activity->task = TaskKind::Activity;
    activity->class_names.clear();
    for (ActivityPhase p : all_phases()) activity->class_names.push_back(phase_name(p));
  }

  for (std::vector<const SceneConfig*>& group : groups) {
    std::sort(group.begin(), group.end(), [](const SceneConfig* a, const SceneConfig* b) {
      return a->band_center_hz < b->band_center_hz;
    });
    const SceneConfig& head = *group.front();
    for (const SceneConfig* sc : group) {
      if (sc->sample_rate_hz != head.sample_rate_hz || sc->duration_s != head.duration_s ||
          sc->phase != head.phase || sc->signature.app_id != head.signature.app_id)
        throw InvalidArgument("dataset: capture " + std::to_string(head.capture_id) +
                              " mixes incompatible band scenes");
    }
    for (std::size_t b = 1; b < group.size(); ++b)
      if (group[b]->band_center_hz == group[b - 1]->band_center_hz)
        throw InvalidArgument("dataset: capture " + std::to_string(head.capture_id) +
                              " repeats a band center");

    const std::size_t n_samples = sample_count(head.sample_rate_hz, head.duration_s);
    const std::size_t n_chunks = n_samples / pipeline.chunk_samples;
    if (n_chunks == 0)
      throw InvalidArgument("dataset: capture " + std::to_string(head.capture_id) +
                            " yields no full chunk");
    const bool has_tail = n_samples % pipeline.chunk_samples != 0;

    const int app_label = label_of(head.signature.app_id, names, frozen);
    const int phase_label = static_cast<int>(head.phase);

    std::vector<std::vector<SpectrumFrame>> band_frames;  // [band][chunk]
    std::vector<std::vector<float>> act_rows;             // [chunk][feat]

    for (std::size_t b = 0; b < group.size(); ++b) {
      const bool need_appid = appid != nullptr;
      const bool need_activity = activity != nullptr && b == 0;
      if (!need_appid && !need_activity) continue;
      const SceneConfig& sc = *group[b];
      const IQRecording rec_active = capture(sc, CaptureState::Active, obf);
      const IQRecording rec_idle = capture(sc, CaptureState::Idle);

      if (need_appid) band_frames.emplace_back();
      for (std::size_t c = 0; c < n_chunks; ++c) {
        const IQRecording ac = slice(rec_active, c * pipeline.chunk_samples, pipeline.chunk_samples);
        const IQRecording id = slice(rec_idle, c * pipeline.chunk_samples, pipeline.chunk_samples);
        if (need_appid) band_frames.back().push_back(process_band(ac, id, pipeline));
        if (need_activity) {
          const Spectrogram sa = stft_spectrogram(ac, pipeline);
          const Spectrogram si = stft_spectrogram(id, pipeline);
          if (activity->feat_w == 0) {
            activity->feat_h = sa.times.size();
            activity->feat_w = sa.freqs.size();
          } else if (activity->feat_h != sa.times.size() || activity->feat_w != sa.freqs.size()) {
            throw InvalidArgument("dataset: spectrogram shape varies between captures");
          }
          act_rows.emplace_back(activity->dim());
          activity_feature(sa, si, act_rows.back().data());
        }
      }
    }

    for (std::size_t c = 0; c < n_chunks; ++c) {
      ExampleMeta em;
      em.capture_id = head.capture_id;
      em.seed = head.seed;
      em.app_id = head.signature.app_id;
      em.phase = head.phase;
      em.distance_m = head.channel.distance_m;
      em.orientation_deg = head.channel.orientation_deg;
      em.chunk_index = c;

      if (appid) {
        std::vector<SpectrumFrame> chunk_frames;
        chunk_frames.reserve(band_frames.size());
        for (const std::vector<SpectrumFrame>& bf : band_frames) chunk_frames.push_back(bf[c]);
        const std::vector<double> cat = concat_bands(chunk_frames);
        if (appid->feat_w == 0)
          appid->feat_w = cat.size();
        else if (appid->feat_w != cat.size())
          throw InvalidArgument("dataset: feature width varies between captures");
        for (double v : cat) appid->features.push_back(static_cast<float>(v));
        appid->labels.push_back(app_label);
        appid->meta.push_back(em);
      }
      if (activity) {
        activity->features.insert(activity->features.end(), act_rows[c].begin(),
                                  act_rows[c].end());
        activity->labels.push_back(phase_label);
        activity->meta.push_back(em);
      }
    }
    if (has_tail) {
      if (appid) appid->skipped_chunks++;
      if (activity) activity->skipped_chunks++;
    }
  }

  if (appid) appid->class_names = names;
}

FeatureTable build_dataset(const std::vector<SceneConfig>& scenes, TaskKind task,
                           const PipelineConfig& pipeline, const ObfuscationSpec* obf,
                           const std::vector<std::string>* class_names) {
  FeatureTable out;
  if (task == TaskKind::AppId)
    build_datasets(scenes, pipeline, obf, class_names, &out, nullptr);
  else
    build_datasets(scenes, pipeline, obf, class_names, nullptr, &out);
  return out;
}

DatasetSplit split_dataset(const FeatureTable& table, double train_ratio, double val_ratio,
                           double test_ratio, std::uint64_t seed) {
  if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9)
    throw InvalidArgument("split: ratios must sum to 1");
  if (table.size() == 0) throw InvalidArgument("split: empty table");

  std::vector<std::uint64_t> captures;
  for (const ExampleMeta& em : table.meta)
    if (std::find(captures.begin(), captures.end(), em.capture_id) == captures.end())
      captures.push_back(em.capture_id);

  Rng rng(derive_seed(seed, "split"));
  for (std::size_t i = captures.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
    std::swap(captures[i - 1], captures[j]);
  }

  const std::size_t n = captures.size();
  const std::size_t n_train = static_cast<std::size_t>(std::floor(n * train_ratio));
  const std::size_t n_val = static_cast<std::size_t>(std::floor(n * val_ratio));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
    throw InvalidArgument("split: too few captures (" + std::to_string(n) +
                          ") for non-empty train/validation/test");

  DatasetSplit split;
  split.train_captures.assign(captures.begin(), captures.begin() + n_train);
  split.validation_captures.assign(captures.begin() + n_train, captures.begin() + n_train + n_val);
  split.test_captures.assign(captures.begin() + n_train + n_val, captures.end());

  std::map<std::uint64_t, int> which;
  for (std::uint64_t c : split.train_captures) which[c] = 0;
  for (std::uint64_t c : split.validation_captures) which[c] = 1;
  for (std::uint64_t c : split.test_captures) which[c] = 2;
  for (std::size_t i = 0; i < table.size(); ++i) {
    switch (which.at(table.meta[i].capture_id)) {
      case 0: split.train.push_back(i); break;
      case 1: split.validation.push_back(i); break;
      default: split.test.push_back(i); break;
    }
  }
  return split;
}

Standardizer fit_standardizer(const FeatureTable& table, const std::vector<std::size_t>& train_idx) {
  if (train_idx.empty()) throw InvalidArgument("standardizer: empty training set");
  const std::size_t dim = table.dim();
  std::vector<double> sum(dim, 0.0), sumsq(dim, 0.0);
  for (std::size_t ex : train_idx) {
    const float* row = table.row(ex);
    for (std::size_t d = 0; d < dim; ++d) {
      const double v = row[d];
      sum[d] += v;
      sumsq[d] += v * v;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(train_idx.size());
  Standardizer sc;
  sc.mean.resize(dim);
  sc.inv_std.resize(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    sc.mean[d] = sum[d] * inv_n;
    const double var = std::max(sumsq[d] * inv_n - sc.mean[d] * sc.mean[d], 0.0);
    sc.inv_std[d] = 1.0 / std::max(std::sqrt(var), 1e-6);
  }
  return sc;
}

FeatureTable slice_bands(const FeatureTable& table, std::size_t n_bands, std::size_t band_width) {
  if (table.task != TaskKind::AppId || table.feat_h != 1)
    throw InvalidArgument("slice_bands: only flat AppId tables can be sliced");
  const std::size_t keep = n_bands * band_width;
  if (keep == 0 || keep > table.feat_w)
    throw InvalidArgument("slice_bands: requested " + std::to_string(keep) +
                          " columns from " + std::to_string(table.feat_w));
  FeatureTable out;
  out.task = table.task;
  out.feat_h = 1;
  out.feat_w = keep;
  out.labels = table.labels;
  out.meta = table.meta;
  out.class_names = table.class_names;
  out.skipped_chunks = table.skipped_chunks;
  out.features.resize(table.size() * keep);
  for (std::size_t i = 0; i < table.size(); ++i)
    std::copy(table.row(i), table.row(i) + keep, out.features.begin() + i * keep);
  return out;
}

void save_feature_table(const FeatureTable& table, const std::string& path) {
  json meta;
  meta["format_version"] = 1;
  meta["task"] = task_name(table.task);
  meta["feat_h"] = table.feat_h;
  meta["feat_w"] = table.feat_w;
  meta["n_examples"] = table.size();
  meta["class_names"] = table.class_names;
  meta["skipped_chunks"] = table.skipped_chunks;
  meta["labels"] = table.labels;
  json ex = json::array();
  for (const ExampleMeta& em : table.meta) {
    json e;
    e["capture_id"] = em.capture_id;
    e["seed"] = em.seed;
    e["app_id"] = em.app_id;
    e["phase"] = phase_name(em.phase);
    e["distance_m"] = em.distance_m;
    e["orientation_deg"] = em.orientation_deg;
    e["chunk_index"] = em.chunk_index;
    ex.push_back(e);
  }
  meta["examples"] = ex;
  const std::string meta_str = meta.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + tmp);
    f.write("EMSD1", 5);
    const std::uint32_t len = static_cast<std::uint32_t>(meta_str.size());
    char hdr[4];
    for (int i = 0; i < 4; ++i) hdr[i] = static_cast<char>((len >> (8 * i)) & 0xff);
    f.write(hdr, 4);
    f.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    static_assert(sizeof(float) == 4);
    f.write(reinterpret_cast<const char*>(table.features.data()),
            static_cast<std::streamsize>(table.features.size() * 4));
    if (!f) throw IoError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("rename failed: " + tmp + " -> " + path);
}

FeatureTable load_feature_table(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open feature table: " + path);
  char magic[5];
  f.read(magic, 5);
  if (!f || std::string(magic, 5) != "EMSD1") throw IoError("bad feature-table magic in " + path);
  char hdr[4];
  f.read(hdr, 4);
  if (!f) throw IoError("feature table truncated: " + path);
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i)
    len |= static_cast<std::uint32_t>(static_cast<unsigned char>(hdr[i])) << (8 * i);
  std::string meta_str(len, '\0');
  f.read(meta_str.data(), len);
  if (!f) throw IoError("feature table metadata truncated: " + path);
  json meta;
  try {
    meta = json::parse(meta_str);
  } catch (const json::exception& e) {
    throw IoError(std::string("feature table metadata parse error: ") + e.what());
  }

  FeatureTable t;
  t.task = task_from_name(meta.at("task").get<std::string>());
  t.feat_h = meta.at("feat_h").get<std::size_t>();
  t.feat_w = meta.at("feat_w").get<std::size_t>();
  t.class_names = meta.at("class_names").get<std::vector<std::string>>();
  t.skipped_chunks = meta.at("skipped_chunks").get<std::size_t>();
  t.labels = meta.at("labels").get<std::vector<int>>();
  for (const json& e : meta.at("examples")) {
    ExampleMeta em;
    em.capture_id = e.at("capture_id").get<std::uint64_t>();
    em.seed = e.at("seed").get<std::uint64_t>();
    em.app_id = e.at("app_id").get<std::string>();
    em.phase = phase_from_name(e.at("phase").get<std::string>());
    em.distance_m = e.at("distance_m").get<double>();
    em.orientation_deg = e.at("orientation_deg").get<double>();
    em.chunk_index = e.at("chunk_index").get<std::size_t>();
    t.meta.push_back(em);
  }
  const std::size_t n = meta.at("n_examples").get<std::size_t>();
  if (t.labels.size() != n || t.meta.size() != n)
    throw IoError("feature table metadata inconsistent in " + path);
  t.features.resize(n * t.dim());
  f.read(reinterpret_cast<char*>(t.features.data()),
         static_cast<std::streamsize>(t.features.size() * 4));
  if (!f) throw IoError("feature table data truncated: " + path);
  return t;
}

}  // namespace emsim
