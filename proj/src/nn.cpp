#include "emsim/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

#include <json.hpp>

namespace emsim {

namespace {

using nlohmann::json;

void clip_kx(std::ptrdiff_t x0, std::size_t kw, std::size_t w, std::size_t& lo, std::size_t& hi) {
  lo = x0 < 0 ? static_cast<std::size_t>(-x0) : 0;
  const std::ptrdiff_t room = static_cast<std::ptrdiff_t>(w) - x0;
  hi = room <= 0 ? lo : std::min(kw, static_cast<std::size_t>(room));
  if (hi < lo) hi = lo;
}

}  // namespace

void ConvLayer::forward(const double* x, std::size_t h, std::size_t w_, double* y) const {
  const std::size_t oh = out_h(h), ow = out_w(w_);
  const std::size_t ksz = kh * kw;
  for (std::size_t o = 0; o < out_ch; ++o) {
    double* yo = y + o * oh * ow;
    std::fill(yo, yo + oh * ow, b[o]);
    for (std::size_t i = 0; i < in_ch; ++i) {
      const double* xi = x + i * h * w_;
      const double* wo = w.data() + (o * in_ch + i) * ksz;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(oy * sh) - static_cast<std::ptrdiff_t>(ph);
        double* yrow = yo + oy * ow;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const std::ptrdiff_t iy = y0 + static_cast<std::ptrdiff_t>(ky);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          const double* xrow = xi + static_cast<std::size_t>(iy) * w_;
          const double* wrow = wo + ky * kw;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t x0 =
                static_cast<std::ptrdiff_t>(ox * sw) - static_cast<std::ptrdiff_t>(pw);
            std::size_t lo, hi;
            clip_kx(x0, kw, w_, lo, hi);
            double acc = 0.0;
            const double* xp = xrow + x0;
            for (std::size_t kx = lo; kx < hi; ++kx) acc += wrow[kx] * xp[kx];
            yrow[ox] += acc;
          }
        }
      }
    }
  }
}

void ConvLayer::backward(const double* x, std::size_t h, std::size_t w_, const double* dy,
                         double* dx) {
  const std::size_t oh = out_h(h), ow = out_w(w_);
  const std::size_t ksz = kh * kw;
  for (std::size_t o = 0; o < out_ch; ++o) {
    const double* dyo = dy + o * oh * ow;
    double gbo = 0.0;
    for (std::size_t p = 0; p < oh * ow; ++p) gbo += dyo[p];
    gb[o] += gbo;
    for (std::size_t i = 0; i < in_ch; ++i) {
      const double* xi = x + i * h * w_;
      double* dxi = dx ? dx + i * h * w_ : nullptr;
      double* gwo = gw.data() + (o * in_ch + i) * ksz;
      const double* wo = w.data() + (o * in_ch + i) * ksz;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(oy * sh) - static_cast<std::ptrdiff_t>(ph);
        const double* dyrow = dyo + oy * ow;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const std::ptrdiff_t iy = y0 + static_cast<std::ptrdiff_t>(ky);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          const double* xrow = xi + static_cast<std::size_t>(iy) * w_;
          double* dxrow = dxi ? dxi + static_cast<std::size_t>(iy) * w_ : nullptr;
          double* gwrow = gwo + ky * kw;
          const double* wrow = wo + ky * kw;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const double g = dyrow[ox];
            if (g == 0.0) continue;
            const std::ptrdiff_t x0 =
                static_cast<std::ptrdiff_t>(ox * sw) - static_cast<std::ptrdiff_t>(pw);
            std::size_t lo, hi;
            clip_kx(x0, kw, w_, lo, hi);
            const double* xp = xrow + x0;
            for (std::size_t kx = lo; kx < hi; ++kx) gwrow[kx] += g * xp[kx];
            if (dxrow) {
              double* dxp = dxrow + x0;
              for (std::size_t kx = lo; kx < hi; ++kx) dxp[kx] += g * wrow[kx];
            }
          }
        }
      }
    }
  }
}

std::string task_name(TaskKind t) { return t == TaskKind::AppId ? "appid" : "activity"; }

TaskKind task_from_name(const std::string& s) {
  if (s == "appid") return TaskKind::AppId;
  if (s == "activity") return TaskKind::Activity;
  throw InvalidArgument("unknown task: " + s);
}

void Standardizer::apply(const float* x, std::size_t n, double* out) const {
  if (empty()) {
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<double>(x[i]);
    return;
  }
  if (mean.size() != n || inv_std.size() != n)
    throw InvalidArgument("standardizer: dimension mismatch");
  for (std::size_t i = 0; i < n; ++i)
    out[i] = (static_cast<double>(x[i]) - mean[i]) * inv_std[i];
}

void validate_train_config(const TrainConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate))
    throw InvalidArgument("train: learning_rate must be finite and >= 0");
  if (cfg.batch_size < 1) throw InvalidArgument("train: batch_size must be >= 1");
  if (cfg.epochs < 1) throw InvalidArgument("train: epochs must be >= 1");
  if (!(cfg.weight_decay >= 0.0)) throw InvalidArgument("train: weight_decay must be >= 0");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
    throw InvalidArgument("train: momentum must be in [0, 1)");
}

namespace {

struct Shape3 {
  std::size_t ch, h, w;
  std::size_t numel() const { return ch * h * w; }
};

ConvLayer make_conv(std::size_t in_ch, std::size_t out_ch, std::size_t kh, std::size_t kw,
                    std::size_t sh, std::size_t sw, std::size_t ph, std::size_t pw) {
  ConvLayer c;
  c.in_ch = in_ch;
  c.out_ch = out_ch;
  c.kh = kh;
  c.kw = kw;
  c.sh = sh;
  c.sw = sw;
  c.ph = ph;
  c.pw = pw;
  c.w.assign(out_ch * in_ch * kh * kw, 0.0);
  c.b.assign(out_ch, 0.0);
  c.gw.assign(c.w.size(), 0.0);
  c.gb.assign(c.b.size(), 0.0);
  c.vw.assign(c.w.size(), 0.0);
  c.vb.assign(c.b.size(), 0.0);
  return c;
}

ResBlock make_block(std::size_t in_ch, std::size_t out_ch, std::size_t sh, std::size_t sw,
                    bool two_d) {
  ResBlock blk;
  const std::size_t kh = two_d ? 3 : 1;
  const std::size_t ph = two_d ? 1 : 0;
  blk.conv1 = make_conv(in_ch, out_ch, kh, 3, sh, sw, ph, 1);
  blk.conv2 = make_conv(out_ch, out_ch, kh, 3, 1, 1, ph, 1);
  blk.has_proj = in_ch != out_ch || sh != 1 || sw != 1;
  if (blk.has_proj) blk.proj = make_conv(in_ch, out_ch, 1, 1, sh, sw, 0, 0);
  return blk;
}

void init_tensor(std::vector<double>& t, double gain, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(gain / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (double& v : t) v = rng.uniform(-bound, bound);
}

void init_model(ConvNetModel& m, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "nn-init"));
  // Hidden convolutions feed relus, so their uniform bound carries the
  // variance-preserving gain of 6/fan_in; the linear head starts small.
  auto init_conv = [&](ConvLayer& c) {
    const std::size_t fan_in = c.in_ch * c.kh * c.kw;
    init_tensor(c.w, 6.0, fan_in, rng);
    init_tensor(c.b, 1.0, fan_in, rng);
  };
  init_conv(m.adapter);
  for (ResBlock& blk : m.blocks) {
    init_conv(blk.conv1);
    init_conv(blk.conv2);
    if (blk.has_proj) init_conv(blk.proj);
  }
  init_tensor(m.head_w, 1.0, m.feat_dim, rng);
  init_tensor(m.head_b, 1.0, m.feat_dim, rng);
}

}  // namespace

std::size_t ConvNetModel::param_count() const {
  std::size_t n = 0;
  for (std::size_t s : tensor_sizes()) n += s;
  return n;
}

std::vector<double*> ConvNetModel::param_tensors() {
  std::vector<double*> out;
  out.push_back(adapter.w.data());
  out.push_back(adapter.b.data());
  for (ResBlock& blk : blocks) {
    out.push_back(blk.conv1.w.data());
    out.push_back(blk.conv1.b.data());
    out.push_back(blk.conv2.w.data());
    out.push_back(blk.conv2.b.data());
    if (blk.has_proj) {
      out.push_back(blk.proj.w.data());
      out.push_back(blk.proj.b.data());
    }
  }
  out.push_back(head_w.data());
  out.push_back(head_b.data());
  return out;
}

std::vector<double*> ConvNetModel::grad_tensors() {
  std::vector<double*> out;
  out.push_back(adapter.gw.data());
  out.push_back(adapter.gb.data());
  for (ResBlock& blk : blocks) {
    out.push_back(blk.conv1.gw.data());
    out.push_back(blk.conv1.gb.data());
    out.push_back(blk.conv2.gw.data());
    out.push_back(blk.conv2.gb.data());
    if (blk.has_proj) {
      out.push_back(blk.proj.gw.data());
      out.push_back(blk.proj.gb.data());
    }
  }
  out.push_back(ghw.data());
  out.push_back(ghb.data());
  return out;
}

std::vector<std::size_t> ConvNetModel::tensor_sizes() const {
  std::vector<std::size_t> out;
  out.push_back(adapter.w.size());
  out.push_back(adapter.b.size());
  for (const ResBlock& blk : blocks) {
    out.push_back(blk.conv1.w.size());
    out.push_back(blk.conv1.b.size());
    out.push_back(blk.conv2.w.size());
    out.push_back(blk.conv2.b.size());
    if (blk.has_proj) {
      out.push_back(blk.proj.w.size());
      out.push_back(blk.proj.b.size());
    }
  }
  out.push_back(head_w.size());
  out.push_back(head_b.size());
  return out;
}

std::vector<double> ConvNetModel::run_forward(const float* features, bool keep_acts) const {
  // Activation slots: a0, adapter pre-relu, adapter post-relu, then per block
  // (conv1 pre-relu, post-relu, block out), finally the pooled vector.  The
  // list is reserved up front so references into it stay valid.
  const std::size_t n_acts = 3 + 3 * blocks.size() + 1;
  std::vector<std::vector<double>> acts;
  acts.reserve(n_acts);

  acts.emplace_back(input_dim());
  scaler.apply(features, input_dim(), acts.back().data());

  Shape3 s{1, in_h, in_w};
  Shape3 s1{adapter.out_ch, adapter.out_h(s.h), adapter.out_w(s.w)};
  acts.emplace_back(s1.numel());
  adapter.forward(acts[0].data(), s.h, s.w, acts[1].data());
  acts.emplace_back(s1.numel());
  for (std::size_t i = 0; i < s1.numel(); ++i) acts[2][i] = acts[1][i] > 0.0 ? acts[1][i] : 0.0;
  const std::vector<double>* cur = &acts[2];
  Shape3 cs = s1;

  for (const ResBlock& blk : blocks) {
    Shape3 os{blk.conv1.out_ch, blk.conv1.out_h(cs.h), blk.conv1.out_w(cs.w)};
    acts.emplace_back(os.numel());
    std::vector<double>& zc1 = acts.back();
    blk.conv1.forward(cur->data(), cs.h, cs.w, zc1.data());
    acts.emplace_back(os.numel());
    std::vector<double>& r = acts.back();
    for (std::size_t i = 0; i < os.numel(); ++i) r[i] = zc1[i] > 0.0 ? zc1[i] : 0.0;
    acts.emplace_back(os.numel());
    std::vector<double>& out = acts.back();
    blk.conv2.forward(r.data(), os.h, os.w, out.data());
    if (blk.has_proj) {
      std::vector<double> p(os.numel());
      blk.proj.forward(cur->data(), cs.h, cs.w, p.data());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += p[i];
    } else {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += (*cur)[i];
    }
    cur = &out;
    cs = os;
  }

  const std::size_t npos = cs.h * cs.w;
  acts.emplace_back(feat_dim);
  std::vector<double>& pooled = acts.back();
  std::fill(pooled.begin(), pooled.end(), 0.0);
  for (std::size_t c = 0; c < cs.ch; ++c) {
    double acc = 0.0;
    const double* p = cur->data() + c * npos;
    for (std::size_t i = 0; i < npos; ++i) acc += p[i];
    pooled[c] = acc / static_cast<double>(npos);
  }

  std::vector<double> logits(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    double acc = head_b[c];
    const double* wr = head_w.data() + c * feat_dim;
    for (std::size_t k = 0; k < feat_dim; ++k) acc += wr[k] * pooled[k];
    logits[c] = acc;
  }
  if (keep_acts) act_ = std::move(acts);
  return logits;
}

std::vector<double> ConvNetModel::forward(const float* features, std::size_t n) const {
  if (n != input_dim())
    throw InvalidArgument("forward: expected " + std::to_string(input_dim()) +
                          " features, got " + std::to_string(n));
  return run_forward(features, false);
}

std::vector<double> ConvNetModel::forward(const std::vector<float>& features) const {
  return forward(features.data(), features.size());
}

void ConvNetModel::zero_grad() {
  auto z = [](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); };
  z(adapter.gw);
  z(adapter.gb);
  for (ResBlock& blk : blocks) {
    z(blk.conv1.gw);
    z(blk.conv1.gb);
    z(blk.conv2.gw);
    z(blk.conv2.gb);
    if (blk.has_proj) {
      z(blk.proj.gw);
      z(blk.proj.gb);
    }
  }
  z(ghw);
  z(ghb);
}

double ConvNetModel::accumulate_example(const float* features, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= n_classes)
    throw InvalidArgument("accumulate_example: label out of range");
  std::vector<double> logits = run_forward(features, true);
  std::vector<double> p = softmax(logits);
  const double loss = -std::log(std::max(p[static_cast<std::size_t>(label)], 1e-300));

  std::vector<double> dlogits = p;
  dlogits[static_cast<std::size_t>(label)] -= 1.0;

  // Walk shapes forward once so the backward pass knows every layer geometry.
  Shape3 s{1, in_h, in_w};
  Shape3 s1{adapter.out_ch, adapter.out_h(s.h), adapter.out_w(s.w)};
  std::vector<Shape3> in_shapes, out_shapes;
  Shape3 cs = s1;
  for (const ResBlock& blk : blocks) {
    in_shapes.push_back(cs);
    cs = Shape3{blk.conv1.out_ch, blk.conv1.out_h(cs.h), blk.conv1.out_w(cs.w)};
    out_shapes.push_back(cs);
  }

  const std::vector<double>& pooled = act_[act_.size() - 1];
  const std::size_t npos = cs.h * cs.w;

  std::vector<double> dpool(feat_dim, 0.0);
  for (std::size_t c = 0; c < n_classes; ++c) {
    const double g = dlogits[c];
    ghb[c] += g;
    double* gw_row = ghw.data() + c * feat_dim;
    const double* wr = head_w.data() + c * feat_dim;
    for (std::size_t k = 0; k < feat_dim; ++k) {
      gw_row[k] += g * pooled[k];
      dpool[k] += g * wr[k];
    }
  }

  std::vector<double> dcur(cs.numel());
  for (std::size_t c = 0; c < cs.ch; ++c) {
    const double g = dpool[c] / static_cast<double>(npos);
    std::fill(dcur.begin() + c * npos, dcur.begin() + (c + 1) * npos, g);
  }

  for (std::size_t k = blocks.size(); k-- > 0;) {
    ResBlock& blk = blocks[k];
    const Shape3 is = in_shapes[k];
    const Shape3 os = out_shapes[k];
    const std::vector<double>& a_in = act_[2 + 3 * k];  // block input
    const std::vector<double>& zc1 = act_[3 + 3 * k];
    const std::vector<double>& r = act_[4 + 3 * k];

    std::vector<double> dr(os.numel(), 0.0);
    blk.conv2.backward(r.data(), os.h, os.w, dcur.data(), dr.data());
    for (std::size_t i = 0; i < dr.size(); ++i)
      if (zc1[i] <= 0.0) dr[i] = 0.0;

    std::vector<double> da(is.numel(), 0.0);
    blk.conv1.backward(a_in.data(), is.h, is.w, dr.data(), da.data());
    if (blk.has_proj) {
      blk.proj.backward(a_in.data(), is.h, is.w, dcur.data(), da.data());
    } else {
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += dcur[i];
    }
    dcur = std::move(da);
  }

  const std::vector<double>& a0 = act_[0];
  const std::vector<double>& z1 = act_[1];
  for (std::size_t i = 0; i < dcur.size(); ++i)
    if (z1[i] <= 0.0) dcur[i] = 0.0;
  adapter.backward(a0.data(), s.h, s.w, dcur.data(), nullptr);
  return loss;
}

void ConvNetModel::sgd_step(double lr, double momentum, double weight_decay, std::size_t batch_n) {
  if (batch_n == 0) throw InvalidArgument("sgd_step: empty batch");
  const double inv_b = 1.0 / static_cast<double>(batch_n);
  auto step = [&](std::vector<double>& wv, std::vector<double>& gv, std::vector<double>& vv,
                  double wd) {
    for (std::size_t i = 0; i < wv.size(); ++i) {
      const double g = gv[i] * inv_b + wd * wv[i];
      vv[i] = momentum * vv[i] + g;
      wv[i] -= lr * vv[i];
    }
  };
  auto step_conv = [&](ConvLayer& c) {
    step(c.w, c.gw, c.vw, weight_decay);
    step(c.b, c.gb, c.vb, 0.0);
  };
  step_conv(adapter);
  for (ResBlock& blk : blocks) {
    step_conv(blk.conv1);
    step_conv(blk.conv2);
    if (blk.has_proj) step_conv(blk.proj);
  }
  step(head_w, ghw, vhw, weight_decay);
  step(head_b, ghb, vhb, 0.0);
}

ConvNetModel make_appid_model(std::size_t input_len, std::size_t n_classes, std::uint64_t seed) {
  if (input_len < 32) throw InvalidArgument("appid model: input_len too short");
  if (n_classes < 2) throw InvalidArgument("appid model: need at least two classes");
  ConvNetModel m;
  m.task = TaskKind::AppId;
  m.in_h = 1;
  m.in_w = input_len;
  m.n_classes = n_classes;
  m.adapter = make_conv(1, 16, 1, 17, 1, 16, 0, 8);
  m.blocks.push_back(make_block(16, 16, 1, 2, false));
  m.blocks.push_back(make_block(16, 32, 1, 2, false));
  m.blocks.push_back(make_block(32, 64, 1, 2, false));
  m.feat_dim = 64;
  m.head_w.assign(n_classes * m.feat_dim, 0.0);
  m.head_b.assign(n_classes, 0.0);
  m.ghw.assign(m.head_w.size(), 0.0);
  m.ghb.assign(m.head_b.size(), 0.0);
  m.vhw.assign(m.head_w.size(), 0.0);
  m.vhb.assign(m.head_b.size(), 0.0);
  init_model(m, seed);
  return m;
}

ConvNetModel make_activity_model(std::size_t in_h, std::size_t in_w, std::size_t n_classes,
                                 std::uint64_t seed) {
  if (in_h < 8 || in_w < 32) throw InvalidArgument("activity model: input too small");
  if (n_classes < 2) throw InvalidArgument("activity model: need at least two classes");
  ConvNetModel m;
  m.task = TaskKind::Activity;
  m.in_h = in_h;
  m.in_w = in_w;
  m.n_classes = n_classes;
  m.adapter = make_conv(1, 16, 5, 17, 8, 16, 2, 8);
  m.blocks.push_back(make_block(16, 16, 1, 2, true));
  m.blocks.push_back(make_block(16, 32, 2, 2, true));
  m.blocks.push_back(make_block(32, 64, 2, 2, true));
  m.feat_dim = 64;
  m.head_w.assign(n_classes * m.feat_dim, 0.0);
  m.head_b.assign(n_classes, 0.0);
  m.ghw.assign(m.head_w.size(), 0.0);
  m.ghb.assign(m.head_b.size(), 0.0);
  m.vhw.assign(m.head_w.size(), 0.0);
  m.vhb.assign(m.head_b.size(), 0.0);
  init_model(m, seed);
  return m;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  if (logits.empty()) throw InvalidArgument("softmax: empty logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

int argmax(const std::vector<double>& v) {
  if (v.empty()) throw InvalidArgument("argmax: empty vector");
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

namespace {

std::vector<std::vector<double>> snapshot_params(ConvNetModel& m) {
  std::vector<std::vector<double>> snap;
  const std::vector<std::size_t> sizes = m.tensor_sizes();
  const std::vector<double*> ptrs = m.param_tensors();
  for (std::size_t i = 0; i < ptrs.size(); ++i)
    snap.emplace_back(ptrs[i], ptrs[i] + sizes[i]);
  return snap;
}

void restore_params(ConvNetModel& m, const std::vector<std::vector<double>>& snap) {
  const std::vector<double*> ptrs = m.param_tensors();
  for (std::size_t i = 0; i < ptrs.size(); ++i)
    std::copy(snap[i].begin(), snap[i].end(), ptrs[i]);
}

}  // namespace

TrainLog train(ConvNetModel& model, const float* features, std::size_t feat_dim,
               const std::vector<int>& labels, const std::vector<std::size_t>& train_idx,
               const std::vector<std::size_t>& val_idx, const TrainConfig& cfg) {
  validate_train_config(cfg);
  if (feat_dim != model.input_dim())
    throw InvalidArgument("train: feature dim does not match model input");
  if (train_idx.empty() || val_idx.empty())
    throw InvalidArgument("train: train and validation sets must be non-empty");

  TrainLog log;
  std::vector<std::vector<double>> best = snapshot_params(model);
  double best_acc = -1.0;
  std::size_t best_epoch = 0;

  std::vector<std::size_t> order(train_idx);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j =
          static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<int>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0.0;
    std::size_t done = 0;
    while (done < order.size()) {
      const std::size_t bn = std::min(cfg.batch_size, order.size() - done);
      model.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t k = 0; k < bn; ++k) {
        const std::size_t ex = order[done + k];
        batch_loss += model.accumulate_example(features + ex * feat_dim, labels[ex]);
      }
      if (!std::isfinite(batch_loss))
        throw TrainingFailure("training loss became non-finite at epoch " +
                              std::to_string(epoch));
      model.sgd_step(cfg.learning_rate, cfg.momentum, cfg.weight_decay, bn);
      loss_sum += batch_loss;
      done += bn;
    }

    const Metrics val = evaluate(model, features, feat_dim, labels, val_idx);
    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_sum / static_cast<double>(order.size());
    st.val_accuracy = val.accuracy;
    log.epochs.push_back(st);
    if (val.accuracy > best_acc) {
      best_acc = val.accuracy;
      best_epoch = epoch;
      best = snapshot_params(model);
    }
  }

  restore_params(model, best);
  log.best_epoch = best_epoch;
  log.best_val_accuracy = best_acc;
  return log;
}

Metrics evaluate(const ConvNetModel& model, const float* features, std::size_t feat_dim,
                 const std::vector<int>& labels, const std::vector<std::size_t>& idx) {
  if (feat_dim != model.input_dim())
    throw InvalidArgument("evaluate: feature dim does not match model input");
  if (idx.empty()) throw InvalidArgument("evaluate: empty example set");
  Metrics m;
  m.n_classes = model.n_classes;
  m.confusion.assign(m.n_classes * m.n_classes, 0);
  std::size_t correct = 0;
  for (std::size_t ex : idx) {
    const int label = labels[ex];
    if (label < 0 || static_cast<std::size_t>(label) >= m.n_classes)
      throw InvalidArgument("evaluate: label out of range");
    const std::vector<double> logits = model.forward(features + ex * feat_dim, feat_dim);
    const int pred = argmax(logits);
    m.confusion[static_cast<std::size_t>(label) * m.n_classes + static_cast<std::size_t>(pred)]++;
    if (pred == label) ++correct;
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(idx.size());
  m.per_class_recall.assign(m.n_classes, 0.0);
  for (std::size_t c = 0; c < m.n_classes; ++c) {
    std::size_t row = 0;
    for (std::size_t p = 0; p < m.n_classes; ++p) row += m.at(c, p);
    m.per_class_recall[c] =
        row == 0 ? 0.0 : static_cast<double>(m.at(c, c)) / static_cast<double>(row);
  }
  return m;
}

namespace {

double ce_loss(const ConvNetModel& model, const std::vector<float>& features, int label) {
  const std::vector<double> p = softmax(model.forward(features));
  return -std::log(std::max(p[static_cast<std::size_t>(label)], 1e-300));
}

}  // namespace

double grad_check(ConvNetModel& model, const std::vector<float>& features, int label,
                  double epsilon, std::size_t n_samples, double grad_perturb) {
  if (!(epsilon >= 1e-6 && epsilon <= 1e-3))
    throw InvalidArgument("grad_check: epsilon must be in [1e-6, 1e-3]");
  if (n_samples == 0) throw InvalidArgument("grad_check: n_samples must be positive");

  model.zero_grad();
  model.accumulate_example(features.data(), label);

  const std::vector<std::size_t> sizes = model.tensor_sizes();
  const std::vector<double*> params = model.param_tensors();
  const std::vector<double*> grads = model.grad_tensors();
  const std::size_t total = model.param_count();
  const std::size_t want = std::min(n_samples, total);

  Rng rng(derive_seed(0x6772616463686b, "grad-check-sample"));
  std::set<std::size_t> chosen;
  while (chosen.size() < want) {
    const double u = rng.uniform();
    chosen.insert(static_cast<std::size_t>(u * static_cast<double>(total)) % total);
  }

  double max_err = 0.0;
  for (std::size_t flat : chosen) {
    std::size_t t = 0, off = flat;
    while (off >= sizes[t]) {
      off -= sizes[t];
      ++t;
    }
    double* wp = params[t] + off;
    const double analytic = grads[t][off] + grad_perturb;
    const double orig = *wp;
    *wp = orig + epsilon;
    const double lp = ce_loss(model, features, label);
    *wp = orig - epsilon;
    const double lm = ce_loss(model, features, label);
    *wp = orig;
    const double numeric = (lp - lm) / (2.0 * epsilon);
    const double denom = std::max(std::abs(analytic) + std::abs(numeric), 1e-3);
    max_err = std::max(max_err, std::abs(analytic - numeric) / denom);
  }
  return max_err;
}

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64s(std::string& buf, const double* p, std::size_t n) {
  static_assert(sizeof(double) == 8);
  buf.append(reinterpret_cast<const char*>(p), n * 8);
}

struct Reader {
  const std::string& s;
  std::size_t pos = 0;
  explicit Reader(const std::string& str) : s(str) {}
  void need(std::size_t n, const char* what) {
    if (pos + n > s.size()) throw IoError(std::string("checkpoint truncated reading ") + what);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string out = s.substr(pos, n);
    pos += n;
    return out;
  }
};

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  const double* data;
  std::size_t numel;
};

std::vector<NamedTensor> named_tensors(ConvNetModel& m) {
  std::vector<NamedTensor> out;
  auto add_conv = [&](const std::string& prefix, ConvLayer& c) {
    out.push_back({prefix + ".w",
                   {static_cast<std::uint32_t>(c.out_ch), static_cast<std::uint32_t>(c.in_ch),
                    static_cast<std::uint32_t>(c.kh), static_cast<std::uint32_t>(c.kw)},
                   c.w.data(), c.w.size()});
    out.push_back({prefix + ".b", {static_cast<std::uint32_t>(c.out_ch)}, c.b.data(), c.b.size()});
  };
  add_conv("adapter", m.adapter);
  for (std::size_t k = 0; k < m.blocks.size(); ++k) {
    const std::string p = "block" + std::to_string(k);
    add_conv(p + ".conv1", m.blocks[k].conv1);
    add_conv(p + ".conv2", m.blocks[k].conv2);
    if (m.blocks[k].has_proj) add_conv(p + ".proj", m.blocks[k].proj);
  }
  out.push_back({"head.w",
                 {static_cast<std::uint32_t>(m.n_classes), static_cast<std::uint32_t>(m.feat_dim)},
                 m.head_w.data(), m.head_w.size()});
  out.push_back({"head.b", {static_cast<std::uint32_t>(m.n_classes)}, m.head_b.data(),
                 m.head_b.size()});
  if (!m.scaler.empty()) {
    out.push_back({"scaler.mean", {static_cast<std::uint32_t>(m.scaler.mean.size())},
                   m.scaler.mean.data(), m.scaler.mean.size()});
    out.push_back({"scaler.inv_std", {static_cast<std::uint32_t>(m.scaler.inv_std.size())},
                   m.scaler.inv_std.data(), m.scaler.inv_std.size()});
  }
  return out;
}

}  // namespace

void save_checkpoint(const ConvNetModel& model, const std::string& path) {
  ConvNetModel& m = const_cast<ConvNetModel&>(model);
  json meta;
  meta["format_version"] = 1;
  meta["task"] = task_name(model.task);
  meta["in_h"] = model.in_h;
  meta["in_w"] = model.in_w;
  meta["n_classes"] = model.n_classes;
  meta["feat_dim"] = model.feat_dim;
  meta["has_scaler"] = !model.scaler.empty();
  const std::string meta_str = meta.dump();

  std::string buf;
  buf.append("EMSL1");
  put_u32(buf, static_cast<std::uint32_t>(meta_str.size()));
  buf.append(meta_str);
  const std::vector<NamedTensor> tensors = named_tensors(m);
  put_u32(buf, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    put_u32(buf, static_cast<std::uint32_t>(t.name.size()));
    buf.append(t.name);
    put_u32(buf, static_cast<std::uint32_t>(t.dims.size()));
    std::size_t numel = 1;
    for (std::uint32_t d : t.dims) {
      put_u32(buf, d);
      numel *= d;
    }
    if (numel != t.numel) throw IoError("checkpoint: tensor shape mismatch for " + t.name);
    put_f64s(buf, t.data, t.numel);
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + tmp);
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw IoError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("rename failed: " + tmp + " -> " + path);
}

ConvNetModel load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader rd(blob);
  if (rd.bytes(5, "magic") != "EMSL1") throw IoError("bad checkpoint magic in " + path);
  const std::uint32_t meta_len = rd.u32("meta length");
  json meta;
  try {
    meta = json::parse(rd.bytes(meta_len, "metadata"));
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint metadata parse error: ") + e.what());
  }

  ConvNetModel m;
  const TaskKind task = task_from_name(meta.at("task").get<std::string>());
  const std::size_t in_h = meta.at("in_h").get<std::size_t>();
  const std::size_t in_w = meta.at("in_w").get<std::size_t>();
  const std::size_t n_classes = meta.at("n_classes").get<std::size_t>();
  if (task == TaskKind::AppId)
    m = make_appid_model(in_w, n_classes, 0);
  else
    m = make_activity_model(in_h, in_w, n_classes, 0);

  if (meta.value("has_scaler", false)) {
    m.scaler.mean.assign(m.input_dim(), 0.0);
    m.scaler.inv_std.assign(m.input_dim(), 1.0);
  }

  std::vector<NamedTensor> tensors = named_tensors(m);
  const std::uint32_t n_tensors = rd.u32("tensor count");
  if (n_tensors != tensors.size())
    throw IoError("checkpoint tensor count mismatch: got " + std::to_string(n_tensors) +
                  ", expected " + std::to_string(tensors.size()));
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::uint32_t name_len = rd.u32("tensor name length");
    const std::string name = rd.bytes(name_len, "tensor name");
    if (name != tensors[i].name)
      throw IoError("checkpoint tensor order mismatch: got " + name + ", expected " +
                    tensors[i].name);
    const std::uint32_t ndim = rd.u32("tensor rank");
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) numel *= rd.u32("tensor dim");
    if (numel != tensors[i].numel)
      throw IoError("checkpoint tensor size mismatch for " + name);
    const std::string raw = rd.bytes(numel * 8, "tensor data");
    std::memcpy(const_cast<double*>(tensors[i].data), raw.data(), raw.size());
  }
  return m;
}

std::string metrics_to_json(const Metrics& m, const std::vector<std::string>& class_names) {
  json j;
  j["format_version"] = 1;
  j["n_classes"] = m.n_classes;
  j["accuracy"] = m.accuracy;
  j["per_class_recall"] = m.per_class_recall;
  j["class_names"] = class_names;
  std::vector<std::vector<std::size_t>> rows(m.n_classes);
  for (std::size_t t = 0; t < m.n_classes; ++t)
    for (std::size_t p = 0; p < m.n_classes; ++p) rows[t].push_back(m.at(t, p));
  j["confusion"] = rows;
  return j.dump(2) + "\n";
}

std::string confusion_to_csv(const Metrics& m, const std::vector<std::string>& class_names) {
  std::string out = "true_class";
  for (std::size_t p = 0; p < m.n_classes; ++p)
    out += "," + (p < class_names.size() ? class_names[p] : "class" + std::to_string(p));
  out += "\n";
  for (std::size_t t = 0; t < m.n_classes; ++t) {
    out += t < class_names.size() ? class_names[t] : "class" + std::to_string(t);
    for (std::size_t p = 0; p < m.n_classes; ++p) out += "," + std::to_string(m.at(t, p));
    out += "\n";
  }
  return out;
}

}  // namespace emsim
