#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emsim/common.hpp"

namespace emsim {

// All layers run in double precision so that analytic gradients can be
// checked against central differences down to 1e-4 relative error.
//
// Both tasks share one convolution engine: a 1-D FFT-vector input is treated
// as a height-1 image, so the app model's convolutions are (1 x k) kernels
// striding along frequency only.

struct ConvLayer {
  std::size_t in_ch = 0, out_ch = 0;
  std::size_t kh = 1, kw = 1;
  std::size_t sh = 1, sw = 1;
  std::size_t ph = 0, pw = 0;
  // w[((o * in_ch) + i) * kh * kw + ky * kw + kx], b[o].
  std::vector<double> w, b;
  std::vector<double> gw, gb;  // gradient accumulators
  std::vector<double> vw, vb;  // momentum buffers

  std::size_t out_h(std::size_t h) const { return (h + 2 * ph - kh) / sh + 1; }
  std::size_t out_w(std::size_t w_) const { return (w_ + 2 * pw - kw) / sw + 1; }

  void forward(const double* x, std::size_t h, std::size_t w_, double* y) const;
  // dx may be null for the first layer.
  void backward(const double* x, std::size_t h, std::size_t w_, const double* dy, double* dx);
};

// out = proj(x) + conv2(relu(conv1(x))).  conv1 carries the stride, conv2 is
// stride 1, and proj is a 1x1 strided convolution when the shape changes
// (otherwise the skip is the identity).  No activation after the sum, so a
// zero conv2 makes the unprojected block an exact identity.
struct ResBlock {
  ConvLayer conv1, conv2, proj;
  bool has_proj = false;
};

enum class TaskKind { AppId, Activity };

std::string task_name(TaskKind t);
TaskKind task_from_name(const std::string& s);

// Feature standardizer fitted on the training portion only.  Empty vectors
// mean identity.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> inv_std;

  bool empty() const { return mean.empty(); }
  void apply(const float* x, std::size_t n, double* out) const;
};

struct TrainConfig {
  double learning_rate = 0.02;
  std::size_t batch_size = 32;
  std::size_t epochs = 3;
  std::uint64_t seed = 1;
  double weight_decay = 1e-4;
  double momentum = 0.9;
};

void validate_train_config(const TrainConfig& cfg);

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainLog {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
};

struct Metrics {
  std::size_t n_classes = 0;
  // Row = true class, column = predicted class.
  std::vector<std::size_t> confusion;
  double accuracy = 0.0;
  std::vector<double> per_class_recall;

  std::size_t at(std::size_t t, std::size_t p) const { return confusion[t * n_classes + p]; }
};

class ConvNetModel {
 public:
  TaskKind task = TaskKind::AppId;
  std::size_t in_h = 1, in_w = 0;  // single input channel
  std::size_t n_classes = 0;
  ConvLayer adapter;
  std::vector<ResBlock> blocks;
  // head: logits[c] = head_b[c] + sum_k head_w[c * feat + k] * pooled[k].
  std::size_t feat_dim = 0;
  std::vector<double> head_w, head_b;
  std::vector<double> ghw, ghb, vhw, vhb;
  Standardizer scaler;

  std::size_t input_dim() const { return in_h * in_w; }
  std::size_t param_count() const;

  // Raw (unstandardized) float features -> logits.  Throws InvalidArgument on
  // a shape mismatch.
  std::vector<double> forward(const float* features, std::size_t n) const;
  std::vector<double> forward(const std::vector<float>& features) const;

  void zero_grad();
  // Accumulates gradients for one example and returns its cross-entropy
  // loss.  Forward state is kept in an internal workspace, so training is one
  // deterministic worker.
  double accumulate_example(const float* features, int label);
  // SGD step with momentum and weight decay on the accumulated gradients,
  // averaged over batch_n examples.  Weight decay skips biases.
  void sgd_step(double lr, double momentum, double weight_decay, std::size_t batch_n);

  std::vector<double*> param_tensors();
  std::vector<double*> grad_tensors();
  std::vector<std::size_t> tensor_sizes() const;

 private:
  mutable std::vector<std::vector<double>> act_;  // per-layer activations
  std::vector<double> run_forward(const float* features, bool keep_acts) const;
};

// FFT-vector classifier: adapter (1x17, stride 16) to 16 channels, residual
// blocks 16/32/64 halving the width, global average pool, linear head.
ConvNetModel make_appid_model(std::size_t input_len, std::size_t n_classes, std::uint64_t seed);

// Spectrogram classifier: adapter (5x17, stride 8x16), residual blocks
// 16/32/64, global average pool, linear head.
ConvNetModel make_activity_model(std::size_t in_h, std::size_t in_w, std::size_t n_classes,
                                 std::uint64_t seed);

std::vector<double> softmax(const std::vector<double>& logits);
int argmax(const std::vector<double>& v);

// Minibatch SGD on cross-entropy over raw float32 feature rows.  After each
// epoch validation accuracy is measured and the best-scoring weight snapshot
// is restored at the end.  A non-finite loss aborts with TrainingFailure
// naming the epoch.
TrainLog train(ConvNetModel& model, const float* features, std::size_t feat_dim,
               const std::vector<int>& labels, const std::vector<std::size_t>& train_idx,
               const std::vector<std::size_t>& val_idx, const TrainConfig& cfg);

Metrics evaluate(const ConvNetModel& model, const float* features, std::size_t feat_dim,
                 const std::vector<int>& labels, const std::vector<std::size_t>& idx);

// Compares analytic gradients against central finite differences on
// n_samples randomly chosen weights; returns the maximum relative error
// |a - n| / max(|a| + |n|, 1e-3).  grad_perturb offsets every analytic
// gradient and exists so tests can prove the checker catches corruption.
double grad_check(ConvNetModel& model, const std::vector<float>& features, int label,
                  double epsilon, std::size_t n_samples = 120, double grad_perturb = 0.0);

// Binary checkpoint: magic "EMSL1", a JSON metadata blob, then little-endian
// u32-shaped f64 tensors (weights plus the embedded standardizer).
void save_checkpoint(const ConvNetModel& model, const std::string& path);
ConvNetModel load_checkpoint(const std::string& path);

std::string metrics_to_json(const Metrics& m, const std::vector<std::string>& class_names);
std::string confusion_to_csv(const Metrics& m, const std::vector<std::string>& class_names);

}  // namespace emsim
