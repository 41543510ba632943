#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gra/random.hpp"

namespace gra::nn {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;  // row-major

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0);
  Tensor(std::vector<std::size_t> s, std::vector<double> values);

  static std::size_t volume(std::span<const std::size_t> s);
  std::size_t size() const { return data.size(); }
  bool operator==(const Tensor&) const = default;
};

enum class LayerKind { Conv1d, ReLU, MaxPool1d, Flatten, Dense, Dropout, SigmoidDense };

const char* to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& s);

struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  std::size_t units = 0;   // Conv1d out_channels, Dense / SigmoidDense out_dim
  std::size_t kernel = 0;  // Conv1d
  std::size_t stride = 1;  // Conv1d
  std::size_t window = 0;  // MaxPool1d (stride = window)
  double rate = 0.0;       // Dropout

  bool has_params() const {
    return kind == LayerKind::Conv1d || kind == LayerKind::Dense || kind == LayerKind::SigmoidDense;
  }
  bool operator==(const LayerSpec&) const = default;

  static LayerSpec conv1d(std::size_t out_channels, std::size_t kernel, std::size_t stride = 1);
  static LayerSpec relu();
  static LayerSpec maxpool1d(std::size_t window);
  static LayerSpec flatten();
  static LayerSpec dense(std::size_t out_dim);
  static LayerSpec dropout(double rate);
  static LayerSpec sigmoid_dense(std::size_t out_dim = 1);
};

struct Layer {
  LayerSpec spec;
  std::vector<std::size_t> in_shape;   // per sample
  std::vector<std::size_t> out_shape;  // per sample
  Tensor weight;                       // Conv1d [out, in, k]; Dense [out, in]
  Tensor bias;                         // [out]
  bool operator==(const Layer&) const = default;
};

// Ordered layers plus a per-layer freeze mask (true = frozen).
class LayerStack {
 public:
  LayerStack() = default;
  // Validates shapes layer by layer and initializes parameters from `seed`
  // (He-uniform, Glorot-uniform before a sigmoid; zero biases), rounded to
  // float precision.
  LayerStack(std::vector<LayerSpec> specs, std::vector<std::size_t> input_shape, std::uint64_t seed);

  std::size_t size() const { return layers_.size(); }
  const std::vector<std::size_t>& input_shape() const { return input_shape_; }
  std::vector<std::size_t> output_shape() const;

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  const std::vector<bool>& freeze_mask() const { return freeze_mask_; }
  void set_freeze_mask(std::vector<bool> mask);

  // Unfreezes the last k layers and freezes the rest; returns the new mask.
  const std::vector<bool>& set_trainable_last_k(std::size_t k);

  // Rounds every parameter to the nearest float so checkpoints are exact.
  void round_to_float();
  std::size_t parameter_count() const;

  bool operator==(const LayerStack&) const = default;

 private:
  std::vector<Layer> layers_;
  std::vector<bool> freeze_mask_;
  std::vector<std::size_t> input_shape_;
};

// Per-sample output length of a valid cross-correlation.
std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride);

// Single-sample valid cross-correlation: input [C, L], kernel [O, C, K],
// bias [O] -> [O, floor((L - K) / stride) + 1].
Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride);

struct ForwardCache {
  std::vector<Tensor> inputs;                   // batch input of each layer
  std::vector<std::vector<double>> dropout;     // scaled keep masks
  std::vector<std::vector<std::size_t>> argmax; // pooling winners
  Tensor output;
  bool valid = false;
};

// Batch-first forward pass: input shape [B, ...input_shape]. Dropout draws
// masks from `rng` only when training is true.
Tensor forward(const LayerStack& stack, const Tensor& input, bool training, Rng* rng = nullptr,
               ForwardCache* cache = nullptr);

struct LayerGradient {
  Tensor weight;
  Tensor bias;
};

struct Gradients {
  std::vector<LayerGradient> layers;  // empty tensors for parameter-free layers
  Tensor input;
};

// Gradients for every parameterized layer, frozen or not, given dLoss/dOutput.
Gradients backward(const LayerStack& stack, const ForwardCache& cache, const Tensor& output_grad);

// Same, but `logit_grad` is dLoss/d(pre-sigmoid) of the final SigmoidDense.
// With `skip_frozen`, frozen layers get no parameter gradient and the pass
// stops below the earliest trainable layer.
Gradients backward_logits(const LayerStack& stack, const ForwardCache& cache, const Tensor& logit_grad,
                          bool skip_frozen = false);

inline constexpr double kBceEpsilon = 1e-7;

// Mean binary cross-entropy with predictions clamped to [eps, 1 - eps].
double bce_loss(std::span<const double> predictions, std::span<const double> labels);

enum class OptimizerKind { Adam, Sgd };

struct TrainConfig {
  int epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::optional<double> clip_norm;
};

inline TrainConfig train_config(int epochs, std::size_t batch_size, double learning_rate) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = batch_size;
  c.learning_rate = learning_rate;
  return c;
}

void validate(const TrainConfig& config);

// Adam with bias correction, or plain SGD. Frozen layers are skipped and
// keep no optimizer state.
class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& config) : config_(config) {}
  void step(LayerStack& stack, const Gradients& grads);

 private:
  struct Moments {
    std::vector<double> m_w, v_w, m_b, v_b;
  };
  TrainConfig config_;
  std::vector<Moments> moments_;
  std::vector<std::int64_t> steps_;
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean training-mode BCE per epoch
};

// Mini-batch training against BCE. `inputs` is [N, ...input_shape],
// `targets` holds N * output_dim values in {0, 1}. Deterministic per seed.
TrainResult train(LayerStack& stack, const Tensor& inputs, std::span<const double> targets,
                  const TrainConfig& config);

// Inference in batches; returns the flattened outputs.
std::vector<double> predict(const LayerStack& stack, const Tensor& inputs, std::size_t batch_size = 256);

}  // namespace gra::nn
