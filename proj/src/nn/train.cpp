#include <algorithm>
#include <cmath>
#include <numeric>

#include "gra/error.hpp"
#include "gra/nn.hpp"

namespace gra::nn {

void validate(const TrainConfig& c) {
  if (c.epochs < 0) fail(ErrorKind::Config, "train: epochs must be non-negative");
  if (c.batch_size < 1) fail(ErrorKind::Config, "train: batch_size must be >= 1");
  if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate)) {
    fail(ErrorKind::Config, "train: learning_rate must be finite and non-negative");
  }
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0) || !(c.epsilon > 0.0)) {
    fail(ErrorKind::Config, "train: invalid moment coefficients");
  }
  if (c.clip_norm && !(*c.clip_norm > 0.0)) fail(ErrorKind::Config, "train: clip_norm must be positive");
}

void Optimizer::step(LayerStack& stack, const Gradients& grads) {
  auto& layers = stack.layers();
  const auto& frozen = stack.freeze_mask();
  if (grads.layers.size() != layers.size()) fail(ErrorKind::Shape, "optimizer: gradient count mismatch");
  if (moments_.size() != layers.size()) {
    moments_.assign(layers.size(), {});
    steps_.assign(layers.size(), 0);
  }

  double scale = 1.0;
  if (config_.clip_norm) {
    double sq = 0.0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (!layers[i].spec.has_params() || frozen[i]) continue;
      for (double g : grads.layers[i].weight.data) sq += g * g;
      for (double g : grads.layers[i].bias.data) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > *config_.clip_norm) scale = *config_.clip_norm / norm;
  }

  const double lr = config_.learning_rate;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!layers[i].spec.has_params() || frozen[i]) continue;
    const LayerGradient& g = grads.layers[i];
    Layer& layer = layers[i];
    if (g.weight.size() != layer.weight.size() || g.bias.size() != layer.bias.size()) {
      fail(ErrorKind::Shape, "optimizer: missing gradient for trainable layer " + std::to_string(i + 1));
    }
    if (config_.optimizer == OptimizerKind::Sgd) {
      for (std::size_t j = 0; j < layer.weight.size(); ++j) layer.weight.data[j] -= lr * scale * g.weight.data[j];
      for (std::size_t j = 0; j < layer.bias.size(); ++j) layer.bias.data[j] -= lr * scale * g.bias.data[j];
      continue;
    }
    Moments& mo = moments_[i];
    if (mo.m_w.empty()) {
      mo.m_w.assign(layer.weight.size(), 0.0);
      mo.v_w.assign(layer.weight.size(), 0.0);
      mo.m_b.assign(layer.bias.size(), 0.0);
      mo.v_b.assign(layer.bias.size(), 0.0);
    }
    const auto t = static_cast<double>(++steps_[i]);
    const double c1 = 1.0 - std::pow(config_.beta1, t);
    const double c2 = 1.0 - std::pow(config_.beta2, t);
    auto update = [&](std::vector<double>& p, const std::vector<double>& grad, std::vector<double>& m,
                      std::vector<double>& v) {
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double gj = grad[j] * scale;
        m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * gj;
        v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * gj * gj;
        p[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.epsilon);
      }
    };
    update(layer.weight.data, g.weight.data, mo.m_w, mo.v_w);
    update(layer.bias.data, g.bias.data, mo.m_b, mo.v_b);
  }
}

TrainResult train(LayerStack& stack, const Tensor& inputs, std::span<const double> targets,
                  const TrainConfig& config) {
  validate(config);
  if (stack.size() == 0 || stack.layers().back().spec.kind != LayerKind::SigmoidDense) {
    fail(ErrorKind::Config, "train: final layer must be SigmoidDense");
  }
  if (inputs.shape.empty() || inputs.shape[0] == 0) fail(ErrorKind::Input, "train: no training rows");
  const std::size_t n = inputs.shape[0];
  const std::size_t out_dim = stack.output_shape()[0];
  const std::size_t row = inputs.size() / n;
  if (targets.size() != n * out_dim) fail(ErrorKind::Shape, "train: target count mismatch");
  for (double y : targets) {
    if (y != 0.0 && y != 1.0) fail(ErrorKind::Input, "train: targets must be 0/1");
  }

  Rng order_rng(substream_seed(config.seed, 1));
  Rng dropout_rng(substream_seed(config.seed, 2));
  Optimizer opt(config);
  TrainResult result;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  ForwardCache cache;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    order_rng.shuffle(std::span(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t b = std::min(config.batch_size, n - start);
      std::vector<std::size_t> shape = inputs.shape;
      shape[0] = b;
      Tensor x(shape);
      std::vector<double> y(b * out_dim);
      for (std::size_t k = 0; k < b; ++k) {
        const std::size_t src = order[start + k];
        std::copy_n(inputs.data.begin() + static_cast<std::ptrdiff_t>(src * row), row,
                    x.data.begin() + static_cast<std::ptrdiff_t>(k * row));
        std::copy_n(targets.begin() + static_cast<std::ptrdiff_t>(src * out_dim), out_dim,
                    y.begin() + static_cast<std::ptrdiff_t>(k * out_dim));
      }
      Tensor p;
      try {
        p = forward(stack, x, true, &dropout_rng, &cache);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Numeric) throw;
        fail(ErrorKind::Numeric, "training diverged in epoch " + std::to_string(epoch + 1) + ": " + e.what());
      }
      loss_sum += bce_loss(p.data, y) * static_cast<double>(b);
      Tensor dz(p.shape);
      const double denom = static_cast<double>(b * out_dim);
      for (std::size_t j = 0; j < dz.size(); ++j) dz.data[j] = (p.data[j] - y[j]) / denom;
      opt.step(stack, backward_logits(stack, cache, dz, true));
    }
    const double loss = loss_sum / static_cast<double>(n);
    if (!std::isfinite(loss)) {
      fail(ErrorKind::Numeric, "training diverged in epoch " + std::to_string(epoch + 1));
    }
    result.epoch_loss.push_back(loss);
  }
  return result;
}

std::vector<double> predict(const LayerStack& stack, const Tensor& inputs, std::size_t batch_size) {
  if (inputs.shape.empty()) fail(ErrorKind::Shape, "predict: empty input shape");
  const std::size_t n = inputs.shape[0];
  if (n == 0) return {};
  const std::size_t row = inputs.size() / n;
  std::vector<double> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t b = std::min(batch_size, n - start);
    std::vector<std::size_t> shape = inputs.shape;
    shape[0] = b;
    Tensor x(shape, std::vector<double>(inputs.data.begin() + static_cast<std::ptrdiff_t>(start * row),
                                        inputs.data.begin() + static_cast<std::ptrdiff_t>((start + b) * row)));
    const Tensor y = forward(stack, x, false);
    out.insert(out.end(), y.data.begin(), y.data.end());
  }
  return out;
}

}  // namespace gra::nn
