#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "gra/error.hpp"
#include "gra/nn.hpp"

namespace gra::nn {

Tensor::Tensor(std::vector<std::size_t> s, double fill) : shape(std::move(s)), data(volume(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> values)
    : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != volume(shape)) fail(ErrorKind::Shape, "tensor data does not match shape");
}

std::size_t Tensor::volume(std::span<const std::size_t> s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv1d: return "conv1d";
    case LayerKind::ReLU: return "relu";
    case LayerKind::MaxPool1d: return "maxpool1d";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Dense: return "dense";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::SigmoidDense: return "sigmoid_dense";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
  for (auto k : {LayerKind::Conv1d, LayerKind::ReLU, LayerKind::MaxPool1d, LayerKind::Flatten,
                 LayerKind::Dense, LayerKind::Dropout, LayerKind::SigmoidDense}) {
    if (s == to_string(k)) return k;
  }
  fail(ErrorKind::Format, "unknown layer kind '" + s + "'");
}

LayerSpec LayerSpec::conv1d(std::size_t out_channels, std::size_t kernel, std::size_t stride) {
  return {LayerKind::Conv1d, out_channels, kernel, stride, 0, 0.0};
}
LayerSpec LayerSpec::relu() { return {LayerKind::ReLU}; }
LayerSpec LayerSpec::maxpool1d(std::size_t window) { return {LayerKind::MaxPool1d, 0, 0, 1, window, 0.0}; }
LayerSpec LayerSpec::flatten() { return {LayerKind::Flatten}; }
LayerSpec LayerSpec::dense(std::size_t out_dim) { return {LayerKind::Dense, out_dim}; }
LayerSpec LayerSpec::dropout(double rate) { return {LayerKind::Dropout, 0, 0, 1, 0, rate}; }
LayerSpec LayerSpec::sigmoid_dense(std::size_t out_dim) { return {LayerKind::SigmoidDense, out_dim}; }

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride) {
  if (stride == 0 || kernel == 0 || kernel > length) {
    fail(ErrorKind::Shape, "conv1d: kernel " + std::to_string(kernel) + " / stride " +
                               std::to_string(stride) + " invalid for length " + std::to_string(length));
  }
  return (length - kernel) / stride + 1;
}

namespace {

float round_f(double x) { return static_cast<float>(x); }

}  // namespace

LayerStack::LayerStack(std::vector<LayerSpec> specs, std::vector<std::size_t> input_shape, std::uint64_t seed)
    : input_shape_(std::move(input_shape)) {
  Rng rng(substream_seed(seed, 0x1A7E5ULL));
  std::vector<std::size_t> shape = input_shape_;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& spec = specs[i];
    Layer layer;
    layer.spec = spec;
    layer.in_shape = shape;
    const std::string where = "layer " + std::to_string(i + 1) + " (" + to_string(spec.kind) + ")";
    const bool before_sigmoid = spec.kind == LayerKind::SigmoidDense;
    auto init = [&](Tensor& w, std::size_t fan_in, std::size_t fan_out) {
      const double limit = before_sigmoid ? std::sqrt(6.0 / static_cast<double>(fan_in + fan_out))
                                          : std::sqrt(6.0 / static_cast<double>(fan_in));
      for (auto& x : w.data) x = round_f(rng.uniform(-limit, limit));
    };
    switch (spec.kind) {
      case LayerKind::Conv1d: {
        if (shape.size() != 2) fail(ErrorKind::Shape, where + ": expects [channels, length] input");
        if (spec.units == 0) fail(ErrorKind::Config, where + ": zero output channels");
        const std::size_t out_len = conv_output_length(shape[1], spec.kernel, spec.stride);
        layer.weight = Tensor({spec.units, shape[0], spec.kernel});
        layer.bias = Tensor({spec.units});
        init(layer.weight, shape[0] * spec.kernel, spec.units * spec.kernel);
        shape = {spec.units, out_len};
        break;
      }
      case LayerKind::MaxPool1d: {
        if (shape.size() != 2) fail(ErrorKind::Shape, where + ": expects [channels, length] input");
        if (spec.window == 0 || spec.window > shape[1]) fail(ErrorKind::Shape, where + ": bad pool window");
        shape = {shape[0], shape[1] / spec.window};
        break;
      }
      case LayerKind::Flatten:
        shape = {Tensor::volume(shape)};
        break;
      case LayerKind::Dense:
      case LayerKind::SigmoidDense: {
        if (shape.size() != 1) fail(ErrorKind::Shape, where + ": expects flat input");
        if (spec.units == 0) fail(ErrorKind::Config, where + ": zero output units");
        layer.weight = Tensor({spec.units, shape[0]});
        layer.bias = Tensor({spec.units});
        init(layer.weight, shape[0], spec.units);
        shape = {spec.units};
        break;
      }
      case LayerKind::Dropout:
        if (!(spec.rate >= 0.0 && spec.rate < 1.0)) fail(ErrorKind::Config, where + ": rate must be in [0, 1)");
        break;
      case LayerKind::ReLU:
        break;
    }
    layer.out_shape = shape;
    layers_.push_back(std::move(layer));
  }
  freeze_mask_.assign(layers_.size(), false);
}

std::vector<std::size_t> LayerStack::output_shape() const {
  return layers_.empty() ? input_shape_ : layers_.back().out_shape;
}

void LayerStack::set_freeze_mask(std::vector<bool> mask) {
  if (mask.size() != layers_.size()) fail(ErrorKind::Config, "freeze mask length must equal layer count");
  freeze_mask_ = std::move(mask);
}

const std::vector<bool>& LayerStack::set_trainable_last_k(std::size_t k) {
  if (k > layers_.size()) {
    fail(ErrorKind::Config, "trainable layer count " + std::to_string(k) + " exceeds " +
                                std::to_string(layers_.size()) + " layers");
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) freeze_mask_[i] = i < layers_.size() - k;
  return freeze_mask_;
}

void LayerStack::round_to_float() {
  for (auto& layer : layers_) {
    for (auto& x : layer.weight.data) x = round_f(x);
    for (auto& x : layer.bias.data) x = round_f(x);
  }
}

std::size_t LayerStack::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

}  // namespace gra::nn
