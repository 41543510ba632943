#include <algorithm>
#include <cmath>

#include "gra/error.hpp"
#include "gra/nn.hpp"

namespace gra::nn {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<std::size_t> batch_shape(std::size_t batch, const std::vector<std::size_t>& sample) {
  std::vector<std::size_t> s{batch};
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

void conv_forward(const Layer& layer, const Tensor& x, Tensor& y, std::size_t batch) {
  const std::size_t C = layer.in_shape[0], L = layer.in_shape[1];
  const std::size_t O = layer.out_shape[0], Lo = layer.out_shape[1];
  const std::size_t K = layer.spec.kernel, S = layer.spec.stride;
  const double* w = layer.weight.data.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < O; ++o) {
      double* yr = y.data.data() + (b * O + o) * Lo;
      std::fill(yr, yr + Lo, layer.bias.data[o]);
      for (std::size_t c = 0; c < C; ++c) {
        const double* xc = x.data.data() + (b * C + c) * L;
        for (std::size_t k = 0; k < K; ++k) {
          const double wv = w[(o * C + c) * K + k];
          const double* xr = xc + k;
          if (S == 1) {
            for (std::size_t t = 0; t < Lo; ++t) yr[t] += wv * xr[t];
          } else {
            for (std::size_t t = 0; t < Lo; ++t) yr[t] += wv * xr[t * S];
          }
        }
      }
    }
  }
}

void dense_forward(const Layer& layer, const Tensor& x, Tensor& y, std::size_t batch) {
  const std::size_t F = layer.in_shape[0], O = layer.out_shape[0];
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xr = x.data.data() + b * F;
    for (std::size_t o = 0; o < O; ++o) {
      const double* wr = layer.weight.data.data() + o * F;
      double acc = 0.0;
      for (std::size_t f = 0; f < F; ++f) acc += wr[f] * xr[f];
      y.data[b * O + o] = acc + layer.bias.data[o];
    }
  }
}

// dz [B, O] -> parameter gradients (optional) and input gradient (optional).
void dense_backward(const Layer& layer, const Tensor& x, const std::vector<double>& dz, std::size_t batch,
                    LayerGradient* pg, Tensor* gx) {
  const std::size_t F = layer.in_shape[0], O = layer.out_shape[0];
  if (pg) {
    pg->weight = Tensor(layer.weight.shape);
    pg->bias = Tensor(layer.bias.shape);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* xr = x.data.data() + b * F;
      for (std::size_t o = 0; o < O; ++o) {
        const double g = dz[b * O + o];
        if (g == 0.0) continue;
        double* wr = pg->weight.data.data() + o * F;
        for (std::size_t f = 0; f < F; ++f) wr[f] += g * xr[f];
        pg->bias.data[o] += g;
      }
    }
  }
  if (gx) {
    *gx = Tensor(x.shape);
    for (std::size_t b = 0; b < batch; ++b) {
      double* gr = gx->data.data() + b * F;
      for (std::size_t o = 0; o < O; ++o) {
        const double g = dz[b * O + o];
        if (g == 0.0) continue;
        const double* wr = layer.weight.data.data() + o * F;
        for (std::size_t f = 0; f < F; ++f) gr[f] += g * wr[f];
      }
    }
  }
}

void conv_backward(const Layer& layer, const Tensor& x, const std::vector<double>& dy, std::size_t batch,
                   LayerGradient* pg, Tensor* gx) {
  const std::size_t C = layer.in_shape[0], L = layer.in_shape[1];
  const std::size_t O = layer.out_shape[0], Lo = layer.out_shape[1];
  const std::size_t K = layer.spec.kernel, S = layer.spec.stride;
  if (pg) {
    pg->weight = Tensor(layer.weight.shape);
    pg->bias = Tensor(layer.bias.shape);
  }
  if (gx) *gx = Tensor(x.shape);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < O; ++o) {
      const double* gr = dy.data() + (b * O + o) * Lo;
      if (pg) {
        double s = 0.0;
        for (std::size_t t = 0; t < Lo; ++t) s += gr[t];
        pg->bias.data[o] += s;
      }
      for (std::size_t c = 0; c < C; ++c) {
        const double* xc = x.data.data() + (b * C + c) * L;
        double* gxc = gx ? gx->data.data() + (b * C + c) * L : nullptr;
        for (std::size_t k = 0; k < K; ++k) {
          const std::size_t wi = (o * C + c) * K + k;
          if (pg) {
            double acc = 0.0;
            for (std::size_t t = 0; t < Lo; ++t) acc += gr[t] * xc[t * S + k];
            pg->weight.data[wi] += acc;
          }
          if (gxc) {
            const double wv = layer.weight.data[wi];
            for (std::size_t t = 0; t < Lo; ++t) gxc[t * S + k] += wv * gr[t];
          }
        }
      }
    }
  }
}

std::string layer_name(std::size_t i, const Layer& layer) {
  return "layer " + std::to_string(i + 1) + " (" + to_string(layer.spec.kind) + ")";
}

}  // namespace

Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride) {
  if (input.shape.size() != 2 || kernel.shape.size() != 3 || bias.shape.size() != 1 ||
      kernel.shape[1] != input.shape[0] || bias.shape[0] != kernel.shape[0]) {
    fail(ErrorKind::Shape, "conv1d: expected input [C, L], kernel [O, C, K], bias [O]");
  }
  Layer layer;
  layer.spec = LayerSpec::conv1d(kernel.shape[0], kernel.shape[2], stride);
  layer.in_shape = input.shape;
  layer.out_shape = {kernel.shape[0], conv_output_length(input.shape[1], kernel.shape[2], stride)};
  layer.weight = kernel;
  layer.bias = bias;
  Tensor x({1, input.shape[0], input.shape[1]}, input.data);
  Tensor y(batch_shape(1, layer.out_shape));
  conv_forward(layer, x, y, 1);
  y.shape = layer.out_shape;
  return y;
}

Tensor forward(const LayerStack& stack, const Tensor& input, bool training, Rng* rng, ForwardCache* cache) {
  const auto& in_shape = stack.input_shape();
  if (input.shape.size() != in_shape.size() + 1 ||
      !std::equal(in_shape.begin(), in_shape.end(), input.shape.begin() + 1)) {
    fail(ErrorKind::Shape, "forward: input shape does not match the first layer");
  }
  const std::size_t batch = input.shape[0];
  if (cache) {
    cache->inputs.assign(stack.size(), Tensor{});
    cache->dropout.assign(stack.size(), {});
    cache->argmax.assign(stack.size(), {});
    cache->valid = false;
  }

  Tensor x = input;
  for (std::size_t i = 0; i < stack.size(); ++i) {
    const Layer& layer = stack.layers()[i];
    Tensor y(batch_shape(batch, layer.out_shape));
    switch (layer.spec.kind) {
      case LayerKind::Conv1d:
        conv_forward(layer, x, y, batch);
        break;
      case LayerKind::ReLU:
        for (std::size_t j = 0; j < x.size(); ++j) y.data[j] = x.data[j] > 0.0 ? x.data[j] : 0.0;
        break;
      case LayerKind::MaxPool1d: {
        const std::size_t C = layer.in_shape[0], L = layer.in_shape[1], W = layer.spec.window;
        const std::size_t Lo = layer.out_shape[1];
        std::vector<std::size_t> winners(y.size());
        for (std::size_t bc = 0; bc < batch * C; ++bc) {
          for (std::size_t t = 0; t < Lo; ++t) {
            std::size_t best = bc * L + t * W;
            for (std::size_t w = 1; w < W; ++w) {
              if (x.data[bc * L + t * W + w] > x.data[best]) best = bc * L + t * W + w;
            }
            y.data[bc * Lo + t] = x.data[best];
            winners[bc * Lo + t] = best;
          }
        }
        if (cache) cache->argmax[i] = std::move(winners);
        break;
      }
      case LayerKind::Flatten:
        y.data = x.data;
        break;
      case LayerKind::Dense:
        dense_forward(layer, x, y, batch);
        break;
      case LayerKind::SigmoidDense:
        dense_forward(layer, x, y, batch);
        for (auto& v : y.data) v = sigmoid(v);
        break;
      case LayerKind::Dropout:
        if (training && layer.spec.rate > 0.0) {
          if (!rng) fail(ErrorKind::State, "forward: dropout in training mode needs an rng");
          const double keep = 1.0 - layer.spec.rate;
          std::vector<double> mask(x.size());
          for (std::size_t j = 0; j < x.size(); ++j) {
            mask[j] = rng->uniform() < layer.spec.rate ? 0.0 : 1.0 / keep;
            y.data[j] = x.data[j] * mask[j];
          }
          if (cache) cache->dropout[i] = std::move(mask);
        } else {
          y.data = x.data;
        }
        break;
    }
    for (double v : y.data) {
      if (!std::isfinite(v)) fail(ErrorKind::Numeric, "non-finite activation in " + layer_name(i, layer));
    }
    if (cache) cache->inputs[i] = std::move(x);
    x = std::move(y);
  }
  if (cache) {
    cache->output = x;
    cache->valid = true;
  }
  return x;
}

namespace {

Gradients backward_impl(const LayerStack& stack, const ForwardCache& cache, const Tensor& grad,
                        bool grad_is_logit, bool skip_frozen) {
  if (!cache.valid || cache.inputs.size() != stack.size()) {
    fail(ErrorKind::State, "backward: no forward cache for this stack");
  }
  if (grad.shape != cache.output.shape) fail(ErrorKind::Shape, "backward: gradient shape mismatch");
  const std::size_t n = stack.size();
  const std::size_t batch = grad.shape[0];
  const auto& mask = stack.freeze_mask();

  std::size_t stop = 0;  // lowest layer that needs processing
  if (skip_frozen) {
    stop = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (stack.layers()[i].spec.has_params() && !mask[i]) {
        stop = i;
        break;
      }
    }
  }

  Gradients out;
  out.layers.resize(n);
  std::vector<double> g = grad.data;
  for (std::size_t ii = n; ii-- > stop;) {
    const Layer& layer = stack.layers()[ii];
    const Tensor& x = cache.inputs[ii];
    const bool want_params = layer.spec.has_params() && !(skip_frozen && mask[ii]);
    const bool want_input = ii > stop || !skip_frozen;
    LayerGradient* pg = want_params ? &out.layers[ii] : nullptr;
    Tensor gx;
    switch (layer.spec.kind) {
      case LayerKind::ReLU:
        for (std::size_t j = 0; j < g.size(); ++j) {
          if (!(x.data[j] > 0.0)) g[j] = 0.0;
        }
        gx.shape = x.shape;
        gx.data = std::move(g);
        break;
      case LayerKind::MaxPool1d: {
        gx = Tensor(x.shape);
        const auto& winners = cache.argmax[ii];
        for (std::size_t j = 0; j < g.size(); ++j) gx.data[winners[j]] += g[j];
        break;
      }
      case LayerKind::Flatten:
        gx.shape = x.shape;
        gx.data = std::move(g);
        break;
      case LayerKind::Dropout: {
        const auto& drop = cache.dropout[ii];
        if (!drop.empty()) {
          for (std::size_t j = 0; j < g.size(); ++j) g[j] *= drop[j];
        }
        gx.shape = x.shape;
        gx.data = std::move(g);
        break;
      }
      case LayerKind::SigmoidDense: {
        if (!(grad_is_logit && ii == n - 1)) {
          const Tensor& y = ii + 1 < n ? cache.inputs[ii + 1] : cache.output;
          for (std::size_t j = 0; j < g.size(); ++j) g[j] *= y.data[j] * (1.0 - y.data[j]);
        }
        dense_backward(layer, x, g, batch, pg, want_input ? &gx : nullptr);
        break;
      }
      case LayerKind::Dense:
        dense_backward(layer, x, g, batch, pg, want_input ? &gx : nullptr);
        break;
      case LayerKind::Conv1d:
        conv_backward(layer, x, g, batch, pg, want_input ? &gx : nullptr);
        break;
    }
    g = std::move(gx.data);
    if (ii == 0 && want_input) out.input = Tensor(x.shape, g);
  }
  return out;
}

}  // namespace

Gradients backward(const LayerStack& stack, const ForwardCache& cache, const Tensor& output_grad) {
  return backward_impl(stack, cache, output_grad, false, false);
}

Gradients backward_logits(const LayerStack& stack, const ForwardCache& cache, const Tensor& logit_grad,
                          bool skip_frozen) {
  if (stack.size() == 0 || stack.layers().back().spec.kind != LayerKind::SigmoidDense) {
    fail(ErrorKind::State, "backward_logits: final layer must be SigmoidDense");
  }
  return backward_impl(stack, cache, logit_grad, true, skip_frozen);
}

double bce_loss(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.size() != labels.size()) fail(ErrorKind::Shape, "bce_loss: length mismatch");
  if (predictions.empty()) fail(ErrorKind::Input, "bce_loss: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double y = labels[i];
    if (y != 0.0 && y != 1.0) fail(ErrorKind::Input, "bce_loss: label not in {0, 1}");
    const double p = std::clamp(predictions[i], kBceEpsilon, 1.0 - kBceEpsilon);
    sum += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
  }
  return sum / static_cast<double>(predictions.size());
}

}  // namespace gra::nn
