#include <algorithm>
#include <cmath>
#include <numeric>

#include "gra/error.hpp"
#include "gra/model.hpp"

namespace gra::model {

std::size_t Autoencoder::embedding_dim() const {
  return net.size() == 0 ? 0 : net.layers().front().spec.units;
}

std::vector<double> Autoencoder::embed(std::span<const double> rows, std::size_t n) const {
  const std::size_t dim_in = input_dim(), d = embedding_dim();
  if (rows.size() != n * dim_in) fail(ErrorKind::Shape, "autoencoder: expected rows of width " + std::to_string(dim_in));
  const nn::Layer& enc = net.layers().front();
  std::vector<double> out(n * d);
  for (std::size_t r = 0; r < n; ++r) {
    const double* x = rows.data() + r * dim_in;
    for (std::size_t j = 0; j < d; ++j) {
      const double* w = enc.weight.data.data() + j * dim_in;
      double acc = enc.bias.data[j];
      for (std::size_t i = 0; i < dim_in; ++i) acc += w[i] * x[i];
      out[r * d + j] = std::max(acc, 0.0);
    }
  }
  return out;
}

double reconstruction_loss(const Autoencoder& ae, std::span<const double> rows, std::size_t n) {
  const std::size_t dim_in = ae.input_dim();
  if (rows.size() != n * dim_in) fail(ErrorKind::Shape, "reconstruction_loss: row width mismatch");
  if (n == 0) fail(ErrorKind::Input, "reconstruction_loss: no rows");
  const nn::Tensor x({n, dim_in}, std::vector<double>(rows.begin(), rows.end()));
  const auto p = nn::predict(ae.net, x);
  return nn::bce_loss(p, rows);
}

Autoencoder pretrain_autoencoder(std::span<const double> rows, std::size_t n, std::vector<std::string> columns,
                                 const AutoencoderConfig& config, AutoencoderReport* report) {
  const std::size_t dim_in = columns.size();
  if (dim_in == 0) fail(ErrorKind::Config, "autoencoder: no input columns");
  if (config.embedding_dim == 0 || config.embedding_dim >= dim_in) {
    fail(ErrorKind::Config, "autoencoder: embedding_dim must be in [1, " + std::to_string(dim_in - 1) + "], got " +
                                std::to_string(config.embedding_dim));
  }
  if (!(config.holdout_fraction >= 0.0 && config.holdout_fraction < 1.0)) {
    fail(ErrorKind::Config, "autoencoder: holdout_fraction must be in [0, 1)");
  }
  if (n == 0) fail(ErrorKind::Input, "autoencoder: no training rows");
  if (rows.size() != n * dim_in) fail(ErrorKind::Shape, "autoencoder: row width mismatch");
  for (double v : rows) {
    if (v != 0.0 && v != 1.0) fail(ErrorKind::Input, "autoencoder: inputs must be 0/1 indicators");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(substream_seed(config.train.seed, 0xAE));
  rng.shuffle(std::span(order));
  std::size_t n_hold = 0;
  if (n >= 2 && config.holdout_fraction > 0.0) {
    n_hold = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(config.holdout_fraction * n)));
  }
  std::vector<std::size_t> hold(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));
  std::vector<std::size_t> fit(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());
  std::sort(hold.begin(), hold.end());
  std::sort(fit.begin(), fit.end());
  if (hold.empty()) hold = fit;

  auto gather = [&](const std::vector<std::size_t>& idx) {
    std::vector<double> out;
    out.reserve(idx.size() * dim_in);
    for (auto r : idx) out.insert(out.end(), rows.begin() + static_cast<std::ptrdiff_t>(r * dim_in),
                                  rows.begin() + static_cast<std::ptrdiff_t>((r + 1) * dim_in));
    return out;
  };
  const auto fit_rows = gather(fit);
  const auto hold_rows = gather(hold);

  Autoencoder ae;
  ae.columns = std::move(columns);
  ae.net = nn::LayerStack({nn::LayerSpec::dense(config.embedding_dim), nn::LayerSpec::relu(),
                           nn::LayerSpec::sigmoid_dense(dim_in)},
                          {dim_in}, config.train.seed);

  AutoencoderReport rep;
  rep.initial_holdout_loss = reconstruction_loss(ae, hold_rows, hold.size());
  const nn::Tensor x({fit.size(), dim_in}, fit_rows);
  rep.epoch_loss = nn::train(ae.net, x, fit_rows, config.train).epoch_loss;
  ae.net.round_to_float();
  rep.final_holdout_loss = reconstruction_loss(ae, hold_rows, hold.size());
  if (report) *report = std::move(rep);
  return ae;
}

}  // namespace gra::model
