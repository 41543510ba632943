#include <algorithm>
#include <cmath>
#include <numeric>

#include "gra/error.hpp"
#include "gra/model.hpp"

namespace gra::model {

namespace {

// Copies column range [begin, begin + width) of the given rows.
std::vector<double> block(const prep::FeatureMatrix& m, std::span<const std::size_t> rows, std::size_t begin,
                          std::size_t width) {
  std::vector<double> out;
  out.reserve(rows.size() * width);
  for (auto r : rows) {
    const auto row = m.row(r);
    out.insert(out.end(), row.begin() + static_cast<std::ptrdiff_t>(begin),
               row.begin() + static_cast<std::ptrdiff_t>(begin + width));
  }
  return out;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

std::vector<int> pick(std::span<const int> v, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(v[r]);
  return out;
}

double tune_on(const GraModel& model, const nn::Tensor& inputs, std::span<const int> labels,
               std::span<const std::size_t> rows) {
  const auto scores = predict_inputs(model, select_rows(inputs, rows));
  return eval::tune_threshold(scores, pick(labels, rows));
}

bool has_trainable_params(const nn::LayerStack& stack) {
  for (std::size_t i = 0; i < stack.size(); ++i) {
    if (stack.layers()[i].spec.has_params() && !stack.freeze_mask()[i]) return true;
  }
  return false;
}

}  // namespace

std::vector<nn::LayerSpec> cnn_layer_specs() {
  using nn::LayerSpec;
  return {LayerSpec::conv1d(8, 5),  LayerSpec::relu(),        LayerSpec::conv1d(8, 5),   LayerSpec::relu(),
          LayerSpec::maxpool1d(2),  LayerSpec::conv1d(16, 3), LayerSpec::relu(),         LayerSpec::conv1d(16, 3),
          LayerSpec::relu(),        LayerSpec::maxpool1d(2),  LayerSpec::flatten(),      LayerSpec::dense(64),
          LayerSpec::relu(),        LayerSpec::dropout(0.3),  LayerSpec::dense(32),      LayerSpec::relu(),
          LayerSpec::dropout(0.3),  LayerSpec::sigmoid_dense(1)};
}

std::size_t input_length(const GraModel& m) {
  return m.dx_ae.embedding_dim() + m.med_ae.embedding_dim() + m.schema.demographic_columns.size() +
         m.schema.continuous_columns.size();
}

nn::Tensor assemble_input(const GraModel& model, std::span<const double> row) {
  if (row.size() != model.schema.n_columns()) {
    fail(ErrorKind::Shape, "assemble_input: row has " + std::to_string(row.size()) + " values, schema has " +
                               std::to_string(model.schema.n_columns()));
  }
  prep::FeatureMatrix m;
  m.n_rows = 1;
  m.n_cols = row.size();
  m.values.assign(row.begin(), row.end());
  m.missing.assign(row.size(), 0);
  m.patient_ids = {0};
  m.schema = model.schema;
  nn::Tensor t = assemble_inputs(model, m);
  t.shape = {1, t.shape.back()};
  return t;
}

nn::Tensor assemble_inputs(const GraModel& model, const prep::FeatureMatrix& matrix) {
  model.schema.validate();
  if (!(matrix.schema == model.schema)) fail(ErrorKind::Shape, "assemble_inputs: matrix schema differs from model schema");
  const auto& s = model.schema;
  if (model.dx_ae.input_dim() != s.dx_columns.size() || model.med_ae.input_dim() != s.med_columns.size()) {
    fail(ErrorKind::Shape, "assemble_inputs: autoencoder width does not match schema");
  }
  for (double v : matrix.values) {
    if (std::isnan(v)) fail(ErrorKind::Input, "assemble_inputs: matrix has missing values; impute first");
  }
  const std::size_t n = matrix.n_rows;
  const auto rows = all_rows(n);
  const auto dx = model.dx_ae.embed(block(matrix, rows, s.dx_offset(), s.dx_columns.size()), n);
  const auto med = model.med_ae.embed(block(matrix, rows, s.med_offset(), s.med_columns.size()), n);
  const std::size_t ddx = model.dx_ae.embedding_dim(), dmed = model.med_ae.embedding_dim();
  const std::size_t ndemo = s.demographic_columns.size(), ncont = s.continuous_columns.size();
  const std::size_t len = ddx + dmed + ndemo + ncont;

  nn::Tensor out({n, 1, len});
  for (std::size_t r = 0; r < n; ++r) {
    double* o = out.data.data() + r * len;
    const auto row = matrix.row(r);
    o = std::copy_n(dx.begin() + static_cast<std::ptrdiff_t>(r * ddx), ddx, o);
    o = std::copy_n(med.begin() + static_cast<std::ptrdiff_t>(r * dmed), dmed, o);
    o = std::copy_n(row.begin(), ndemo, o);
    std::copy_n(row.begin() + static_cast<std::ptrdiff_t>(s.continuous_offset()), ncont, o);
  }
  return out;
}

nn::Tensor select_rows(const nn::Tensor& inputs, std::span<const std::size_t> rows) {
  if (inputs.shape.empty()) fail(ErrorKind::Shape, "select_rows: empty tensor");
  const std::size_t n = inputs.shape[0];
  const std::size_t width = n == 0 ? 0 : inputs.size() / n;
  auto shape = inputs.shape;
  shape[0] = rows.size();
  nn::Tensor out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) fail(ErrorKind::Shape, "select_rows: row index out of range");
    std::copy_n(inputs.data.begin() + static_cast<std::ptrdiff_t>(rows[i] * width), width,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * width));
  }
  return out;
}

std::vector<double> predict_inputs(const GraModel& model, const nn::Tensor& inputs) {
  const std::size_t len = input_length(model);
  if (inputs.shape.size() != 3 || inputs.shape[1] != 1 || inputs.shape[2] != len) {
    fail(ErrorKind::Shape, "predict: expected inputs of shape [N, 1, " + std::to_string(len) + "]");
  }
  return nn::predict(model.cnn, inputs);
}

std::vector<double> predict(const GraModel& model, const prep::FeatureMatrix& matrix) {
  return predict_inputs(model, assemble_inputs(model, matrix));
}

GraModel pretrain_gra(const prep::FeatureMatrix& matrix, std::span<const int> labels,
                      const prep::SplitIndices& split, const prep::ScalerParams& scaler, const GraConfig& config,
                      PretrainReport* report) {
  if (labels.size() != matrix.n_rows) fail(ErrorKind::Shape, "pretrain: label count differs from row count");
  if (split.train.empty() || split.validation.empty()) fail(ErrorKind::Input, "pretrain: empty train or validation split");
  matrix.schema.validate();

  GraModel model;
  model.schema = matrix.schema;
  model.scaler = scaler;
  const auto& s = matrix.schema;
  const auto names = s.column_names();
  auto slice = [&](std::size_t begin, std::size_t width) {
    return std::vector<std::string>(names.begin() + static_cast<std::ptrdiff_t>(begin),
                                    names.begin() + static_cast<std::ptrdiff_t>(begin + width));
  };

  PretrainReport rep;
  AutoencoderConfig ae_cfg = config.autoencoder;
  ae_cfg.train.seed = substream_seed(config.seed, 11);
  model.dx_ae = pretrain_autoencoder(block(matrix, split.train, s.dx_offset(), s.dx_columns.size()),
                                     split.train.size(), slice(s.dx_offset(), s.dx_columns.size()), ae_cfg, &rep.dx);
  ae_cfg.train.seed = substream_seed(config.seed, 12);
  model.med_ae = pretrain_autoencoder(block(matrix, split.train, s.med_offset(), s.med_columns.size()),
                                      split.train.size(), slice(s.med_offset(), s.med_columns.size()), ae_cfg,
                                      &rep.med);

  const nn::Tensor inputs = assemble_inputs(model, matrix);
  model.cnn = nn::LayerStack(cnn_layer_specs(), {1, input_length(model)}, substream_seed(config.seed, 13));
  nn::TrainConfig tc = config.cnn;
  tc.seed = substream_seed(config.seed, 14);
  std::vector<double> y;
  for (auto r : split.train) y.push_back(labels[r]);
  rep.cnn = nn::train(model.cnn, select_rows(inputs, split.train), y, tc);
  model.cnn.round_to_float();
  model.threshold = tune_on(model, inputs, labels, split.validation);
  if (report) *report = std::move(rep);
  return model;
}

std::vector<std::size_t> finetune_subsample(std::span<const int> train_labels, double fraction_percent,
                                            std::uint64_t seed) {
  if (!(fraction_percent > 0.0 && fraction_percent <= 100.0)) {
    fail(ErrorKind::Config, "fraction must be in (0, 100] percent");
  }
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < train_labels.size(); ++i) (train_labels[i] == 1 ? pos : neg).push_back(i);
  Rng rng(seed);
  rng.shuffle(std::span(pos));
  rng.shuffle(std::span(neg));
  const std::size_t n = train_labels.size();
  const auto n_take = static_cast<std::size_t>(std::floor(fraction_percent / 100.0 * static_cast<double>(n) + 1e-9));
  const double prevalence = n == 0 ? 0.0 : static_cast<double>(pos.size()) / static_cast<double>(n);
  auto pos_take = static_cast<std::size_t>(std::llround(static_cast<double>(n_take) * prevalence));
  pos_take = std::min(pos_take, pos.size());
  if (n_take - pos_take > neg.size()) pos_take = n_take - neg.size();
  std::vector<std::size_t> out(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(pos_take));
  out.insert(out.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(n_take - pos_take));
  std::sort(out.begin(), out.end());
  return out;
}

FinetuneResult finetune(const GraModel& model, const nn::Tensor& inputs, std::span<const int> labels,
                        const prep::SplitIndices& split, const FinetuneConfig& config) {
  if (config.k > model.cnn.size()) {
    fail(ErrorKind::Config, "k must be in [0, " + std::to_string(model.cnn.size()) + "], got " + std::to_string(config.k));
  }
  if (inputs.shape.empty() || inputs.shape[0] != labels.size()) {
    fail(ErrorKind::Shape, "finetune: label count differs from input rows");
  }
  if (split.validation.empty()) fail(ErrorKind::Input, "finetune: empty validation split");
  const auto train_labels = pick(labels, split.train);
  const auto sub = finetune_subsample(train_labels, config.fraction_percent, substream_seed(config.seed, 21));

  FinetuneResult result{model, {}, {}};
  for (auto i : sub) result.subsample.push_back(split.train[i]);
  GraModel& out = result.model;
  out.cnn.set_trainable_last_k(config.k);
  if (has_trainable_params(out.cnn) && !result.subsample.empty()) {
    nn::TrainConfig tc = config.train;
    tc.seed = substream_seed(config.seed, 22);
    std::vector<double> y;
    for (auto r : result.subsample) y.push_back(labels[r]);
    result.train = nn::train(out.cnn, select_rows(inputs, result.subsample), y, tc);
    out.cnn.round_to_float();
  }
  out.threshold = tune_on(out, inputs, labels, split.validation);
  return result;
}

FinetuneResult finetune(const GraModel& model, const prep::FeatureMatrix& matrix, std::span<const int> labels,
                        const prep::SplitIndices& split, const FinetuneConfig& config) {
  return finetune(model, assemble_inputs(model, matrix), labels, split, config);
}

}  // namespace gra::model
