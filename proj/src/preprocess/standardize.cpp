#include <cmath>
#include <set>

#include "gra/error.hpp"
#include "gra/preprocess.hpp"

namespace gra::prep {

ScalerParams fit_standardizer(const FeatureMatrix& matrix, std::span<const std::size_t> train_rows) {
  if (train_rows.empty()) fail(ErrorKind::Input, "fit_standardizer: no training rows");
  const auto names = matrix.schema.column_names();
  ScalerParams params;
  for (std::size_t c : matrix.schema.numeric_columns()) {
    double sum = 0.0;
    std::size_t n = 0;
    std::set<double> distinct;
    for (std::size_t r : train_rows) {
      if (matrix.is_missing(r, c)) continue;
      const double v = matrix.at(r, c);
      sum += v;
      ++n;
      if (distinct.size() < 2) distinct.insert(v);
    }
    if (distinct.size() < 2) {
      fail(ErrorKind::DegenerateColumn,
           "column '" + names[c] + "' has fewer than two distinct observed training values");
    }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t r : train_rows) {
      if (matrix.is_missing(r, c)) continue;
      const double d = matrix.at(r, c) - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n));
    if (!(sd > 0.0)) fail(ErrorKind::DegenerateColumn, "column '" + names[c] + "' has zero variance");
    params.columns.push_back(names[c]);
    params.mean.push_back(mean);
    params.sd.push_back(sd);
  }
  return params;
}

FeatureMatrix apply_standardizer(const FeatureMatrix& matrix, const ScalerParams& params) {
  const auto names = matrix.schema.column_names();
  const auto numeric = matrix.schema.numeric_columns();
  if (numeric.size() != params.columns.size()) {
    fail(ErrorKind::Shape, "scaler has " + std::to_string(params.columns.size()) +
                               " columns, matrix has " + std::to_string(numeric.size()));
  }
  FeatureMatrix out = matrix;
  for (std::size_t k = 0; k < numeric.size(); ++k) {
    const std::size_t c = numeric[k];
    if (names[c] != params.columns[k]) {
      fail(ErrorKind::Schema, "scaler column '" + params.columns[k] + "' does not match '" + names[c] + "'");
    }
    for (std::size_t r = 0; r < out.n_rows; ++r) {
      if (out.is_missing(r, c)) continue;
      out.at(r, c) = (out.at(r, c) - params.mean[k]) / params.sd[k];
    }
  }
  return out;
}

nlohmann::json to_json(const ScalerParams& p) {
  return {{"columns", p.columns}, {"mean", p.mean}, {"sd", p.sd}};
}

ScalerParams scaler_from_json(const nlohmann::json& j) {
  ScalerParams p;
  try {
    p.columns = j.at("columns").get<std::vector<std::string>>();
    p.mean = j.at("mean").get<std::vector<double>>();
    p.sd = j.at("sd").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("scaler params: ") + e.what());
  }
  if (p.mean.size() != p.columns.size() || p.sd.size() != p.columns.size()) {
    fail(ErrorKind::Format, "scaler params: length mismatch");
  }
  for (double sd : p.sd) {
    if (!(sd > 0.0)) fail(ErrorKind::Format, "scaler params: non-positive sd");
  }
  return p;
}

}  // namespace gra::prep
