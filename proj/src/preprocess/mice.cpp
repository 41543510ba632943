#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "gra/error.hpp"
#include "gra/preprocess.hpp"
#include "gra/random.hpp"

namespace gra::prep {

FeatureMatrix mice_impute(const FeatureMatrix& matrix, const MiceConfig& config, MiceReport* report) {
  if (config.max_iter < 1) fail(ErrorKind::Config, "mice: max_iter must be >= 1");
  if (!(config.tol >= 0.0)) fail(ErrorKind::Config, "mice: tol must be non-negative");
  const auto names = matrix.schema.column_names();
  const auto numeric = matrix.schema.numeric_columns();
  const std::size_t n = matrix.n_rows;

  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < matrix.n_cols; ++c) {
      if (!matrix.is_missing(r, c) && !std::isfinite(matrix.at(r, c))) {
        fail(ErrorKind::Input, "mice: non-finite observed value in column '" + names[c] + "'");
      }
    }
  }

  FeatureMatrix out = matrix;
  MiceReport local;
  MiceReport& rep = report ? *report : local;
  rep = {};

  // Incomplete numeric columns, ascending; mean initialization.
  std::vector<std::size_t> incomplete;
  for (std::size_t c : numeric) {
    double sum = 0.0;
    std::size_t observed = 0;
    for (std::size_t r = 0; r < n; ++r) {
      if (!out.is_missing(r, c)) {
        sum += out.at(r, c);
        ++observed;
      }
    }
    if (observed == n) continue;
    if (observed == 0) {
      fail(ErrorKind::MissingAllValues, "mice: column '" + names[c] + "' has no observed values");
    }
    const double mean = sum / static_cast<double>(observed);
    for (std::size_t r = 0; r < n; ++r) {
      if (out.is_missing(r, c)) out.at(r, c) = mean;
    }
    incomplete.push_back(c);
  }
  if (incomplete.empty()) {
    rep.converged = true;
    return out;
  }

  Rng rng(config.seed);
  for (int iter = 1; iter <= config.max_iter; ++iter) {
    double max_change = 0.0;
    for (std::size_t target : incomplete) {
      std::vector<std::size_t> predictors;
      for (std::size_t c : numeric) {
        if (c != target) predictors.push_back(c);
      }
      const auto p = static_cast<Eigen::Index>(predictors.size() + 1);
      std::vector<std::size_t> obs_rows, miss_rows;
      for (std::size_t r = 0; r < n; ++r) (out.is_missing(r, target) ? miss_rows : obs_rows).push_back(r);

      auto design_row = [&](std::size_t r, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) {
        row(0) = 1.0;
        for (std::size_t k = 0; k < predictors.size(); ++k) row(static_cast<Eigen::Index>(k + 1)) = out.at(r, predictors[k]);
      };
      Eigen::MatrixXd x(static_cast<Eigen::Index>(obs_rows.size()), p);
      Eigen::VectorXd y(static_cast<Eigen::Index>(obs_rows.size()));
      for (std::size_t i = 0; i < obs_rows.size(); ++i) {
        design_row(obs_rows[i], x.row(static_cast<Eigen::Index>(i)));
        y(static_cast<Eigen::Index>(i)) = out.at(obs_rows[i], target);
      }
      const Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
      double resid_sd = 0.0;
      if (config.residual_noise && x.rows() > p) {
        resid_sd = std::sqrt((x * beta - y).squaredNorm() / static_cast<double>(x.rows() - p));
      }

      Eigen::RowVectorXd row(p);
      for (std::size_t r : miss_rows) {
        design_row(r, row);
        double v = row.dot(beta);
        if (config.residual_noise) v += rng.normal(0.0, resid_sd);
        if (!std::isfinite(v)) {
          fail(ErrorKind::Numeric, "mice: non-finite imputation in column '" + names[target] + "'");
        }
        max_change = std::max(max_change, std::abs(v - out.at(r, target)));
        out.at(r, target) = v;
      }
    }
    rep.iterations = iter;
    rep.max_change.push_back(max_change);
    if (max_change < config.tol) {
      rep.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace gra::prep
