#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gra/preprocess.hpp"

namespace gra::baseline {

// Split nodes send x[feature] <= threshold left; leaves hold a log-odds increment.
struct TreeNode {
  int feature = -1;  // -1 for a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::size_t depth() const;
  bool operator==(const Tree&) const = default;
};

struct GbtConfig {
  std::size_t n_trees = 100;
  std::size_t max_depth = 3;
  double learning_rate = 0.1;
  std::size_t min_leaf = 5;
  std::uint64_t seed = 0;  // recorded only; fitting has no random steps
};

struct GbtModel {
  double base_score = 0.0;  // prior log-odds
  std::vector<Tree> trees;
  double learning_rate = 0.1;
  std::vector<std::string> columns;
  double threshold = 0.5;
  bool operator==(const GbtModel&) const = default;
};

// Row-major matrix restricted to demographic columns.
struct DemographicMatrix {
  std::vector<std::string> columns;
  std::size_t n_rows = 0;
  std::vector<double> values;
  double at(std::size_t r, std::size_t c) const { return values[r * columns.size() + c]; }
};

// Picks the demographic columns of a feature matrix, in schema order.
DemographicMatrix demographic_matrix(const prep::FeatureMatrix& matrix);
DemographicMatrix demographic_matrix(const prep::FeatureMatrix& matrix, std::span<const std::size_t> rows);

// Throws Error(Schema) when any column is not a demographic column.
void check_demographic_columns(std::span<const std::string> columns);

// Logistic-loss boosting: each tree is grown greedily on the residuals
// y - p by exact variance-reduction splits, leaves are mean residuals.
// Split ties go to the lowest feature index, then the lowest threshold.
GbtModel fit_gbdt(const DemographicMatrix& x, std::span<const int> labels, const GbtConfig& config);

std::vector<double> predict_gbdt(const GbtModel& model, const DemographicMatrix& x);
double predict_logit(const GbtModel& model, std::span<const double> row);

// Mean logistic loss of the model on (x, labels).
double logistic_loss(const GbtModel& model, const DemographicMatrix& x, std::span<const int> labels);

nlohmann::json to_json(const GbtModel& model);
GbtModel gbt_from_json(const nlohmann::json& j);

}  // namespace gra::baseline
