#include "gra/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "gra/error.hpp"

namespace gra::baseline {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const DemographicMatrix& x, const std::vector<double>& residual, const GbtConfig& cfg)
      : x_(x), r_(residual), cfg_(cfg) {}

  Tree build(std::vector<std::size_t> rows) {
    Tree tree;
    grow(tree, std::move(rows), 0);
    return tree;
  }

 private:
  int grow(Tree& tree, std::vector<std::size_t> rows, std::size_t depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    double sum = 0.0;
    for (auto i : rows) sum += r_[i];
    const Split s = depth < cfg_.max_depth ? best_split(rows, sum) : Split{};
    if (s.feature < 0) {
      tree.nodes[static_cast<std::size_t>(id)].value = rows.empty() ? 0.0 : sum / static_cast<double>(rows.size());
      return id;
    }
    std::vector<std::size_t> left, right;
    for (auto i : rows) (x_.at(i, static_cast<std::size_t>(s.feature)) <= s.threshold ? left : right).push_back(i);
    const int l = grow(tree, std::move(left), depth + 1);
    const int r = grow(tree, std::move(right), depth + 1);
    TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = s.feature;
    node.threshold = s.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  Split best_split(const std::vector<std::size_t>& rows, double total) const {
    Split best;
    const std::size_t n = rows.size();
    if (n < 2 * cfg_.min_leaf) return best;
    const double base = total * total / static_cast<double>(n);
    std::vector<std::size_t> order(rows);
    for (std::size_t f = 0; f < x_.columns.size(); ++f) {
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x_.at(a, f) < x_.at(b, f); });
      double left = 0.0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        left += r_[order[k]];
        const double v = x_.at(order[k], f), next = x_.at(order[k + 1], f);
        if (v == next) continue;
        const std::size_t nl = k + 1, nr = n - nl;
        if (nl < cfg_.min_leaf || nr < cfg_.min_leaf) continue;
        const double right = total - left;
        const double gain =
            left * left / static_cast<double>(nl) + right * right / static_cast<double>(nr) - base;
        if (gain > best.gain + 1e-12) {
          best = {static_cast<int>(f), 0.5 * (v + next), gain};
        }
      }
    }
    return best;
  }

  const DemographicMatrix& x_;
  const std::vector<double>& r_;
  const GbtConfig& cfg_;
};

std::size_t depth_of(const Tree& t, int node) {
  const TreeNode& n = t.nodes[static_cast<std::size_t>(node)];
  if (n.is_leaf()) return 0;
  return 1 + std::max(depth_of(t, n.left), depth_of(t, n.right));
}

}  // namespace

std::size_t Tree::depth() const { return nodes.empty() ? 0 : depth_of(*this, 0); }

void check_demographic_columns(std::span<const std::string> columns) {
  const auto allowed = prep::default_demographic_columns();
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& c : columns) {
    if (!ok.contains(c)) fail(ErrorKind::Schema, "baseline: non-demographic column '" + c + "'");
  }
}

DemographicMatrix demographic_matrix(const prep::FeatureMatrix& m, std::span<const std::size_t> rows) {
  DemographicMatrix out;
  out.columns = m.schema.demographic_columns;
  check_demographic_columns(out.columns);
  const std::size_t w = out.columns.size();
  out.n_rows = rows.size();
  out.values.reserve(rows.size() * w);
  for (auto r : rows) {
    if (r >= m.n_rows) fail(ErrorKind::Shape, "baseline: row index out of range");
    for (std::size_t c = 0; c < w; ++c) {
      const double v = m.at(r, c);
      if (std::isnan(v)) fail(ErrorKind::Input, "baseline: missing demographic value");
      out.values.push_back(v);
    }
  }
  return out;
}

DemographicMatrix demographic_matrix(const prep::FeatureMatrix& m) {
  std::vector<std::size_t> rows(m.n_rows);
  std::iota(rows.begin(), rows.end(), 0);
  return demographic_matrix(m, rows);
}

GbtModel fit_gbdt(const DemographicMatrix& x, std::span<const int> labels, const GbtConfig& cfg) {
  check_demographic_columns(x.columns);
  if (labels.size() != x.n_rows) fail(ErrorKind::Shape, "fit_gbdt: label count differs from rows");
  if (x.values.size() != x.n_rows * x.columns.size()) fail(ErrorKind::Shape, "fit_gbdt: matrix size mismatch");
  if (cfg.min_leaf < 1) fail(ErrorKind::Config, "fit_gbdt: min_leaf must be >= 1");
  if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate)) {
    fail(ErrorKind::Config, "fit_gbdt: learning_rate must be positive");
  }
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (pos == 0 || pos == labels.size()) fail(ErrorKind::Input, "fit_gbdt: both classes required");
  for (int y : labels) {
    if (y != 0 && y != 1) fail(ErrorKind::Input, "fit_gbdt: labels must be 0/1");
  }

  GbtModel model;
  model.columns = x.columns;
  model.learning_rate = cfg.learning_rate;
  const double prior = static_cast<double>(pos) / static_cast<double>(labels.size());
  model.base_score = std::log(prior / (1.0 - prior));

  const std::size_t n = x.n_rows;
  std::vector<double> logit(n, model.base_score), residual(n);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  for (std::size_t t = 0; t < cfg.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) residual[i] = labels[i] - sigmoid(logit[i]);
    Tree tree = TreeBuilder(x, residual, cfg).build(all);
    for (std::size_t i = 0; i < n; ++i) {
      int node = 0;
      while (!tree.nodes[static_cast<std::size_t>(node)].is_leaf()) {
        const TreeNode& nd = tree.nodes[static_cast<std::size_t>(node)];
        node = x.at(i, static_cast<std::size_t>(nd.feature)) <= nd.threshold ? nd.left : nd.right;
      }
      logit[i] += cfg.learning_rate * tree.nodes[static_cast<std::size_t>(node)].value;
    }
    model.trees.push_back(std::move(tree));
  }
  return model;
}

double predict_logit(const GbtModel& model, std::span<const double> row) {
  if (row.size() != model.columns.size()) fail(ErrorKind::Shape, "predict_gbdt: row width mismatch");
  double s = model.base_score;
  for (const auto& tree : model.trees) {
    int node = 0;
    while (!tree.nodes[static_cast<std::size_t>(node)].is_leaf()) {
      const TreeNode& nd = tree.nodes[static_cast<std::size_t>(node)];
      node = row[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
    }
    s += model.learning_rate * tree.nodes[static_cast<std::size_t>(node)].value;
  }
  return s;
}

std::vector<double> predict_gbdt(const GbtModel& model, const DemographicMatrix& x) {
  if (x.columns != model.columns) fail(ErrorKind::Schema, "predict_gbdt: columns differ from the model's");
  const std::size_t w = x.columns.size();
  std::vector<double> out(x.n_rows);
  for (std::size_t r = 0; r < x.n_rows; ++r) {
    out[r] = sigmoid(predict_logit(model, std::span(x.values).subspan(r * w, w)));
  }
  return out;
}

double logistic_loss(const GbtModel& model, const DemographicMatrix& x, std::span<const int> labels) {
  const auto p = predict_gbdt(model, x);
  if (labels.size() != p.size()) fail(ErrorKind::Shape, "logistic_loss: label count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], 1e-12, 1.0 - 1e-12);
    s -= labels[i] ? std::log(q) : std::log(1.0 - q);
  }
  return s / static_cast<double>(p.size());
}

nlohmann::json to_json(const GbtModel& m) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : m.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes) {
      if (n.is_leaf()) {
        nodes.push_back({{"value", n.value}});
      } else {
        nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
      }
    }
    trees.push_back(std::move(nodes));
  }
  return {{"base_score", m.base_score},
          {"learning_rate", m.learning_rate},
          {"columns", m.columns},
          {"threshold", m.threshold},
          {"trees", std::move(trees)}};
}

GbtModel gbt_from_json(const nlohmann::json& j) {
  try {
    GbtModel m;
    m.base_score = j.at("base_score").get<double>();
    m.learning_rate = j.at("learning_rate").get<double>();
    m.columns = j.at("columns").get<std::vector<std::string>>();
    m.threshold = j.at("threshold").get<double>();
    for (const auto& jt : j.at("trees")) {
      Tree t;
      for (const auto& jn : jt) {
        TreeNode n;
        if (jn.contains("value")) {
          n.value = jn.at("value").get<double>();
        } else {
          n.feature = jn.at("feature").get<int>();
          n.threshold = jn.at("threshold").get<double>();
          n.left = jn.at("left").get<int>();
          n.right = jn.at("right").get<int>();
        }
        t.nodes.push_back(n);
      }
      const auto size = static_cast<int>(t.nodes.size());
      for (const auto& n : t.nodes) {
        if (n.is_leaf()) continue;
        if (n.feature >= static_cast<int>(m.columns.size()) || n.left <= 0 || n.right <= 0 || n.left >= size ||
            n.right >= size || !std::isfinite(n.threshold)) {
          fail(ErrorKind::Format, "gbt: malformed tree node");
        }
      }
      if (t.nodes.empty()) fail(ErrorKind::Format, "gbt: empty tree");
      m.trees.push_back(std::move(t));
    }
    check_demographic_columns(m.columns);
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("gbt: ") + e.what());
  }
}

}  // namespace gra::baseline
