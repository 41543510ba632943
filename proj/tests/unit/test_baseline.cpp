#include <doctest.h>

#include <cmath>
#include <numeric>

#include "gra/baseline.hpp"
#include "gra/error.hpp"
#include "gra/eval.hpp"
#include "gra/random.hpp"

using namespace gra;
using namespace gra::baseline;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::State;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Fixture {
  DemographicMatrix x;
  std::vector<int> y;
};

// Age plus one-hot sex and race; label drawn from a logistic model on all of them.
Fixture random_fixture(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  Fixture f;
  f.x.columns = prep::default_demographic_columns();
  f.x.n_rows = n;
  const std::size_t d = f.x.columns.size();
  f.x.values.assign(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double age = std::round(rng.normal() * 10.0) / 10.0;
    const bool male = rng.bernoulli(0.5);
    const std::size_t race = rng.below(5);
    f.x.values[i * d] = age;
    f.x.values[i * d + (male ? 1 : 2)] = 1.0;
    f.x.values[i * d + 3 + race] = 1.0;
    const double logit = -1.5 + 1.2 * age + (male ? 0.4 : 0.0) + (race == 1 ? 0.8 : 0.0);
    f.y.push_back(rng.bernoulli(sigmoid(logit)) ? 1 : 0);
  }
  return f;
}

GbtConfig config(std::size_t trees, std::size_t depth, double lr, std::size_t min_leaf) {
  GbtConfig c;
  c.n_trees = trees;
  c.max_depth = depth;
  c.learning_rate = lr;
  c.min_leaf = min_leaf;
  return c;
}

}  // namespace

TEST_CASE("a single stump separates by age") {
  Rng rng(4);
  Fixture f;
  f.x.columns = prep::default_demographic_columns();
  const std::size_t n = 40, d = f.x.columns.size();
  f.x.n_rows = n;
  f.x.values.assign(n * d, 0.0);
  std::vector<double> residual;
  for (std::size_t i = 0; i < n; ++i) {
    const double age = static_cast<double>(i) / 4.0 + rng.uniform(0.0, 0.1);
    f.x.values[i * d] = age;
    f.x.values[i * d + 1 + rng.below(2)] = 1.0;
    f.x.values[i * d + 3 + rng.below(5)] = 1.0;
    f.y.push_back(i >= 22 ? 1 : 0);
  }
  const double p0 = 18.0 / 40.0;
  for (int y : f.y) residual.push_back(y - p0);

  // Exhaustive oracle over every feature and every midpoint.
  int best_f = -1;
  double best_t = 0.0, best_gain = 0.0;
  double total = std::accumulate(residual.begin(), residual.end(), 0.0);
  for (std::size_t feat = 0; feat < d; ++feat) {
    std::vector<double> vals;
    for (std::size_t i = 0; i < n; ++i) vals.push_back(f.x.at(i, feat));
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
      const double t = 0.5 * (vals[k] + vals[k + 1]);
      double sl = 0.0;
      std::size_t nl = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (f.x.at(i, feat) <= t) {
          sl += residual[i];
          ++nl;
        }
      }
      const double sr = total - sl;
      const double gain = sl * sl / nl + sr * sr / (n - nl) - total * total / n;
      if (gain > best_gain + 1e-12) {
        best_gain = gain;
        best_f = static_cast<int>(feat);
        best_t = t;
      }
    }
  }
  REQUIRE(best_f == 0);

  const auto m = fit_gbdt(f.x, f.y, config(1, 1, 0.1, 1));
  REQUIRE(m.trees.size() == 1);
  const auto& root = m.trees[0].nodes[0];
  CHECK(root.feature == best_f);
  CHECK(root.threshold == doctest::Approx(best_t).epsilon(1e-15));
  CHECK(m.trees[0].depth() == 1);
  CHECK(m.base_score == doctest::Approx(std::log(p0 / (1 - p0))));

  const auto scores = predict_gbdt(m, f.x);
  CHECK(eval::auroc(scores, f.y) == 1.0);
  const auto& left = m.trees[0].nodes[static_cast<std::size_t>(root.left)];
  CHECK(scores[0] == doctest::Approx(sigmoid(m.base_score + 0.1 * left.value)).epsilon(1e-15));
  CHECK(left.value == doctest::Approx(-p0));
}

TEST_CASE("no trees predicts the training prevalence") {
  const auto f = random_fixture(2, 300);
  const auto m = fit_gbdt(f.x, f.y, config(0, 3, 0.1, 5));
  const double prev = std::accumulate(f.y.begin(), f.y.end(), 0.0) / 300.0;
  for (double s : predict_gbdt(m, f.x)) CHECK(s == doctest::Approx(prev).epsilon(1e-12));
}

TEST_CASE("fitting is deterministic and depth-bounded") {
  const auto f = random_fixture(3, 400);
  const auto a = fit_gbdt(f.x, f.y, config(30, 3, 0.1, 5));
  const auto b = fit_gbdt(f.x, f.y, config(30, 3, 0.1, 5));
  CHECK(a == b);
  for (const auto& t : a.trees) {
    CHECK(t.depth() <= 3);
    for (const auto& node : t.nodes) {
      CHECK(std::isfinite(node.value));
      CHECK(std::isfinite(node.threshold));
    }
  }
  const auto s = predict_gbdt(a, f.x);
  for (double p : s) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
  CHECK(eval::auroc(s, f.y) > 0.7);
}

TEST_CASE("training loss descends tree by tree at a small learning rate") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto f = random_fixture(seed + 10, 250);
    const auto full = fit_gbdt(f.x, f.y, config(25, 3, 0.01, 5));
    GbtModel partial = full;
    double prev = INFINITY;
    for (std::size_t t = 0; t <= full.trees.size(); ++t) {
      partial.trees.assign(full.trees.begin(), full.trees.begin() + static_cast<std::ptrdiff_t>(t));
      const double loss = logistic_loss(partial, f.x, f.y);
      CHECK(loss <= prev + 1e-15);
      prev = loss;
    }
  }
}

TEST_CASE("leaf values stay finite for min_leaf = 1") {
  const auto f = random_fixture(5, 60);
  const auto m = fit_gbdt(f.x, f.y, config(20, 4, 0.3, 1));
  for (const auto& t : m.trees) {
    for (const auto& node : t.nodes) CHECK(std::isfinite(node.value));
  }
}

TEST_CASE("only demographic columns are used") {
  prep::FeatureSchema schema;
  schema.demographic_columns = prep::default_demographic_columns();
  schema.dx_columns = {10, 11};
  schema.continuous_columns = {{50, "lab_a"}};
  const std::size_t n = 200, d = schema.n_columns();
  const auto base = random_fixture(7, n);
  prep::FeatureMatrix wide;
  wide.schema = schema;
  wide.n_rows = n;
  wide.n_cols = d;
  wide.values.assign(n * d, 0.0);
  wide.missing.assign(n * d, 0);
  Rng rng(1);
  for (std::size_t i = 0; i < n; ++i) {
    wide.patient_ids.push_back(static_cast<std::int64_t>(i));
    for (std::size_t c = 0; c < 8; ++c) wide.at(i, c) = base.x.at(i, c);
    wide.at(i, 8) = rng.bernoulli(0.5);
    wide.at(i, 9) = rng.bernoulli(0.5);
    wide.at(i, 10) = rng.normal();
  }
  const auto demo = demographic_matrix(wide);
  CHECK(demo.columns == schema.demographic_columns);
  const auto m = fit_gbdt(demo, base.y, config(20, 3, 0.1, 5));
  const auto s = predict_gbdt(m, demo);

  auto shuffled = wide;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(std::span(perm));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 8; c < d; ++c) shuffled.at(i, c) = wide.at(perm[i], c);
  }
  CHECK(predict_gbdt(m, demographic_matrix(shuffled)) == s);
  const std::size_t rows[] = {4, 2};
  CHECK(demographic_matrix(wide, rows).at(0, 0) == wide.at(4, 0));

  DemographicMatrix leaky = demo;
  leaky.columns.back() = "lab_a";
  CHECK(kind_of([&] { fit_gbdt(leaky, base.y, config(1, 1, 0.1, 1)); }) == ErrorKind::Schema);
  const std::string cols[] = {"age", "dx_10"};
  CHECK(kind_of([&] { check_demographic_columns(cols); }) == ErrorKind::Schema);

  DemographicMatrix reordered = demo;
  std::swap(reordered.columns[1], reordered.columns[2]);
  CHECK(kind_of([&] { predict_gbdt(m, reordered); }) == ErrorKind::Schema);

  wide.at(0, 0) = std::nan("");
  CHECK(kind_of([&] { demographic_matrix(wide); }) == ErrorKind::Input);
}

TEST_CASE("fit errors") {
  auto f = random_fixture(8, 50);
  CHECK(kind_of([&] { fit_gbdt(f.x, f.y, config(1, 1, 0.1, 0)); }) == ErrorKind::Config);
  CHECK(kind_of([&] { fit_gbdt(f.x, f.y, config(1, 1, 0.0, 1)); }) == ErrorKind::Config);
  std::fill(f.y.begin(), f.y.end(), 0);
  CHECK(kind_of([&] { fit_gbdt(f.x, f.y, config(1, 1, 0.1, 1)); }) == ErrorKind::Input);
}

TEST_CASE("json round trip") {
  const auto f = random_fixture(9, 300);
  auto m = fit_gbdt(f.x, f.y, config(10, 3, 0.1, 5));
  m.threshold = 0.35;
  const auto back = gbt_from_json(nlohmann::json::parse(to_json(m).dump()));
  CHECK(back == m);
  CHECK(predict_gbdt(back, f.x) == predict_gbdt(m, f.x));

  auto j = to_json(m);
  j["trees"][0][0]["left"] = 999;
  CHECK(kind_of([&] { gbt_from_json(j); }) == ErrorKind::Format);
}
