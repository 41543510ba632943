#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "gra/error.hpp"
#include "gra/eval.hpp"

namespace gra::eval {

namespace {

void check_lengths(std::span<const double> scores, std::span<const int> labels, const char* who) {
  if (scores.size() != labels.size()) fail(ErrorKind::Input, std::string(who) + ": length mismatch");
  for (int y : labels) {
    if (y != 0 && y != 1) fail(ErrorKind::Input, std::string(who) + ": labels must be 0/1");
  }
}

std::size_t count_pos(std::span<const int> labels) {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

// Mid-ranks (1-based) of values.
std::vector<double> mid_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double f1_score(double ppv, double sensitivity) {
  const double den = ppv + sensitivity;
  return den > 0.0 ? 2.0 * ppv * sensitivity / den : 0.0;
}

std::vector<double> threshold_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(i / 20.0);
  return grid;
}

ConfusionCounts confusion(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_lengths(scores, labels, "confusion");
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) {
      (predicted ? c.tp : c.fn)++;
    } else {
      (predicted ? c.fp : c.tn)++;
    }
  }
  return c;
}

RateMetrics metrics(const ConfusionCounts& c) {
  if (c.total() == 0) fail(ErrorKind::Evaluation, "metrics: no evaluated rows");
  RateMetrics m;
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.sensitivity = ratio(c.tp, c.tp + c.fn);
  m.specificity = ratio(c.tn, c.tn + c.fp);
  m.ppv = ratio(c.tp, c.tp + c.fp);
  m.npv = ratio(c.tn, c.tn + c.fn);
  m.f1 = f1_score(m.ppv, m.sensitivity);
  return m;
}

double tune_threshold(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels, "tune_threshold");
  const std::size_t pos = count_pos(labels);
  if (pos == 0 || pos == labels.size()) {
    fail(ErrorKind::Evaluation, "tune_threshold: validation labels need both classes");
  }
  double best_t = 0.0, best_f1 = -1.0;
  for (double t : threshold_grid()) {
    const double f1 = metrics(confusion(scores, labels, t)).f1;
    if (f1 > best_f1) {
      best_f1 = f1;
      best_t = t;
    }
  }
  return best_t;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels, "auroc");
  const std::size_t pos = count_pos(labels);
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) fail(ErrorKind::Evaluation, "auroc: both classes required");
  const auto ranks = mid_ranks(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (labels[i] == 1) rank_sum += ranks[i];
  }
  const double u = rank_sum - static_cast<double>(pos) * static_cast<double>(pos + 1) / 2.0;
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels, "auprc");
  const std::size_t pos = count_pos(labels);
  if (pos == 0) fail(ErrorKind::Evaluation, "auprc: no positive labels");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  double ap = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t group_pos = 0, j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      group_pos += static_cast<std::size_t>(labels[idx[j]]);
      ++j;
    }
    tp += group_pos;
    seen += j - i;
    if (group_pos > 0) {
      ap += static_cast<double>(group_pos) / static_cast<double>(pos) *
            (static_cast<double>(tp) / static_cast<double>(seen));
    }
    i = j;
  }
  return ap;
}

std::vector<SubgroupMetrics> subgroup_eval(std::span<const double> scores, std::span<const int> labels,
                                           std::span<const std::string> groups) {
  check_lengths(scores, labels, "subgroup_eval");
  if (groups.size() != scores.size()) fail(ErrorKind::Input, "subgroup_eval: group count mismatch");
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < groups.size(); ++i) members[groups[i]].push_back(i);
  std::vector<SubgroupMetrics> out;
  for (const auto& [name, rows] : members) {
    SubgroupMetrics m;
    m.group = name;
    m.n = rows.size();
    std::vector<double> s;
    std::vector<int> y;
    for (auto r : rows) {
      s.push_back(scores[r]);
      y.push_back(labels[r]);
    }
    m.n_positive = count_pos(y);
    m.evaluable = m.n_positive > 0 && m.n_positive < m.n;
    if (m.evaluable) {
      m.auroc = auroc(s, y);
      m.auprc = auprc(s, y);
    }
    out.push_back(std::move(m));
  }
  return out;
}

EvalReport evaluate(std::span<const double> scores, std::span<const int> labels, double threshold,
                    std::span<const std::string> groups) {
  EvalReport r;
  r.auroc = auroc(scores, labels);
  r.auprc = auprc(scores, labels);
  r.threshold = threshold;
  r.counts = confusion(scores, labels, threshold);
  const RateMetrics m = metrics(r.counts);
  r.accuracy = m.accuracy;
  r.sensitivity = m.sensitivity;
  r.specificity = m.specificity;
  r.ppv = m.ppv;
  r.npv = m.npv;
  r.f1 = m.f1;
  if (!groups.empty()) r.subgroups = subgroup_eval(scores, labels, groups);
  return r;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorKind::Input, "spearman: length mismatch");
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::isnan(x[i]) || std::isnan(y[i])) continue;
    xs.push_back(x[i]);
    ys.push_back(y[i]);
  }
  if (xs.size() < 2) fail(ErrorKind::Evaluation, "spearman: fewer than two complete pairs");
  const auto rx = mid_ranks(xs), ry = mid_ranks(ys);
  const double n = static_cast<double>(rx.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::vector<CurvePoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels, "roc_curve");
  const std::size_t pos = count_pos(labels), neg = labels.size() - pos;
  if (pos == 0 || neg == 0) fail(ErrorKind::Evaluation, "roc_curve: both classes required");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  std::vector<CurvePoint> pts{{0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] ? tp : fp)++;
      ++j;
    }
    pts.push_back({ratio(fp, neg), ratio(tp, pos)});
    i = j;
  }
  return pts;
}

std::vector<CurvePoint> pr_curve(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels, "pr_curve");
  const std::size_t pos = count_pos(labels);
  if (pos == 0) fail(ErrorKind::Evaluation, "pr_curve: no positive labels");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  std::vector<CurvePoint> pts;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      tp += static_cast<std::size_t>(labels[idx[j]]);
      ++j;
    }
    seen = j;
    pts.push_back({ratio(tp, pos), ratio(tp, seen)});
    i = j;
  }
  return pts;
}

}  // namespace gra::eval
