#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "gra/error.hpp"
#include "gra/eval.hpp"

namespace gra::eval {

namespace {

std::string fmt(double v, int digits = 6) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

nlohmann::json num_or_null(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

}  // namespace

CalibrationTable decile_calibration(std::span<const double> scores, const CalibrationOutcomes& o) {
  const std::size_t n = scores.size();
  if (n < 10) fail(ErrorKind::Evaluation, "decile_calibration: need at least 10 rows, got " + std::to_string(n));
  if (o.diagnosis.size() != n || o.treatment.size() != n || o.max_iop.size() != n || o.max_cdr.size() != n) {
    fail(ErrorKind::Input, "decile_calibration: outcome channels must match the score count");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  CalibrationTable table;
  const std::size_t base = n / 10, extra = n % 10;
  std::size_t pos = 0;
  for (std::size_t b = 0; b < 10; ++b) {
    CalibrationBucket& bucket = table.buckets[b];
    bucket.index = b;
    bucket.n = base + (b >= 10 - extra ? 1 : 0);
    double pred = 0, dx = 0, tx = 0, iop = 0, cdr = 0;
    for (std::size_t k = 0; k < bucket.n; ++k, ++pos) {
      const std::size_t i = order[pos];
      bucket.members.push_back(i);
      pred += scores[i];
      dx += o.diagnosis[i];
      tx += o.treatment[i];
      if (o.max_iop[i]) {
        iop += *o.max_iop[i];
        ++bucket.iop_n;
      }
      if (o.max_cdr[i]) {
        cdr += *o.max_cdr[i];
        ++bucket.cdr_n;
      }
    }
    const auto cnt = static_cast<double>(bucket.n);
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    bucket.mean_predicted = pred / cnt;
    bucket.dx_rate = dx / cnt;
    bucket.tx_rate = tx / cnt;
    bucket.mean_max_iop = bucket.iop_n ? iop / static_cast<double>(bucket.iop_n) : nan;
    bucket.mean_max_cdr = bucket.cdr_n ? cdr / static_cast<double>(bucket.cdr_n) : nan;
  }
  return table;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : r.subgroups) {
    groups.push_back({{"group", g.group},
                      {"n", g.n},
                      {"n_positive", g.n_positive},
                      {"evaluable", g.evaluable},
                      {"auroc", g.evaluable ? nlohmann::json(g.auroc) : nlohmann::json(nullptr)},
                      {"auprc", g.evaluable ? nlohmann::json(g.auprc) : nlohmann::json(nullptr)}});
  }
  return {{"auroc", r.auroc},
          {"auprc", r.auprc},
          {"accuracy", r.accuracy},
          {"sensitivity", r.sensitivity},
          {"specificity", r.specificity},
          {"ppv", r.ppv},
          {"npv", r.npv},
          {"f1", r.f1},
          {"threshold", r.threshold},
          {"counts", {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"tn", r.counts.tn}, {"fn", r.counts.fn}}},
          {"subgroups", std::move(groups)}};
}

nlohmann::json to_json(const CalibrationTable& t) {
  nlohmann::json buckets = nlohmann::json::array();
  for (const auto& b : t.buckets) {
    buckets.push_back({{"bucket_index", b.index},
                       {"n", b.n},
                       {"mean_pred", b.mean_predicted},
                       {"dx_rate", b.dx_rate},
                       {"tx_rate", b.tx_rate},
                       {"mean_max_iop", num_or_null(b.mean_max_iop)},
                       {"iop_n", b.iop_n},
                       {"mean_max_cdr", num_or_null(b.mean_max_cdr)},
                       {"cdr_n", b.cdr_n}});
  }
  return {{"buckets", std::move(buckets)}};
}

std::string report_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "metric,value\n";
  const std::pair<const char*, double> rows[] = {
      {"auroc", r.auroc},       {"auprc", r.auprc}, {"accuracy", r.accuracy}, {"sensitivity", r.sensitivity},
      {"specificity", r.specificity}, {"ppv", r.ppv}, {"npv", r.npv},       {"f1", r.f1},
      {"threshold", r.threshold}};
  for (const auto& [name, v] : rows) out << name << ',' << fmt(v) << '\n';
  if (!r.subgroups.empty()) {
    out << "\ngroup,n,n_positive,auroc,auprc\n";
    for (const auto& g : r.subgroups) {
      out << g.group << ',' << g.n << ',' << g.n_positive << ','
          << (g.evaluable ? fmt(g.auroc) : "unevaluable") << ','
          << (g.evaluable ? fmt(g.auprc) : "unevaluable") << '\n';
    }
  }
  return out.str();
}

std::string calibration_csv(const CalibrationTable& t) {
  std::ostringstream out;
  out << "bucket_index,mean_pred,n,dx_rate,tx_rate,mean_max_iop,iop_n,mean_max_cdr,cdr_n\n";
  for (const auto& b : t.buckets) {
    out << b.index << ',' << fmt(b.mean_predicted) << ',' << b.n << ',' << fmt(b.dx_rate) << ','
        << fmt(b.tx_rate) << ',' << fmt(b.mean_max_iop, 3) << ',' << b.iop_n << ',' << fmt(b.mean_max_cdr)
        << ',' << b.cdr_n << '\n';
  }
  return out.str();
}

}  // namespace gra::eval
