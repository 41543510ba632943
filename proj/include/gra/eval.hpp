#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace gra::eval {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::uint64_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

// Ratio metrics derived from counts; zero denominators yield 0.0.
struct RateMetrics {
  double accuracy = 0, sensitivity = 0, specificity = 0, ppv = 0, npv = 0, f1 = 0;
};

struct SubgroupMetrics {
  std::string group;
  std::size_t n = 0;
  std::size_t n_positive = 0;
  bool evaluable = false;  // both classes present
  double auroc = 0.0;
  double auprc = 0.0;
};

struct EvalReport {
  double auroc = 0, auprc = 0, accuracy = 0, sensitivity = 0, specificity = 0, ppv = 0, npv = 0, f1 = 0;
  double threshold = 0;
  ConfusionCounts counts;
  std::vector<SubgroupMetrics> subgroups;
};

// Harmonic mean of precision and recall, 0 when both are 0.
double f1_score(double ppv, double sensitivity);

// Grid {0.00, 0.05, ..., 1.00}; lowest grid value attaining the maximum F1.
double tune_threshold(std::span<const double> scores, std::span<const int> labels);
std::vector<double> threshold_grid();

// Predicted positive iff score >= threshold.
ConfusionCounts confusion(std::span<const double> scores, std::span<const int> labels, double threshold);

RateMetrics metrics(const ConfusionCounts& counts);

// P(score_pos > score_neg) + 0.5 P(score_pos == score_neg), via mid-ranks.
double auroc(std::span<const double> scores, std::span<const int> labels);

// Average precision. Tied scores form one operating point: every positive
// in a tie group is credited with the precision at the end of the group.
double auprc(std::span<const double> scores, std::span<const int> labels);

// Subgroups are reported in lexicographic order of their names.
std::vector<SubgroupMetrics> subgroup_eval(std::span<const double> scores, std::span<const int> labels,
                                           std::span<const std::string> groups);

EvalReport evaluate(std::span<const double> scores, std::span<const int> labels, double threshold,
                    std::span<const std::string> groups = {});

struct CalibrationOutcomes {
  std::vector<int> diagnosis;
  std::vector<int> treatment;
  std::vector<std::optional<double>> max_iop;
  std::vector<std::optional<double>> max_cdr;
};

struct CalibrationBucket {
  std::size_t index = 0;
  std::size_t n = 0;
  double mean_predicted = 0;
  double dx_rate = 0;
  double tx_rate = 0;
  double mean_max_iop = 0;  // NaN when no values in the bucket
  std::size_t iop_n = 0;
  double mean_max_cdr = 0;
  std::size_t cdr_n = 0;
  std::vector<std::size_t> members;  // input indices, ascending score order
};

struct CalibrationTable {
  std::array<CalibrationBucket, 10> buckets;
};

// Ten equal-count buckets by ascending score (stable for ties); the n % 10
// leftover rows go one each to the highest buckets.
CalibrationTable decile_calibration(std::span<const double> scores, const CalibrationOutcomes& outcomes);

// Spearman rank correlation with mid-ranks for ties. NaN entries excluded pairwise.
double spearman(std::span<const double> x, std::span<const double> y);

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const CalibrationTable& table);
std::string report_csv(const EvalReport& report);
std::string calibration_csv(const CalibrationTable& table);

struct CurvePoint {
  double x = 0, y = 0;
};
// (false positive rate, true positive rate) at every distinct threshold.
std::vector<CurvePoint> roc_curve(std::span<const double> scores, std::span<const int> labels);
// (recall, precision) at every distinct threshold.
std::vector<CurvePoint> pr_curve(std::span<const double> scores, std::span<const int> labels);

}  // namespace gra::eval
