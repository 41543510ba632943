#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gra/cohort.hpp"

namespace gra::prep {

// Column layout of a FeatureMatrix:
//   [demographics | dx presence | med presence | continuous measurements]
// Demographics are age (numeric) followed by sex and race one-hots.
struct FeatureSchema {
  std::vector<std::int32_t> dx_columns;
  std::vector<std::int32_t> med_columns;
  std::vector<std::pair<std::int32_t, std::string>> continuous_columns;
  std::vector<std::string> demographic_columns;
  std::vector<std::string> exclusion_list;

  std::size_t n_columns() const {
    return demographic_columns.size() + dx_columns.size() + med_columns.size() +
           continuous_columns.size();
  }
  std::size_t dx_offset() const { return demographic_columns.size(); }
  std::size_t med_offset() const { return dx_offset() + dx_columns.size(); }
  std::size_t continuous_offset() const { return med_offset() + med_columns.size(); }

  std::vector<std::string> column_names() const;
  // Age and continuous columns; everything else is boolean.
  std::vector<std::size_t> numeric_columns() const;
  bool is_boolean(std::size_t column) const;

  // Throws Error(Schema) if column lists overlap or any name is evaluation-only.
  void validate() const;

  bool operator==(const FeatureSchema&) const = default;
};

// Age, sex one-hot (2), race/ethnicity one-hot (5).
std::vector<std::string> default_demographic_columns();

// Dx/med/lab/vital columns for every concept in the dictionary, sorted by id.
FeatureSchema build_schema(const cohort::ConceptDictionary& dict);

nlohmann::json to_json(const FeatureSchema& schema);
FeatureSchema schema_from_json(const nlohmann::json& j);

struct FeatureMatrix {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<double> values;          // row-major; NaN where missing
  std::vector<std::uint8_t> missing;   // row-major, 1 = missing before imputation
  std::vector<std::int64_t> patient_ids;
  FeatureSchema schema;

  double& at(std::size_t r, std::size_t c) { return values[r * n_cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * n_cols + c]; }
  bool is_missing(std::size_t r, std::size_t c) const { return missing[r * n_cols + c] != 0; }
  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * n_cols, n_cols};
  }
  FeatureMatrix select_rows(std::span<const std::size_t> rows) const;
};

struct Coverage {
  std::size_t known_codes = 0;    // patient-concept presences mapped onto a column
  std::size_t unknown_codes = 0;  // presences whose concept has no column
  std::size_t distinct_unknown = 0;
  double fraction() const {
    const auto total = known_codes + unknown_codes;
    return total == 0 ? 1.0 : static_cast<double>(known_codes) / static_cast<double>(total);
  }
};

struct Encoded {
  FeatureMatrix matrix;
  Coverage coverage;
};

enum class UnknownConcepts { Reject, Drop };

// Presence indicators for dx/med, latest value for continuous columns
// (missing if never measured). Eye-domain events are ignored. Expects
// records that already went through the temporal cutoff.
Encoded encode_mapped(const std::vector<cohort::PatientRecord>& cohort, const FeatureSchema& schema,
                      UnknownConcepts policy);
FeatureMatrix encode(const std::vector<cohort::PatientRecord>& cohort, const FeatureSchema& schema);

// Population (divide-by-n) z-score parameters for the numeric columns.
struct ScalerParams {
  std::vector<std::string> columns;
  std::vector<double> mean;
  std::vector<double> sd;
  bool operator==(const ScalerParams&) const = default;
};

ScalerParams fit_standardizer(const FeatureMatrix& matrix, std::span<const std::size_t> train_rows);
FeatureMatrix apply_standardizer(const FeatureMatrix& matrix, const ScalerParams& params);

nlohmann::json to_json(const ScalerParams& params);
ScalerParams scaler_from_json(const nlohmann::json& j);

struct MiceConfig {
  int max_iter = 10;
  double tol = 1e-3;
  std::uint64_t seed = 0;
  // Adds Gaussian residual noise to imputations (posterior-style draws).
  // Off by default; when off the result does not depend on the seed.
  bool residual_noise = false;
};

struct MiceReport {
  int iterations = 0;
  bool converged = false;
  std::vector<double> max_change;  // one entry per sweep
};

// Round-robin least-squares imputation over the numeric columns, each
// incomplete column regressed on all other numeric columns plus an
// intercept, in ascending column order. Starts from column means; observed
// cells are never written.
FeatureMatrix mice_impute(const FeatureMatrix& matrix, const MiceConfig& config,
                          MiceReport* report = nullptr);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
};

struct SplitRatios {
  double train = 0.7;
  double validation = 0.1;
  double test = 0.2;
};

// Sizes are floor(r_train n), floor(r_val n) and the remainder. Positives are
// allocated floor(r * n_pos) per split; negatives fill the rest.
SplitIndices split(std::span<const int> labels, SplitRatios ratios, std::uint64_t seed);

// Persists as <stem>.json (schema and layout), <stem>.bin (little-endian
// float32, row-major, NaN for missing) and <stem>.mask (packed bits,
// row-major, least significant bit first).
void write_feature_matrix(const std::filesystem::path& stem, const FeatureMatrix& matrix);
FeatureMatrix read_feature_matrix(const std::filesystem::path& stem);

}  // namespace gra::prep
