#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gra/baseline.hpp"
#include "gra/cohort.hpp"
#include "gra/generator.hpp"
#include "gra/model.hpp"
#include "gra/preprocess.hpp"

namespace gra::cli {

// Fully resolved settings for every command. Derived seeds:
//   source generator = seed, target shift = seed + 100,
//   target generator = seed + 200, source split = seed, target split = seed + 1.
struct RunConfig {
  std::uint64_t seed = 1;
  cohort::GeneratorOptions source;  // n_patients is the source cohort size
  std::size_t target_n = 2000;
  std::int64_t target_id_offset = 1000000;
  cohort::ShiftConfig shift{0.02, 0.5, 0.3, 0.3};
  prep::SplitRatios split;
  prep::MiceConfig mice;
  model::AutoencoderConfig autoencoder;
  nn::TrainConfig cnn = nn::train_config(15, 32, 1e-3);
  nn::TrainConfig finetune = nn::train_config(20, 32, 1e-3);
  std::vector<std::size_t> k_list = {0, 1, 3, 6, 7, 8, 9, 11, 12, 15, 16, 18};
  std::vector<double> fraction_list = {20, 40, 60, 80, 100};
  std::vector<std::uint64_t> grid_seeds;  // empty: {seed}
  std::size_t threads = 1;
  baseline::GbtConfig gbt;
  bool calibration_full_cohort = false;
  bool oracle = false;

  RunConfig();
};

nlohmann::json to_json(const RunConfig& config);
// Keys absent from `j` keep the values in `base`; unknown keys and
// out-of-range values raise Error(Config).
RunConfig run_config_from_json(const nlohmann::json& j, const RunConfig& base = RunConfig{});
void validate(const RunConfig& config);

// Artifact names inside the working directory.
namespace files {
inline constexpr const char* kSource = "source.jsonl";
inline constexpr const char* kTarget = "target.jsonl";
inline constexpr const char* kConcepts = "concepts.json";
inline constexpr const char* kTargetConcepts = "target_concepts.json";
inline constexpr const char* kTruth = "truth.jsonl";
inline constexpr const char* kSourceCheckpoint = "source.ckpt";
inline constexpr const char* kTargetCheckpoint = "target.ckpt";
inline constexpr const char* kBaselineCheckpoint = "baseline.ckpt";
}  // namespace files

struct SyntheticSites {
  cohort::GeneratorConfig source_config;
  cohort::GeneratorConfig target_config;
  std::vector<cohort::GeneratedPatient> source;
  std::vector<cohort::GeneratedPatient> target;
};

SyntheticSites synthesize(const RunConfig& config);

std::vector<cohort::PatientRecord> records_of(const std::vector<cohort::GeneratedPatient>& cohort);

struct SourceStage {
  model::LabeledCohort labeled;
  prep::FeatureSchema schema;
  prep::SplitIndices split;
  model::SourcePreparation prepared;
};

SourceStage prepare_source_stage(const RunConfig& config, const std::vector<cohort::PatientRecord>& records,
                                 const cohort::ConceptDictionary& dict);

struct TargetStage {
  model::LabeledCohort labeled;
  prep::SplitIndices split;
  model::PreparedCohort prepared;
};

// Encodes the target with the given schema, drops unknown concepts and
// scales with the given scaler.
TargetStage prepare_target_stage(const RunConfig& config, const std::vector<cohort::PatientRecord>& records,
                                 const cohort::ConceptDictionary& dict, const prep::FeatureSchema& schema,
                                 const prep::ScalerParams& scaler);

model::GraConfig gra_config(const RunConfig& config);
model::FinetuneConfig finetune_config(const RunConfig& config, std::size_t k, double fraction_percent);
model::GridConfig grid_config(const RunConfig& config);

std::vector<int> labels_at(std::span<const int> labels, std::span<const std::size_t> rows);
std::vector<std::string> groups_at(std::span<const std::string> groups, std::span<const std::size_t> rows);

// Evaluates `model` on the given rows of a prepared cohort with the model's
// stored threshold, race/ethnicity subgroups included.
eval::EvalReport evaluate_rows(const model::GraModel& model, const model::PreparedCohort& cohort,
                               std::span<const std::size_t> rows);

// Fixed comparison rows for reports, tagged "paper-reported".
struct ReferenceRow {
  std::string label;
  double auroc = 0, auprc = 0, accuracy = 0, sensitivity = 0, specificity = 0, ppv = 0, npv = 0, f1 = 0;
  double threshold = 0;
  bool has_confusion = true;  // false when only ranking metrics are known
};
std::vector<ReferenceRow> reference_rows();

// Paths of every file the CLI opened for reading since the last reset.
const std::vector<std::filesystem::path>& read_log();
void reset_read_log();

// Entry point shared by the tool and tests; returns the process exit code.
// Errors are reported on stderr.
int main(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace gra::cli
