#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gra/cohort.hpp"
#include "gra/eval.hpp"
#include "gra/nn.hpp"
#include "gra/preprocess.hpp"

namespace gra::model {

// Dense(D -> d) + ReLU encoder followed by a sigmoid decoder back to D.
struct Autoencoder {
  nn::LayerStack net;                // [Dense(d), ReLU, SigmoidDense(D)]
  std::vector<std::string> columns;  // bound schema columns, in input order

  std::size_t input_dim() const { return columns.size(); }
  std::size_t embedding_dim() const;
  // rows: n x D row-major presence indicators -> n x d embeddings.
  std::vector<double> embed(std::span<const double> rows, std::size_t n) const;
  bool operator==(const Autoencoder&) const = default;
};

struct AutoencoderConfig {
  std::size_t embedding_dim = 32;
  double holdout_fraction = 0.1;
  nn::TrainConfig train = nn::train_config(30, 32, 2e-3);
};

struct AutoencoderReport {
  double initial_holdout_loss = 0.0;
  double final_holdout_loss = 0.0;
  std::vector<double> epoch_loss;
};

// rows: n x D with 0/1 entries. A seeded tail of rows is held out to measure
// reconstruction loss before and after training.
Autoencoder pretrain_autoencoder(std::span<const double> rows, std::size_t n, std::vector<std::string> columns,
                                 const AutoencoderConfig& config, AutoencoderReport* report = nullptr);

// Mean per-cell reconstruction BCE.
double reconstruction_loss(const Autoencoder& ae, std::span<const double> rows, std::size_t n);

std::vector<nn::LayerSpec> cnn_layer_specs();
inline constexpr std::size_t kCnnLayers = 18;

struct GraModel {
  Autoencoder dx_ae;
  Autoencoder med_ae;
  nn::LayerStack cnn;
  prep::FeatureSchema schema;
  prep::ScalerParams scaler;
  double threshold = 0.5;  // F1-optimal on the validation split it was trained with
  bool operator==(const GraModel&) const = default;
};

// Sequence length fed to the CNN: d_dx + d_med + demographics + continuous.
std::size_t input_length(const GraModel& model);

// One row of a standardized, imputed matrix -> [1, L] single-channel sequence
// ordered [dx embedding | med embedding | demographics | continuous].
nn::Tensor assemble_input(const GraModel& model, std::span<const double> row);
// Whole matrix -> [N, 1, L].
nn::Tensor assemble_inputs(const GraModel& model, const prep::FeatureMatrix& matrix);

struct GraConfig {
  AutoencoderConfig autoencoder;
  nn::TrainConfig cnn = nn::train_config(15, 32, 1e-3);
  std::uint64_t seed = 0;
};

struct PretrainReport {
  AutoencoderReport dx;
  AutoencoderReport med;
  nn::TrainResult cnn;
};

// Autoencoders on the train rows' dx and med blocks, then the CNN on the
// assembled train rows; threshold tuned on the validation rows.
GraModel pretrain_gra(const prep::FeatureMatrix& matrix, std::span<const int> labels,
                      const prep::SplitIndices& split, const prep::ScalerParams& scaler, const GraConfig& config,
                      PretrainReport* report = nullptr);

// Label-stratified nested subsample of the train rows: a seeded shuffle of
// positives and negatives, of which the first round(n_take * prevalence)
// positives and the remaining negatives are taken, n_take = floor(f * n).
// Returns positions into `train_labels`, ascending.
std::vector<std::size_t> finetune_subsample(std::span<const int> train_labels, double fraction_percent,
                                            std::uint64_t seed);

struct FinetuneConfig {
  std::size_t k = 18;
  double fraction_percent = 100.0;
  std::uint64_t seed = 0;
  nn::TrainConfig train = nn::train_config(20, 32, 1e-3);
};

struct FinetuneResult {
  GraModel model;
  std::vector<std::size_t> subsample;  // row indices into the input matrix
  nn::TrainResult train;
};

// `inputs` must come from assemble_inputs on the same autoencoders. The last
// k CNN layers are trainable; the autoencoders are never touched. With no
// trainable parameters the CNN is returned unchanged. The threshold is
// re-tuned on the validation rows.
FinetuneResult finetune(const GraModel& model, const nn::Tensor& inputs, std::span<const int> labels,
                        const prep::SplitIndices& split, const FinetuneConfig& config);
FinetuneResult finetune(const GraModel& model, const prep::FeatureMatrix& matrix, std::span<const int> labels,
                        const prep::SplitIndices& split, const FinetuneConfig& config);

std::vector<double> predict(const GraModel& model, const prep::FeatureMatrix& matrix);
std::vector<double> predict_inputs(const GraModel& model, const nn::Tensor& inputs);

// Rows of `inputs` selected into a new [rows, ...] tensor.
nn::Tensor select_rows(const nn::Tensor& inputs, std::span<const std::size_t> rows);

struct GridResult {
  std::size_t k = 0;
  double fraction_percent = 0;
  std::uint64_t seed = 0;
  eval::EvalReport metrics;
  double threshold = 0;
};

struct GridConfig {
  std::vector<std::size_t> k_list = {0, 1, 3, 6, 7, 8, 9, 11, 12, 15, 16, 18};
  std::vector<double> fraction_list = {20, 40, 60, 80, 100};
  std::vector<std::uint64_t> seeds = {0};
  nn::TrainConfig train = nn::train_config(20, 32, 1e-3);
  std::size_t threads = 1;
};

// One finetune + validation threshold + test evaluation per (k, f, seed).
// The split, and so the test set, is shared by every cell. Results are
// ordered by (k, fraction, seed) in list order regardless of threads.
std::vector<GridResult> run_grid(const GraModel& pretrained, const prep::FeatureMatrix& target,
                                 std::span<const int> labels, const prep::SplitIndices& split,
                                 const GridConfig& config);

std::string grid_csv(const std::vector<GridResult>& results);
// Mean AUROC over seeds per (k, fraction): header k,fraction,auroc.
std::string heatmap_csv(const std::vector<GridResult>& results);
// Per k, the fraction with the highest mean AUROC (first on ties).
std::vector<GridResult> best_per_k(const std::vector<GridResult>& results);

// A cohort after labeling, cutoff, encoding, standardization and imputation.
struct PreparedCohort {
  prep::FeatureMatrix raw;      // encoded, before scaling
  prep::FeatureMatrix matrix;   // standardized and imputed
  std::vector<int> labels;
  std::vector<cohort::EyeEvalFeatures> outcomes;
  std::vector<std::string> groups;  // race/ethnicity per row
  prep::Coverage coverage;
  prep::MiceReport mice;
};

struct LabeledCohort {
  std::vector<cohort::PatientRecord> records;  // after temporal cutoff
  std::vector<int> labels;
  std::vector<cohort::EyeEvalFeatures> outcomes;
  std::vector<std::string> groups;
};

LabeledCohort label_cohort(const std::vector<cohort::PatientRecord>& records,
                           const cohort::ConceptDictionary& dict);

// Encodes with `schema` (unknown concepts dropped and counted), scales with
// `scaler` and imputes.
PreparedCohort prepare_cohort(const LabeledCohort& labeled, const prep::FeatureSchema& schema,
                              const prep::ScalerParams& scaler, const prep::MiceConfig& mice);

// Source-side preparation: schema from the dictionary, scaler fitted on
// the train rows of `split`.
struct SourcePreparation {
  PreparedCohort cohort;
  prep::ScalerParams scaler;
};
SourcePreparation prepare_source(const LabeledCohort& labeled, const prep::FeatureSchema& schema,
                                 const prep::SplitIndices& split, const prep::MiceConfig& mice);

eval::CalibrationOutcomes calibration_outcomes(const PreparedCohort& cohort, std::span<const std::size_t> rows);

}  // namespace gra::model
