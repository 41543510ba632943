#include "gra/error.hpp"
#include "gra/model.hpp"

namespace gra::model {

LabeledCohort label_cohort(const std::vector<cohort::PatientRecord>& records, const cohort::ConceptDictionary& dict) {
  const auto suspects = dict.suspect_set();
  LabeledCohort out;
  out.records.reserve(records.size());
  for (const auto& rec : records) {
    const auto label = cohort::label_glaucoma(rec, suspects);
    out.records.push_back(cohort::apply_temporal_cutoff(rec, label));
    out.labels.push_back(label.is_glaucoma ? 1 : 0);
    out.outcomes.push_back(cohort::extract_eval_features(rec));
    out.groups.emplace_back(cohort::to_string(rec.race_ethnicity));
  }
  return out;
}

namespace {

PreparedCohort finish(const LabeledCohort& labeled, prep::Encoded enc, const prep::ScalerParams& scaler,
                      const prep::MiceConfig& mice) {
  PreparedCohort out;
  out.coverage = enc.coverage;
  out.raw = std::move(enc.matrix);
  out.matrix = prep::mice_impute(prep::apply_standardizer(out.raw, scaler), mice, &out.mice);
  out.labels = labeled.labels;
  out.outcomes = labeled.outcomes;
  out.groups = labeled.groups;
  return out;
}

}  // namespace

PreparedCohort prepare_cohort(const LabeledCohort& labeled, const prep::FeatureSchema& schema,
                              const prep::ScalerParams& scaler, const prep::MiceConfig& mice) {
  return finish(labeled, prep::encode_mapped(labeled.records, schema, prep::UnknownConcepts::Drop), scaler, mice);
}

SourcePreparation prepare_source(const LabeledCohort& labeled, const prep::FeatureSchema& schema,
                                 const prep::SplitIndices& split, const prep::MiceConfig& mice) {
  auto enc = prep::encode_mapped(labeled.records, schema, prep::UnknownConcepts::Drop);
  SourcePreparation out;
  out.scaler = prep::fit_standardizer(enc.matrix, split.train);
  out.cohort = finish(labeled, std::move(enc), out.scaler, mice);
  return out;
}

eval::CalibrationOutcomes calibration_outcomes(const PreparedCohort& cohort, std::span<const std::size_t> rows) {
  eval::CalibrationOutcomes o;
  for (auto r : rows) {
    if (r >= cohort.labels.size()) fail(ErrorKind::Shape, "calibration_outcomes: row out of range");
    o.diagnosis.push_back(cohort.labels[r]);
    o.treatment.push_back(cohort.outcomes[r].any_treatment ? 1 : 0);
    o.max_iop.push_back(cohort.outcomes[r].max_iop);
    o.max_cdr.push_back(cohort.outcomes[r].max_cdr);
  }
  return o;
}

}  // namespace gra::model
