#include "gra/cli.hpp"
#include "gra/error.hpp"

namespace gra::cli {

SyntheticSites synthesize(const RunConfig& c) {
  validate(c);
  SyntheticSites s;
  auto options = c.source;
  options.seed = c.seed;
  s.source_config = cohort::make_generator_config(options);
  s.target_config = cohort::apply_shift(s.source_config, c.shift, c.seed + 100);
  s.target_config.n_patients = c.target_n;
  s.target_config.patient_id_offset = c.target_id_offset;
  s.target_config.seed = c.seed + 200;
  s.source = cohort::generate_cohort(s.source_config);
  s.target = cohort::generate_cohort(s.target_config);
  return s;
}

std::vector<cohort::PatientRecord> records_of(const std::vector<cohort::GeneratedPatient>& cohort) {
  std::vector<cohort::PatientRecord> out;
  out.reserve(cohort.size());
  for (const auto& g : cohort) out.push_back(g.record);
  return out;
}

SourceStage prepare_source_stage(const RunConfig& c, const std::vector<cohort::PatientRecord>& records,
                                 const cohort::ConceptDictionary& dict) {
  SourceStage s;
  s.labeled = model::label_cohort(records, dict);
  s.schema = prep::build_schema(dict);
  s.split = prep::split(s.labeled.labels, c.split, c.seed);
  s.prepared = model::prepare_source(s.labeled, s.schema, s.split, c.mice);
  return s;
}

TargetStage prepare_target_stage(const RunConfig& c, const std::vector<cohort::PatientRecord>& records,
                                 const cohort::ConceptDictionary& dict, const prep::FeatureSchema& schema,
                                 const prep::ScalerParams& scaler) {
  TargetStage t;
  t.labeled = model::label_cohort(records, dict);
  t.split = prep::split(t.labeled.labels, c.split, c.seed + 1);
  t.prepared = model::prepare_cohort(t.labeled, schema, scaler, c.mice);
  return t;
}

model::GraConfig gra_config(const RunConfig& c) {
  model::GraConfig g;
  g.autoencoder = c.autoencoder;
  g.cnn = c.cnn;
  g.seed = c.seed;
  return g;
}

model::FinetuneConfig finetune_config(const RunConfig& c, std::size_t k, double fraction_percent) {
  model::FinetuneConfig f;
  f.k = k;
  f.fraction_percent = fraction_percent;
  f.seed = c.seed;
  f.train = c.finetune;
  return f;
}

model::GridConfig grid_config(const RunConfig& c) {
  model::GridConfig g;
  g.k_list = c.k_list;
  g.fraction_list = c.fraction_list;
  g.seeds = c.grid_seeds.empty() ? std::vector<std::uint64_t>{c.seed} : c.grid_seeds;
  g.train = c.finetune;
  g.threads = c.threads;
  return g;
}

std::vector<int> labels_at(std::span<const int> labels, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(labels[r]);
  return out;
}

std::vector<std::string> groups_at(std::span<const std::string> groups, std::span<const std::size_t> rows) {
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(groups[r]);
  return out;
}

eval::EvalReport evaluate_rows(const model::GraModel& m, const model::PreparedCohort& cohort,
                               std::span<const std::size_t> rows) {
  const auto scores = model::predict(m, cohort.matrix.select_rows(rows));
  return eval::evaluate(scores, labels_at(cohort.labels, rows), m.threshold, groups_at(cohort.groups, rows));
}

std::vector<ReferenceRow> reference_rows() {
  struct Raw {
    int k, pct;
    double v[9];
  };
  static const Raw table[] = {
      {0, 40, {0.467, 0.141, 0.156, 1.000, 0.000, 0.156, 0.000, 0.271, 0.00}},
      {1, 100, {0.801, 0.523, 0.809, 0.594, 0.849, 0.422, 0.919, 0.494, 0.60}},
      {3, 40, {0.806, 0.504, 0.772, 0.692, 0.786, 0.375, 0.932, 0.487, 0.60}},
      {6, 100, {0.844, 0.611, 0.861, 0.548, 0.919, 0.556, 0.916, 0.552, 0.70}},
      {7, 100, {0.842, 0.619, 0.847, 0.618, 0.889, 0.508, 0.926, 0.558, 0.70}},
      {8, 80, {0.850, 0.615, 0.868, 0.539, 0.929, 0.584, 0.916, 0.560, 0.85}},
      {9, 100, {0.856, 0.642, 0.883, 0.492, 0.955, 0.669, 0.910, 0.567, 0.90}},
      {11, 100, {0.865, 0.668, 0.871, 0.638, 0.914, 0.580, 0.932, 0.608, 0.80}},
      {12, 100, {0.865, 0.662, 0.884, 0.577, 0.941, 0.643, 0.923, 0.608, 0.85}},
      {15, 100, {0.883, 0.692, 0.889, 0.610, 0.941, 0.657, 0.929, 0.632, 0.90}},
      {16, 100, {0.876, 0.687, 0.883, 0.596, 0.936, 0.632, 0.926, 0.614, 0.80}},
      {18, 100, {0.876, 0.687, 0.883, 0.596, 0.936, 0.632, 0.926, 0.614, 0.80}},
  };
  std::vector<ReferenceRow> out;
  for (const auto& r : table) {
    ReferenceRow row;
    row.label = "gra k=" + std::to_string(r.k) + " f=" + std::to_string(r.pct) + "%";
    row.auroc = r.v[0];
    row.auprc = r.v[1];
    row.accuracy = r.v[2];
    row.sensitivity = r.v[3];
    row.specificity = r.v[4];
    row.ppv = r.v[5];
    row.npv = r.v[6];
    row.f1 = r.v[7];
    row.threshold = r.v[8];
    out.push_back(row);
  }
  ReferenceRow gbt;
  gbt.label = "demographics-only boosted trees";
  gbt.auroc = 0.708;
  gbt.auprc = 0.263;
  gbt.has_confusion = false;
  out.push_back(gbt);
  return out;
}

}  // namespace gra::cli
