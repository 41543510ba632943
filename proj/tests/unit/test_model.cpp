#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "gra/error.hpp"
#include "gra/generator.hpp"
#include "gra/model.hpp"

using namespace gra;
using namespace gra::model;

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

std::vector<cohort::PatientRecord> records_of(const std::vector<cohort::GeneratedPatient>& g) {
  std::vector<cohort::PatientRecord> out;
  for (const auto& p : g) out.push_back(p.record);
  return out;
}

struct Site {
  cohort::GeneratorConfig config;
  LabeledCohort labeled;
  prep::FeatureSchema schema;
  prep::SplitIndices split;
  SourcePreparation prepared;
};

Site make_source(std::size_t n, std::uint64_t seed, bool zero_signal = false) {
  cohort::GeneratorOptions o;
  o.n_patients = n;
  o.seed = seed;
  o.zero_signal = zero_signal;
  Site s;
  s.config = cohort::make_generator_config(o);
  const auto dict = cohort::concept_dictionary(s.config);
  s.labeled = label_cohort(records_of(cohort::generate_cohort(s.config)), dict);
  s.schema = prep::build_schema(dict);
  s.split = prep::split(s.labeled.labels, {}, seed);
  s.prepared = prepare_source(s.labeled, s.schema, s.split, {});
  return s;
}

GraConfig quick_config(std::uint64_t seed, int cnn_epochs = 3) {
  GraConfig c;
  c.autoencoder.embedding_dim = 8;
  c.autoencoder.train = nn::train_config(4, 32, 2e-3);
  c.cnn = nn::train_config(cnn_epochs, 32, 1e-3);
  c.seed = seed;
  return c;
}

GraModel quick_model(const Site& s, std::uint64_t seed = 1) {
  return pretrain_gra(s.prepared.cohort.matrix, s.prepared.cohort.labels, s.split, s.prepared.scaler,
                      quick_config(seed));
}

double test_auroc(const GraModel& m, const PreparedCohort& c, const prep::SplitIndices& split) {
  const auto scores = predict(m, c.matrix.select_rows(split.test));
  std::vector<int> y;
  for (auto r : split.test) y.push_back(c.labels[r]);
  return eval::auroc(scores, y);
}

std::vector<std::vector<double>> cnn_params(const GraModel& m) {
  std::vector<std::vector<double>> out;
  for (const auto& l : m.cnn.layers()) {
    auto w = l.weight.data;
    w.insert(w.end(), l.bias.data.begin(), l.bias.data.end());
    out.push_back(w);
  }
  return out;
}

// Rows 0..n-1 one-hot over D columns, cycling; `zeros` extra all-zero rows.
std::vector<double> pattern_rows(std::size_t n, std::size_t D, std::size_t zeros) {
  std::vector<double> rows((n + zeros) * D, 0.0);
  for (std::size_t i = 0; i < n; ++i) rows[i * D + i % D] = 1.0;
  return rows;
}

std::vector<std::string> names(std::size_t D) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < D; ++i) out.push_back("c" + std::to_string(i));
  return out;
}

}  // namespace

TEST_CASE("autoencoder reconstructs near-orthogonal patterns") {
  const std::size_t D = 10, n = 50;
  const auto rows = pattern_rows(n, D, 0);
  AutoencoderConfig c;
  c.embedding_dim = D - 1;
  c.holdout_fraction = 0.1;
  c.train = nn::train_config(200, 8, 1e-2);
  AutoencoderReport report;
  const auto ae = pretrain_autoencoder(rows, n, names(D), c, &report);
  CHECK(ae.embedding_dim() == D - 1);
  CHECK(report.final_holdout_loss < report.initial_holdout_loss);
  CHECK(report.epoch_loss.size() == 200);

  nn::Tensor x({n, D}, rows);
  const auto out = nn::forward(ae.net, x, false);
  double err = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) err += std::abs(out.data[i] - rows[i]);
  CHECK(err / static_cast<double>(out.size()) < 0.1);

  const auto again = pretrain_autoencoder(rows, n, names(D), c);
  CHECK(again == ae);
}

TEST_CASE("autoencoder maps all-zero rows to low outputs") {
  const std::size_t D = 12, n = 48, zeros = 24;
  const auto rows = pattern_rows(n, D, zeros);
  AutoencoderConfig c;
  c.embedding_dim = 6;
  c.train = nn::train_config(100, 8, 1e-2);
  const auto ae = pretrain_autoencoder(rows, n + zeros, names(D), c);
  const auto out = nn::forward(ae.net, nn::Tensor({1, D}, 0.0), false);
  for (double v : out.data) CHECK(v < 0.5);
}

TEST_CASE("autoencoder configuration errors") {
  const auto rows = pattern_rows(10, 4, 0);
  AutoencoderConfig c;
  c.embedding_dim = 4;
  CHECK(kind_of([&] { pretrain_autoencoder(rows, 10, names(4), c); }) == ErrorKind::Config);
  c.embedding_dim = 2;
  auto bad = rows;
  bad[0] = 0.5;
  CHECK(kind_of([&] { pretrain_autoencoder(bad, 10, names(4), c); }) == ErrorKind::Input);
  CHECK(kind_of([&] { pretrain_autoencoder(rows, 9, names(4), c); }) == ErrorKind::Shape);
}

TEST_CASE("cnn stand-in layout") {
  const auto specs = cnn_layer_specs();
  REQUIRE(specs.size() == kCnnLayers);
  std::vector<std::size_t> param_positions;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].has_params()) param_positions.push_back(i + 1);
  }
  CHECK(param_positions == std::vector<std::size_t>{1, 3, 6, 8, 12, 15, 18});
  nn::LayerStack s(specs, {1, 84}, 0);
  CHECK(s.output_shape() == std::vector<std::size_t>{1});

  // Trainable sets grow with k.
  std::vector<bool> prev(kCnnLayers, true);
  for (std::size_t k = 0; k <= kCnnLayers; ++k) {
    const auto mask = s.set_trainable_last_k(k);
    for (std::size_t i = 0; i < kCnnLayers; ++i) {
      if (!prev[i]) CHECK_FALSE(mask[i]);
    }
    prev = mask;
  }
}

TEST_CASE("input assembly") {
  prep::FeatureSchema schema;
  schema.demographic_columns = prep::default_demographic_columns();
  for (int i = 0; i < 20; ++i) schema.dx_columns.push_back(100 + i);
  for (int i = 0; i < 15; ++i) schema.med_columns.push_back(200 + i);
  for (int i = 0; i < 12; ++i) schema.continuous_columns.emplace_back(300 + i, "lab_" + std::to_string(i));
  schema.exclusion_list = cohort::eval_feature_names();
  REQUIRE(schema.demographic_columns.size() == 8);

  GraModel m;
  m.schema = schema;
  m.dx_ae.net = nn::LayerStack({nn::LayerSpec::dense(32), nn::LayerSpec::relu(), nn::LayerSpec::sigmoid_dense(20)},
                               {20}, 1);
  m.dx_ae.columns = names(20);
  m.med_ae.net = nn::LayerStack({nn::LayerSpec::dense(32), nn::LayerSpec::relu(), nn::LayerSpec::sigmoid_dense(15)},
                                {15}, 2);
  m.med_ae.columns = names(15);
  CHECK(input_length(m) == 84);

  std::vector<double> row(schema.n_columns(), 0.0);
  for (std::size_t i = 0; i < row.size(); ++i) row[i] = (i % 3 == 0) ? 1.0 : 0.0;
  row[0] = 0.37;
  const auto a = assemble_input(m, row);
  CHECK(a.shape == std::vector<std::size_t>{1, 84});

  auto other = row;
  const std::size_t med_col = schema.med_offset() + 4;
  other[med_col] = 1.0 - other[med_col];
  const auto b = assemble_input(m, other);
  bool med_changed = false;
  for (std::size_t i = 0; i < 84; ++i) {
    const bool in_med = i >= 32 && i < 64;
    if (!in_med) CHECK(a.data[i] == b.data[i]);
    if (in_med && a.data[i] != b.data[i]) med_changed = true;
  }
  CHECK(med_changed);
  // Demographics then continuous values are copied through verbatim.
  CHECK(a.data[64] == 0.37);
  CHECK(a.data[83] == row.back());

  CHECK(kind_of([&] { assemble_input(m, std::span(row).first(row.size() - 1)); }) == ErrorKind::Shape);

  GraModel leaky = m;
  leaky.schema.continuous_columns.emplace_back(999, cohort::eval_feature_names().front());
  std::vector<double> longer = row;
  longer.push_back(0.0);
  CHECK(kind_of([&] { assemble_input(leaky, longer); }) == ErrorKind::Schema);
}

TEST_CASE("finetune subsample") {
  std::vector<int> labels(500);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 5 == 0 ? 1 : 0;
  const auto s20 = finetune_subsample(labels, 20, 3);
  const auto s20b = finetune_subsample(labels, 20, 3);
  const auto s40 = finetune_subsample(labels, 40, 3);
  const auto s100 = finetune_subsample(labels, 100, 3);
  CHECK(s20 == s20b);
  CHECK(s20.size() == 100);
  CHECK(s40.size() == 200);
  CHECK(s100.size() == 500);
  CHECK(std::is_sorted(s20.begin(), s20.end()));
  CHECK(std::includes(s40.begin(), s40.end(), s20.begin(), s20.end()));
  std::size_t pos = 0;
  for (auto i : s20) pos += labels[i];
  CHECK(pos == 20);
  CHECK(finetune_subsample(labels, 20, 4) != s20);
  CHECK(kind_of([&] { finetune_subsample(labels, 0.0, 1); }) == ErrorKind::Config);
  CHECK(kind_of([&] { finetune_subsample(labels, 120.0, 1); }) == ErrorKind::Config);
}

TEST_CASE("pretrain, finetune and grid on small cohorts") {
  const auto src = make_source(600, 5);
  const auto model = quick_model(src);

  SUBCASE("pretraining is deterministic and carries the source artifacts") {
    CHECK(quick_model(src) == model);
    CHECK(model.schema == src.schema);
    CHECK(model.scaler == src.prepared.scaler);
    CHECK(input_length(model) == 8 + 8 + src.schema.demographic_columns.size() +
                                     src.schema.continuous_columns.size());
    const auto scores = predict(model, src.prepared.cohort.matrix);
    for (double p : scores) {
      CHECK(p > 0.0);
      CHECK(p < 1.0);
    }
    const std::size_t dup[] = {3, 3};
    const auto d = predict(model, src.prepared.cohort.matrix.select_rows(dup));
    CHECK(d[0] == d[1]);
    CHECK(d[0] == scores[3]);
  }

  cohort::ShiftConfig shift;
  shift.prevalence_drift = 0.02;
  shift.coefficient_noise_sd = 0.5;
  shift.concept_remap_fraction = 0.3;
  shift.marginal_drift_sd = 0.3;
  auto tcfg = cohort::apply_shift(src.config, shift, 105);
  tcfg.n_patients = 400;
  tcfg.patient_id_offset = 1000000;
  tcfg.seed = 205;
  const auto tdict = cohort::concept_dictionary(tcfg);
  const auto tlab = label_cohort(records_of(cohort::generate_cohort(tcfg)), tdict);
  const auto target = prepare_cohort(tlab, src.schema, src.prepared.scaler, {});
  const auto tsplit = prep::split(target.labels, {}, 6);
  CHECK(target.coverage.unknown_codes > 0);
  CHECK(target.coverage.fraction() < 1.0);

  SUBCASE("k = 0 returns the pretrained parameters") {
    for (double f : {20.0, 100.0}) {
      FinetuneConfig fc;
      fc.k = 0;
      fc.fraction_percent = f;
      fc.train = nn::train_config(2, 32, 1e-3);
      const auto r = finetune(model, target.matrix, target.labels, tsplit, fc);
      CHECK(r.model.cnn.layers() == model.cnn.layers());
      CHECK(r.model.dx_ae == model.dx_ae);
      CHECK(r.model.med_ae == model.med_ae);
    }
  }
  SUBCASE("k = 18 updates every parameterized layer and never the autoencoders") {
    FinetuneConfig fc;
    fc.k = 18;
    fc.train = nn::train_config(2, 32, 1e-3);
    const auto r = finetune(model, target.matrix, target.labels, tsplit, fc);
    const auto before = cnn_params(model), after = cnn_params(r.model);
    for (std::size_t i = 0; i < kCnnLayers; ++i) {
      if (model.cnn.layers()[i].spec.has_params()) CHECK(before[i] != after[i]);
    }
    CHECK(r.model.dx_ae == model.dx_ae);
    CHECK(r.model.med_ae == model.med_ae);
    CHECK(r.subsample.size() == tsplit.train.size());
  }
  SUBCASE("k = 3 touches only the last parameterized layer") {
    FinetuneConfig fc;
    fc.k = 3;
    fc.fraction_percent = 40;
    fc.train = nn::train_config(2, 32, 1e-3);
    const auto r = finetune(model, target.matrix, target.labels, tsplit, fc);
    const auto before = cnn_params(model), after = cnn_params(r.model);
    for (std::size_t i = 0; i + 1 < kCnnLayers; ++i) CHECK(before[i] == after[i]);
    CHECK(before.back() != after.back());
    const std::set<std::size_t> train(tsplit.train.begin(), tsplit.train.end());
    for (auto row : r.subsample) CHECK(train.contains(row));
  }
  SUBCASE("out-of-range settings") {
    FinetuneConfig fc;
    fc.k = 19;
    CHECK(kind_of([&] { finetune(model, target.matrix, target.labels, tsplit, fc); }) == ErrorKind::Config);
    fc.k = 1;
    fc.fraction_percent = 0;
    CHECK(kind_of([&] { finetune(model, target.matrix, target.labels, tsplit, fc); }) == ErrorKind::Config);
  }
  SUBCASE("grid cardinality, ordering and determinism") {
    GridConfig g;
    g.train = nn::train_config(1, 64, 1e-3);
    g.k_list = {0, 1, 3, 6, 7, 8, 9, 11, 12, 15, 16, 18};
    g.fraction_list = {20, 40, 60, 80, 100};
    g.seeds = {1};
    const auto results = run_grid(model, target.matrix, target.labels, tsplit, g);
    REQUIRE(results.size() == 60);
    CHECK(results[0].k == 0);
    CHECK(results[0].fraction_percent == 20);
    CHECK(results[59].k == 18);
    CHECK(results[59].fraction_percent == 100);
    for (const auto& r : results) CHECK(r.metrics.counts.total() == tsplit.test.size());

    const std::string heat = heatmap_csv(results);
    CHECK(std::count(heat.begin(), heat.end(), '\n') == 61);
    CHECK(best_per_k(results).size() == 12);

    GridConfig small = g;
    small.k_list = {0, 18};
    small.fraction_list = {20, 100};
    small.seeds = {1, 2};
    const auto a = run_grid(model, target.matrix, target.labels, tsplit, small);
    small.threads = 2;
    const auto b = run_grid(model, target.matrix, target.labels, tsplit, small);
    REQUIRE(a.size() == 8);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].k == b[i].k);
      CHECK(a[i].seed == b[i].seed);
      CHECK(a[i].metrics.auroc == b[i].metrics.auroc);
      CHECK(a[i].threshold == b[i].threshold);
    }
    CHECK(grid_csv(a).find("k,") == 0);
    GridConfig empty = g;
    empty.k_list.clear();
    CHECK(kind_of([&] { run_grid(model, target.matrix, target.labels, tsplit, empty); }) == ErrorKind::Config);
  }
}

TEST_CASE("zero-signal source yields chance-level discrimination") {
  std::vector<double> aurocs;
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const auto src = make_source(800, seed, true);
    const auto m = pretrain_gra(src.prepared.cohort.matrix, src.prepared.cohort.labels, src.split,
                                src.prepared.scaler, quick_config(seed, 5));
    aurocs.push_back(test_auroc(m, src.prepared.cohort, src.split));
  }
  std::sort(aurocs.begin(), aurocs.end());
  INFO("median " << aurocs[1]);
  CHECK(aurocs[1] >= 0.4);
  CHECK(aurocs[1] <= 0.6);
}

TEST_CASE("calibration outcomes follow the requested rows") {
  const auto src = make_source(200, 8);
  const auto& c = src.prepared.cohort;
  const std::size_t rows[] = {5, 1, 9};
  const auto o = calibration_outcomes(c, rows);
  REQUIRE(o.diagnosis.size() == 3);
  CHECK(o.diagnosis[0] == c.labels[5]);
  CHECK(o.treatment[1] == (c.outcomes[1].any_treatment ? 1 : 0));
  CHECK(o.max_iop[2] == c.outcomes[9].max_iop);
  const std::size_t bad[] = {100000};
  CHECK(kind_of([&] { calibration_outcomes(c, bad); }) == ErrorKind::Shape);
}
