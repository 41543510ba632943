// Acceptance checks 1-11. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gra/checkpoint.hpp"
#include "gra/cli.hpp"
#include "gra/error.hpp"
#include "gra/eval.hpp"
#include "gra/generator.hpp"
#include "gra/model.hpp"
#include "gra/nn.hpp"
#include "gra/preprocess.hpp"
#include "gra/random.hpp"

using namespace gra;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

int failures = 0;

void report(int id, const std::function<void(Outcome&)>& body) {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << "[exception: " << e.what() << "] ";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!o.pass) ++failures;
  std::printf("criterion %2d: %s  %s(%.1fs)\n", id, o.pass ? "PASS" : "FAIL", o.detail.str().c_str(), secs);
  std::fflush(stdout);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---- criterion 1 ----------------------------------------------------------

void metric_arithmetic(Outcome& o) {
  const double n = 4128, prev = 0.156;
  const auto pos = static_cast<std::uint64_t>(std::llround(n * prev));
  const auto neg = static_cast<std::uint64_t>(n) - pos;
  eval::ConfusionCounts c;
  c.tp = static_cast<std::uint64_t>(std::llround(0.610 * static_cast<double>(pos)));
  c.fn = pos - c.tp;
  c.tn = static_cast<std::uint64_t>(std::llround(0.941 * static_cast<double>(neg)));
  c.fp = neg - c.tn;
  const auto m = eval::metrics(c);
  const double f1_reported_ppv = eval::f1_score(0.657, m.sensitivity);
  const double f1_k11 = eval::f1_score(0.580, 0.638);
  o.detail << "accuracy " << m.accuracy << ", f1(ppv 0.657) " << f1_reported_ppv << ", f1 from counts " << m.f1
           << ", k=11 f1 " << f1_k11 << " ";
  o.require(std::abs(m.accuracy - 0.889) <= 0.001, "accuracy 0.889");
  o.require(std::abs(f1_reported_ppv - 0.632) <= 0.001, "f1 0.632");
  o.require(std::abs(m.f1 - 0.632) <= 0.001, "count-based f1 0.632");
  o.require(std::abs(f1_k11 - 0.608) <= 0.0005, "k=11 f1 0.608");
}

// ---- criterion 2 ----------------------------------------------------------

void degenerate_threshold(Outcome& o) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const std::size_t n = 50 + rng.below(400);
    std::vector<double> s(n);
    std::vector<int> y(n);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.uniform();
      y[i] = rng.bernoulli(0.2) ? 1 : 0;
      pos += static_cast<std::size_t>(y[i]);
    }
    if (pos == 0) y[0] = 1, pos = 1;
    if (pos == n) y[0] = 0, pos = n - 1;
    const auto m = eval::metrics(eval::confusion(s, y, 0.0));
    const double prevalence = static_cast<double>(pos) / static_cast<double>(n);
    o.require(m.sensitivity == 1.0 && m.specificity == 0.0 && m.npv == 0.0 &&
                  std::abs(m.ppv - prevalence) < 1e-15,
              "seed " + std::to_string(seed));
  }
  o.detail << "20 random mixed-label sets ";
}

// ---- criterion 3 ----------------------------------------------------------

void ranking_oracles(Outcome& o) {
  double worst_roc = 0.0, worst_pr = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rng rng(seed * 31 + 7);
    const std::size_t n = 2 + rng.below(199);
    const int levels = 2 + static_cast<int>(rng.below(30));
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = rng.bernoulli(0.35) ? 1 : 0;
      s[i] = std::floor((rng.uniform() + 0.4 * y[i]) * levels) / levels;
    }
    y[0] = 1;
    y[1] = 0;
    double wins = 0.0, pairs = 0.0, ap = 0.0;
    std::size_t npos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (y[i] != 1) continue;
      ++npos;
      double above = 0.0, pos_above = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (y[j] == 0) {
          pairs += 1.0;
          wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
        if (s[j] >= s[i]) {
          above += 1.0;
          pos_above += y[j];
        }
      }
      ap += pos_above / above;
    }
    worst_roc = std::max(worst_roc, std::abs(eval::auroc(s, y) - wins / pairs));
    worst_pr = std::max(worst_pr, std::abs(eval::auprc(s, y) - ap / static_cast<double>(npos)));
  }
  o.detail << "max |auroc - oracle| " << worst_roc << ", max |auprc - oracle| " << worst_pr << " ";
  o.require(worst_roc <= 1e-12, "auroc oracle");
  o.require(worst_pr <= 1e-12, "auprc oracle");
}

// ---- criterion 4 ----------------------------------------------------------

nn::Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
  nn::Tensor t(std::move(shape));
  for (auto& v : t.data) v = rng.normal();
  return t;
}

double objective(const nn::LayerStack& s, const nn::Tensor& x, const nn::Tensor& r, std::uint64_t mask_seed) {
  Rng rng(mask_seed);
  const auto y = nn::forward(s, x, true, &rng);
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) sum += y.data[i] * r.data[i];
  return sum;
}

// Worst relative error of backward() against central differences.
double gradient_error(nn::LayerStack s, const nn::Tensor& x, std::uint64_t seed) {
  Rng rng(seed + 99);
  nn::ForwardCache cache;
  Rng mask(seed);
  const auto y = nn::forward(s, x, true, &mask, &cache);
  const auto r = random_tensor(y.shape, rng);
  const auto g = nn::backward(s, cache, r);
  const double h = 1e-5;
  double worst = 0.0;
  auto compare = [&](double analytic, double numeric) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
    worst = std::max(worst, std::abs(analytic - numeric) / scale);
  };
  for (std::size_t li = 0; li < s.size(); ++li) {
    auto& layer = s.layers()[li];
    if (!layer.spec.has_params()) continue;
    for (int which = 0; which < 2; ++which) {
      auto& p = which == 0 ? layer.weight.data : layer.bias.data;
      const auto& a = which == 0 ? g.layers[li].weight.data : g.layers[li].bias.data;
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double orig = p[j];
        p[j] = orig + h;
        const double up = objective(s, x, r, seed);
        p[j] = orig - h;
        const double down = objective(s, x, r, seed);
        p[j] = orig;
        compare(a[j], (up - down) / (2 * h));
      }
    }
  }
  nn::Tensor xp = x;
  for (std::size_t j = 0; j < x.size(); ++j) {
    xp.data[j] = x.data[j] + h;
    const double up = objective(s, xp, r, seed);
    xp.data[j] = x.data[j] - h;
    const double down = objective(s, xp, r, seed);
    xp.data[j] = x.data[j];
    compare(g.input.data[j], (up - down) / (2 * h));
  }
  return worst;
}

void gradient_checks(Outcome& o) {
  using nn::LayerSpec;
  struct Case {
    const char* name;
    std::vector<LayerSpec> specs;
    std::vector<std::size_t> shape;
  };
  const std::vector<Case> cases = {
      {"conv1d", {LayerSpec::conv1d(3, 3, 2)}, {2, 9}},
      {"relu", {LayerSpec::conv1d(3, 3), LayerSpec::relu()}, {2, 8}},
      {"maxpool", {LayerSpec::conv1d(2, 2), LayerSpec::maxpool1d(3)}, {2, 10}},
      {"flatten+dense", {LayerSpec::flatten(), LayerSpec::dense(4)}, {2, 5}},
      {"dropout", {LayerSpec::dense(6), LayerSpec::dropout(0.4), LayerSpec::dense(2)}, {5}},
      {"sigmoid_dense", {LayerSpec::flatten(), LayerSpec::sigmoid_dense(2)}, {3, 2}},
  };
  for (const auto& c : cases) {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      nn::LayerStack s(c.specs, c.shape, seed);
      Rng rng(seed * 13 + 1);
      for (auto& l : s.layers()) {
        for (auto& b : l.bias.data) b = rng.normal(0.0, 0.3);
      }
      std::vector<std::size_t> batch{3};
      batch.insert(batch.end(), c.shape.begin(), c.shape.end());
      worst = std::max(worst, gradient_error(s, random_tensor(batch, rng), seed));
    }
    o.detail << c.name << " " << worst << "; ";
    o.require(worst < 1e-4, c.name);
  }
}

// ---- criterion 5 ----------------------------------------------------------

void freeze_semantics(Outcome& o) {
  const auto specs = model::cnn_layer_specs();
  Rng rng(5);
  const auto x = random_tensor({8, 1, 84}, rng);
  const auto dz = random_tensor({8, 1}, rng);
  for (std::size_t k = 0; k <= model::kCnnLayers; ++k) {
    nn::LayerStack s(specs, {1, 84}, 11);
    s.set_trainable_last_k(k);
    const auto before = s.layers();
    nn::ForwardCache cache;
    Rng drop(3);
    nn::forward(s, x, true, &drop, &cache);
    nn::Optimizer opt(nn::train_config(1, 8, 1e-3));
    opt.step(s, nn::backward_logits(s, cache, dz));
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const bool changed = !(before[i] == s.layers()[i]);
      const bool expect = specs[i].has_params() && i >= specs.size() - k;
      if (changed != expect) {
        o.require(false, "k=" + std::to_string(k) + " layer " + std::to_string(i + 1));
      }
    }
  }
  o.detail << "k = 0..18 on the 18-layer stack ";
}

// ---- criterion 6 ----------------------------------------------------------

void mice_oracle(Outcome& o) {
  const std::size_t n = 500, p = 6;
  prep::FeatureMatrix m;
  for (std::size_t c = 0; c < p; ++c) {
    m.schema.continuous_columns.push_back({static_cast<std::int32_t>(100 + c), "x" + std::to_string(c)});
  }
  m.schema.exclusion_list = cohort::eval_feature_names();
  m.n_rows = n;
  m.n_cols = p;
  m.values.assign(n * p, 0.0);
  m.missing.assign(n * p, 0);
  Rng rng(6);
  const double coef[] = {0.7, -1.3, 0.4, 2.0, -0.5};
  for (std::size_t r = 0; r < n; ++r) {
    m.patient_ids.push_back(static_cast<std::int64_t>(r));
    double y = 0.25;
    for (std::size_t c = 0; c < 5; ++c) {
      m.at(r, c) = rng.normal(static_cast<double>(c), 1.0 + 0.2 * static_cast<double>(c));
      y += coef[c] * m.at(r, c);
    }
    m.at(r, 5) = y;
  }
  // 20% of the dependent column missing.
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  rng.shuffle(std::span(rows));
  for (std::size_t i = 0; i < n / 5; ++i) {
    m.at(rows[i], 5) = std::nan("");
    m.missing[rows[i] * p + 5] = 1;
  }
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  const auto z = prep::apply_standardizer(m, prep::fit_standardizer(m, all));

  prep::MiceReport rep;
  const auto out = prep::mice_impute(z, {}, &rep);

  // Least squares of the dependent column on the others plus intercept, observed rows only.
  const std::size_t n_obs = n - n / 5;
  Eigen::MatrixXd X(n_obs, p);
  Eigen::VectorXd Y(n_obs);
  std::size_t k = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (z.is_missing(r, 5)) continue;
    X(static_cast<Eigen::Index>(k), 0) = 1.0;
    for (std::size_t c = 0; c < 5; ++c) X(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c + 1)) = z.at(r, c);
    Y(static_cast<Eigen::Index>(k)) = z.at(r, 5);
    ++k;
  }
  const Eigen::VectorXd beta = X.colPivHouseholderQr().solve(Y);
  double worst = 0.0;
  bool observed_kept = true;
  for (std::size_t r = 0; r < n; ++r) {
    if (!z.is_missing(r, 5)) {
      observed_kept = observed_kept && out.at(r, 5) == z.at(r, 5);
      continue;
    }
    double pred = beta(0);
    for (std::size_t c = 0; c < 5; ++c) pred += beta(static_cast<Eigen::Index>(c + 1)) * z.at(r, c);
    worst = std::max(worst, std::abs(out.at(r, 5) - pred));
  }
  o.detail << "max |imputed - oracle| " << worst << ", sweeps " << rep.iterations << " ";
  o.require(worst <= 1e-6, "oracle agreement");
  o.require(rep.converged && rep.iterations <= 10, "convergence within 10 sweeps");
  o.require(observed_kept, "observed cells unchanged");
}

// ---- criteria 7-10: end-to-end runs ----------------------------------------

struct SeedRun {
  cli::RunConfig config;
  cli::SyntheticSites sites;
  cli::SourceStage source;
  cli::TargetStage target;
  model::GraModel pretrained;
  std::vector<model::GridResult> grid;
};

SeedRun run_seed(std::uint64_t seed) {
  SeedRun run;
  run.config.seed = seed;
  run.config.k_list = {0, model::kCnnLayers};
  run.sites = cli::synthesize(run.config);
  run.source = cli::prepare_source_stage(run.config, cli::records_of(run.sites.source),
                                         cohort::concept_dictionary(run.sites.source_config));
  run.pretrained = model::pretrain_gra(run.source.prepared.cohort.matrix, run.source.prepared.cohort.labels,
                                       run.source.split, run.source.prepared.scaler, cli::gra_config(run.config));
  run.target = cli::prepare_target_stage(run.config, cli::records_of(run.sites.target),
                                         cohort::concept_dictionary(run.sites.target_config), run.source.schema,
                                         run.source.prepared.scaler);
  run.grid = model::run_grid(run.pretrained, run.target.prepared.matrix, run.target.prepared.labels,
                             run.target.split, cli::grid_config(run.config));
  return run;
}

double cell_auroc(const SeedRun& run, std::size_t k, double f) {
  for (const auto& r : run.grid) {
    if (r.k == k && r.fraction_percent == f) return r.metrics.auroc;
  }
  throw std::runtime_error("missing grid cell");
}

std::vector<SeedRun> runs;

void transfer_property(Outcome& o) {
  for (std::uint64_t seed : {1u, 2u, 3u}) runs.push_back(run_seed(seed));
  const auto& fractions = runs.front().config.fraction_list;
  std::vector<double> frozen, full;
  std::vector<double> curve;
  for (const auto& r : runs) {
    frozen.push_back(cell_auroc(r, 0, 100));
    full.push_back(cell_auroc(r, model::kCnnLayers, 100));
  }
  for (double f : fractions) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(cell_auroc(r, model::kCnnLayers, f));
    curve.push_back(median(v));
  }
  const double k0 = median(frozen), k18 = median(full);
  o.detail << "median AUROC k=0 " << k0 << ", k=18 f=100% " << k18 << ", k=18 curve";
  for (double c : curve) o.detail << " " << c;
  o.detail << " ";
  o.require(k18 >= k0 + 0.15, "(a) k=18 beats k=0 by 0.15");
  o.require(runs.front().config.shift.concept_remap_fraction >= 0.3, "(b) remap fraction >= 0.3");
  o.require(k0 < 0.60, "(b) k=0 below 0.60");
  for (std::size_t i = 1; i < curve.size(); ++i) {
    o.require(curve[i] >= curve[i - 1] - 0.02, "(c) nondecreasing within 0.02 at f=" + std::to_string(fractions[i]));
  }
  o.require(k18 >= 0.80, "(d) full model at least 0.80");
}

// Fine-tuned model (k=18, f=100%) for the first seed, shared by 8-10.
model::GraModel tuned_model;

void calibration_gradient(Outcome& o) {
  const auto& run = runs.front();
  tuned_model = model::finetune(run.pretrained, run.target.prepared.matrix, run.target.prepared.labels,
                                run.target.split, cli::finetune_config(run.config, model::kCnnLayers, 100))
                    .model;
  // Fresh patients from the shifted target site, scored by the fine-tuned model.
  auto holdout_cfg = run.sites.target_config;
  holdout_cfg.n_patients = 8000;
  holdout_cfg.seed = run.config.seed + 300;
  holdout_cfg.patient_id_offset = 5000000;
  const auto labeled = model::label_cohort(cli::records_of(cohort::generate_cohort(holdout_cfg)),
                                           cohort::concept_dictionary(holdout_cfg));
  const auto prepared = model::prepare_cohort(labeled, run.source.schema, run.source.prepared.scaler, run.config.mice);
  const auto scores = model::predict(tuned_model, prepared.matrix);
  std::vector<std::size_t> rows(prepared.labels.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const auto table = eval::decile_calibration(scores, model::calibration_outcomes(prepared, rows));

  std::vector<double> index, dx, tx, iop, cdr;
  for (const auto& b : table.buckets) {
    index.push_back(static_cast<double>(b.index));
    dx.push_back(b.dx_rate);
    tx.push_back(b.tx_rate);
    iop.push_back(b.mean_max_iop);
    cdr.push_back(b.mean_max_cdr);
  }
  const double top = table.buckets[9].dx_rate, bottom = table.buckets[0].dx_rate;
  const double r_dx = eval::spearman(index, dx), r_tx = eval::spearman(index, tx);
  const double r_iop = eval::spearman(index, iop), r_cdr = eval::spearman(index, cdr);
  o.detail << "n " << rows.size() << ", top/bottom dx rate " << top << "/" << bottom << ", spearman dx " << r_dx
           << " tx " << r_tx << " iop " << r_iop << " cdr " << r_cdr << " ";
  o.require(top >= 5.0 * bottom && top > 0.0, "top decile at least 5x bottom");
  o.require(r_dx >= 0.9, "diagnosis rank correlation");
  o.require(r_tx >= 0.9, "treatment rank correlation");
  o.require(r_iop >= 0.9, "max IOP rank correlation");
  o.require(r_cdr >= 0.9, "max CDR rank correlation");
}

void baseline_separation(Outcome& o) {
  std::vector<double> gaps, gbt_aurocs, gra_aurocs;
  double min_share = 1.0;
  for (const auto& run : runs) {
    min_share = std::min({min_share, cohort::dx_med_coefficient_share(run.sites.source_config),
                          cohort::dx_med_coefficient_share(run.sites.target_config)});
    const auto& t = run.target;
    const auto x_train = baseline::demographic_matrix(t.prepared.matrix, t.split.train);
    const auto gbt = baseline::fit_gbdt(x_train, cli::labels_at(t.prepared.labels, t.split.train), run.config.gbt);
    const auto gbt_scores = baseline::predict_gbdt(gbt, baseline::demographic_matrix(t.prepared.matrix, t.split.test));
    const double gbt_auc = eval::auroc(gbt_scores, cli::labels_at(t.prepared.labels, t.split.test));
    const double gra_auc = cell_auroc(run, model::kCnnLayers, 100);
    gbt_aurocs.push_back(gbt_auc);
    gra_aurocs.push_back(gra_auc);
    gaps.push_back(gra_auc - gbt_auc);
  }
  o.detail << "dx/med coefficient share >= " << min_share << ", median GBT AUROC " << median(gbt_aurocs)
           << ", median GRA AUROC " << median(gra_aurocs) << ", min gap " << *std::min_element(gaps.begin(), gaps.end())
           << " ";
  o.require(min_share >= 0.7, "planted signal share");
  for (double g : gaps) o.require(g >= 0.10, "gap at least 0.10");
}

void persistence(Outcome& o) {
  const auto dir = fs::temp_directory_path() / "gra_acceptance";
  fs::create_directories(dir);
  const auto& run = runs.front();
  const auto a = dir / "a.ckpt", b = dir / "b.ckpt";
  ckpt::save(a, tuned_model);
  const auto loaded = ckpt::load_gra(a);
  ckpt::save(b, loaded);
  const auto bytes = ckpt::read_bytes(a);
  o.require(bytes == ckpt::read_bytes(b), "byte-identical re-save");
  o.require(loaded == tuned_model, "identical model");
  const auto& m = run.target.prepared.matrix;
  o.require(model::predict(loaded, m) == model::predict(tuned_model, m), "bit-identical predictions");

  auto c = ckpt::decode(bytes);
  c.arrays[2].offset += 4;
  try {
    ckpt::decode(ckpt::encode(c));
    o.require(false, "corrupted offset accepted");
  } catch (const Error& e) {
    o.require(e.kind() == ErrorKind::Format, "format error for corrupted offset");
  }
  o.detail << bytes.size() << " bytes ";
  fs::remove_all(dir);
}

// ---- criterion 11 ---------------------------------------------------------

void split_exactness(Outcome& o) {
  std::vector<int> labels(20636, 0);
  Rng rng(11);
  for (auto& y : labels) y = rng.bernoulli(0.156) ? 1 : 0;
  const auto s = prep::split(labels, {}, 1);
  o.detail << s.train.size() << "/" << s.validation.size() << "/" << s.test.size() << " ";
  o.require(s.train.size() == 14445 && s.validation.size() == 2063 && s.test.size() == 4128, "sizes");
}

}  // namespace

int main() {
  report(1, metric_arithmetic);
  report(2, degenerate_threshold);
  report(3, ranking_oracles);
  report(4, gradient_checks);
  report(5, freeze_semantics);
  report(6, mice_oracle);
  report(7, transfer_property);
  if (runs.size() == 3) {
    report(8, calibration_gradient);
    report(9, baseline_separation);
    report(10, persistence);
  } else {
    for (int id : {8, 9, 10}) report(id, [](Outcome& o) { o.require(false, "end-to-end runs unavailable"); });
  }
  report(11, split_exactness);
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
