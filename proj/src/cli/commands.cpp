#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "gra/checkpoint.hpp"
#include "gra/cli.hpp"
#include "gra/cohort_io.hpp"
#include "gra/error.hpp"
#include "gra/svg.hpp"

namespace gra::cli {

namespace fs = std::filesystem;

namespace {

std::vector<fs::path>& mutable_read_log() {
  static std::vector<fs::path> log;
  return log;
}

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::vector<std::size_t> k;
  std::vector<double> fraction;
  std::optional<std::size_t> threads;
  bool oracle = false;
  bool full_cohort = false;
  std::string model;
};

struct Context {
  RunConfig config;
  Flags flags;
  fs::path dir;
  std::string command;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

fs::path require(const Context& ctx, const char* name, const char* stage) {
  const fs::path p = ctx.dir / name;
  if (!fs::exists(p)) {
    fail(ErrorKind::MissingArtifact,
         "missing " + p.string() + "; run `gra " + stage + "` with the same --out first");
  }
  mutable_read_log().push_back(p);
  return p;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) fail(ErrorKind::MissingArtifact, "cannot open " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + p.string());
  out << text;
  if (!out) fail(ErrorKind::Io, "write failed for " + p.string());
}

void write_json(const fs::path& p, const nlohmann::json& j) { write_text(p, j.dump(2) + "\n"); }

std::vector<cohort::PatientRecord> load_cohort(const Context& ctx, const char* name) {
  return cohort::read_cohort_jsonl(require(ctx, name, "synth"));
}

cohort::ConceptDictionary load_dict(const Context& ctx, const char* name) {
  try {
    return cohort::dictionary_from_json(read_json(require(ctx, name, "synth")));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string(name) + ": " + e.what());
  }
}

fs::path model_path(const Context& ctx, const char* default_name, const char* stage) {
  if (ctx.flags.model.empty()) return require(ctx, default_name, stage);
  fs::path p = ctx.flags.model;
  if (!fs::exists(p)) fail(ErrorKind::MissingArtifact, "missing checkpoint " + p.string());
  mutable_read_log().push_back(p);
  return p;
}

TargetStage load_target(const Context& ctx, const prep::FeatureSchema& schema, const prep::ScalerParams& scaler) {
  return prepare_target_stage(ctx.config, load_cohort(ctx, files::kTarget), load_dict(ctx, files::kTargetConcepts),
                              schema, scaler);
}

const std::vector<std::size_t>& eval_rows(const Context& ctx, const TargetStage& t, std::vector<std::size_t>& all) {
  if (!ctx.config.calibration_full_cohort) return t.split.test;
  all.resize(t.prepared.labels.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

void print_report(const std::string& what, const eval::EvalReport& r) {
  std::cout << what << ": auroc " << fmt(r.auroc) << " auprc " << fmt(r.auprc) << " sens " << fmt(r.sensitivity)
            << " spec " << fmt(r.specificity) << " ppv " << fmt(r.ppv) << " f1 " << fmt(r.f1) << " threshold "
            << fmt(r.threshold) << "\n";
}

// ---- commands -------------------------------------------------------------

void cmd_synth(const Context& ctx) {
  const auto sites = synthesize(ctx.config);
  cohort::write_cohort_jsonl(ctx.dir / files::kSource, records_of(sites.source));
  cohort::write_cohort_jsonl(ctx.dir / files::kTarget, records_of(sites.target));
  write_json(ctx.dir / files::kConcepts, cohort::to_json(cohort::concept_dictionary(sites.source_config)));
  write_json(ctx.dir / files::kTargetConcepts, cohort::to_json(cohort::concept_dictionary(sites.target_config)));
  auto truth = sites.source;
  truth.insert(truth.end(), sites.target.begin(), sites.target.end());
  cohort::write_truth_jsonl(ctx.dir / files::kTruth, truth);
  std::cout << "source " << sites.source.size() << " patients, target " << sites.target.size()
            << " patients; dx/med coefficient share " << fmt(cohort::dx_med_coefficient_share(sites.source_config))
            << "\n";
}

void cmd_pretrain(const Context& ctx) {
  const auto stage = prepare_source_stage(ctx.config, load_cohort(ctx, files::kSource), load_dict(ctx, files::kConcepts));
  const auto& cohort = stage.prepared.cohort;
  model::PretrainReport report;
  const auto m = model::pretrain_gra(cohort.matrix, cohort.labels, stage.split, stage.prepared.scaler,
                                     gra_config(ctx.config), &report);
  ckpt::save(ctx.dir / files::kSourceCheckpoint, m);
  const auto test = evaluate_rows(m, cohort, stage.split.test);
  write_json(ctx.dir / "pretrain_eval.json",
             {{"source_test", eval::to_json(test)},
              {"split", {{"train", stage.split.train.size()},
                         {"validation", stage.split.validation.size()},
                         {"test", stage.split.test.size()}}},
              {"dx_autoencoder",
               {{"initial_holdout_loss", report.dx.initial_holdout_loss},
                {"final_holdout_loss", report.dx.final_holdout_loss}}},
              {"med_autoencoder",
               {{"initial_holdout_loss", report.med.initial_holdout_loss},
                {"final_holdout_loss", report.med.final_holdout_loss}}},
              {"cnn_epoch_loss", report.cnn.epoch_loss},
              {"mice", {{"iterations", cohort.mice.iterations}, {"converged", cohort.mice.converged}}}});
  write_text(ctx.dir / "pretrain_eval.csv", eval::report_csv(test));
  print_report("source test", test);
}

std::pair<std::size_t, double> single_cell(const Context& ctx) {
  if (ctx.flags.k.size() > 1 || ctx.flags.fraction.size() > 1) {
    fail(ErrorKind::Config, "finetune takes a single --k and a single --fraction");
  }
  const std::size_t k = ctx.flags.k.empty() ? model::kCnnLayers : ctx.flags.k.front();
  const double f = ctx.flags.fraction.empty() ? 100.0 : ctx.flags.fraction.front();
  if (k > model::kCnnLayers) fail(ErrorKind::Config, "--k must lie in [0, 18]");
  if (!(f > 0.0 && f <= 100.0)) fail(ErrorKind::Config, "--fraction must lie in (0, 100]");
  return {k, f};
}

void cmd_finetune(const Context& ctx) {
  const auto [k, f] = single_cell(ctx);
  const auto source = ckpt::load_gra(require(ctx, files::kSourceCheckpoint, "pretrain"));
  const auto target = load_target(ctx, source.schema, source.scaler);
  const auto& cohort = target.prepared;
  const auto inputs = model::assemble_inputs(source, cohort.matrix);
  const auto frozen = model::finetune(source, inputs, cohort.labels, target.split, finetune_config(ctx.config, 0, f));
  const auto tuned = model::finetune(source, inputs, cohort.labels, target.split, finetune_config(ctx.config, k, f));
  ckpt::save(ctx.dir / files::kTargetCheckpoint, tuned.model);
  const auto frozen_eval = evaluate_rows(frozen.model, cohort, target.split.test);
  const auto tuned_eval = evaluate_rows(tuned.model, cohort, target.split.test);
  write_json(ctx.dir / "finetune.json", {{"k", k},
                                         {"fraction", f},
                                         {"subsample_rows", tuned.subsample.size()},
                                         {"train_rows", target.split.train.size()},
                                         {"schema_coverage", cohort.coverage.fraction()},
                                         {"unknown_codes", cohort.coverage.unknown_codes},
                                         {"epoch_loss", tuned.train.epoch_loss},
                                         {"frozen_target_test", eval::to_json(frozen_eval)},
                                         {"target_test", eval::to_json(tuned_eval)}});
  std::cout << "schema coverage " << fmt(cohort.coverage.fraction()) << "\n";
  print_report("target test, k=0", frozen_eval);
  print_report("target test, k=" + std::to_string(k), tuned_eval);
}

void cmd_grid(const Context& ctx) {
  const auto source = ckpt::load_gra(require(ctx, files::kSourceCheckpoint, "pretrain"));
  const auto target = load_target(ctx, source.schema, source.scaler);
  const auto cfg = grid_config(ctx.config);
  const auto results = model::run_grid(source, target.prepared.matrix, target.prepared.labels, target.split, cfg);
  write_text(ctx.dir / "grid.csv", model::grid_csv(results));
  write_text(ctx.dir / "heatmap.csv", model::heatmap_csv(results));
  write_text(ctx.dir / "best_per_k.csv", model::grid_csv(model::best_per_k(results)));

  std::map<std::pair<std::size_t, double>, std::pair<double, int>> mean;
  for (const auto& r : results) {
    auto& [sum, n] = mean[{r.k, r.fraction_percent}];
    sum += r.metrics.auroc;
    ++n;
  }
  auto cell = [&](std::size_t k, double f) {
    const auto& [sum, n] = mean.at({k, f});
    return sum / n;
  };
  std::vector<std::string> cols, rows;
  for (double f : cfg.fraction_list) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g%%", f);
    cols.emplace_back(buf);
  }
  for (auto k : cfg.k_list) rows.push_back(std::to_string(k));
  std::vector<std::vector<double>> values;
  std::vector<eval::Series> curves;
  for (auto k : cfg.k_list) {
    auto& row = values.emplace_back();
    eval::Series s{"k=" + std::to_string(k), {}, false, true};
    for (double f : cfg.fraction_list) {
      row.push_back(cell(k, f));
      s.points.push_back({f, cell(k, f)});
    }
    curves.push_back(std::move(s));
  }
  write_text(ctx.dir / "heatmap.svg",
             eval::svg_heatmap("Target test AUROC", "Fraction of target training data", "Trainable layers (k)", cols,
                               rows, values));
  write_text(ctx.dir / "fraction_curves.svg",
             eval::svg_line_chart("AUROC by data fraction", "Fraction of target training data (%)", "AUROC", curves,
                                  {0.0, 100.0}, {0.0, 1.0}));
  std::cout << results.size() << " grid cells\n";
  for (const auto& r : model::best_per_k(results)) {
    std::cout << "k=" << r.k << " best f=" << r.fraction_percent << "% auroc " << fmt(r.metrics.auroc) << "\n";
  }
}

struct Scored {
  std::string kind;
  std::vector<double> scores;
  std::vector<std::size_t> rows;
  double threshold = 0.5;
  TargetStage target;
};

Scored score_model(const Context& ctx, const fs::path& path, bool calibration) {
  const auto c = ckpt::decode(ckpt::read_bytes(path));
  Scored s;
  s.kind = ckpt::kind(c);
  std::vector<std::size_t> all;
  if (s.kind == "gra") {
    const auto m = ckpt::unpack_gra(c);
    s.target = load_target(ctx, m.schema, m.scaler);
    s.rows = calibration ? eval_rows(ctx, s.target, all) : s.target.split.test;
    s.scores = model::predict(m, s.target.prepared.matrix.select_rows(s.rows));
    s.threshold = m.threshold;
  } else if (s.kind == "gbt") {
    const auto g = ckpt::unpack_gbt(c);
    s.target = load_target(ctx, g.schema, g.scaler);
    s.rows = calibration ? eval_rows(ctx, s.target, all) : s.target.split.test;
    s.scores = baseline::predict_gbdt(g.model, baseline::demographic_matrix(s.target.prepared.matrix, s.rows));
    s.threshold = g.model.threshold;
  } else {
    fail(ErrorKind::Format, "unknown checkpoint kind '" + s.kind + "'");
  }
  return s;
}

void cmd_eval(const Context& ctx) {
  const auto path = model_path(ctx, files::kTargetCheckpoint, "finetune");
  const auto s = score_model(ctx, path, false);
  const auto& cohort = s.target.prepared;
  const auto labels = labels_at(cohort.labels, s.rows);
  const auto report = eval::evaluate(s.scores, labels, s.threshold, groups_at(cohort.groups, s.rows));
  const std::string stem = path.stem().string();
  auto j = eval::to_json(report);
  j["model"] = path.filename().string();
  j["kind"] = s.kind;
  write_json(ctx.dir / (stem + "_eval.json"), j);
  write_text(ctx.dir / (stem + "_eval.csv"), eval::report_csv(report));
  write_text(ctx.dir / (stem + "_roc.svg"),
             eval::svg_line_chart("ROC curve", "False positive rate", "True positive rate",
                                  {{"model", eval::roc_curve(s.scores, labels), false, false},
                                   {"chance", {{0, 0}, {1, 1}}, true, false}}));
  write_text(ctx.dir / (stem + "_pr.svg"), eval::svg_line_chart("Precision-recall curve", "Recall", "Precision",
                                                                {{"model", eval::pr_curve(s.scores, labels), false,
                                                                  false}}));
  print_report(stem + " on target test", report);

  if (ctx.config.oracle) {
    const auto truth = cohort::read_truth_jsonl(require(ctx, files::kTruth, "synth"));
    std::map<std::int64_t, double> risk(truth.begin(), truth.end());
    std::vector<double> latent;
    for (auto r : s.rows) latent.push_back(risk.at(cohort.matrix.patient_ids[r]));
    const double oracle = eval::auroc(latent, labels);
    write_json(ctx.dir / (stem + "_oracle.json"), {{"latent_risk_auroc", oracle}, {"model_auroc", report.auroc}});
    std::cout << "oracle latent-risk auroc " << fmt(oracle) << "\n";
  }
}

void cmd_calibrate(const Context& ctx) {
  const auto path = model_path(ctx, files::kTargetCheckpoint, "finetune");
  const auto s = score_model(ctx, path, true);
  const auto table = eval::decile_calibration(s.scores, model::calibration_outcomes(s.target.prepared, s.rows));
  write_text(ctx.dir / "calibration.csv", eval::calibration_csv(table));
  write_json(ctx.dir / "calibration.json", eval::to_json(table));
  write_text(ctx.dir / "calibration.svg", eval::svg_calibration_panels(table));
  const auto& lo = table.buckets.front();
  const auto& hi = table.buckets.back();
  std::cout << "bottom decile dx rate " << fmt(lo.dx_rate) << ", top decile dx rate " << fmt(hi.dx_rate) << "\n";
}

void cmd_baseline(const Context& ctx) {
  const auto schema = prep::build_schema(load_dict(ctx, files::kConcepts));
  const auto labeled = model::label_cohort(load_cohort(ctx, files::kTarget), load_dict(ctx, files::kTargetConcepts));
  const auto split = prep::split(labeled.labels, ctx.config.split, ctx.config.seed + 1);
  const auto prepared = model::prepare_source(labeled, schema, split, ctx.config.mice);
  const auto& cohort = prepared.cohort;
  auto cfg = ctx.config.gbt;
  cfg.seed = ctx.config.seed;
  ckpt::GbtCheckpoint g;
  g.model = baseline::fit_gbdt(baseline::demographic_matrix(cohort.matrix, split.train),
                               labels_at(cohort.labels, split.train), cfg);
  const auto val = baseline::predict_gbdt(g.model, baseline::demographic_matrix(cohort.matrix, split.validation));
  g.model.threshold = eval::tune_threshold(val, labels_at(cohort.labels, split.validation));
  g.schema = schema;
  g.scaler = prepared.scaler;
  ckpt::save(ctx.dir / files::kBaselineCheckpoint, g);
  const auto test = baseline::predict_gbdt(g.model, baseline::demographic_matrix(cohort.matrix, split.test));
  const auto report = eval::evaluate(test, labels_at(cohort.labels, split.test), g.model.threshold,
                                     groups_at(cohort.groups, split.test));
  auto j = eval::to_json(report);
  j["model"] = files::kBaselineCheckpoint;
  j["kind"] = "gbt";
  write_json(ctx.dir / "baseline_eval.json", j);
  write_text(ctx.dir / "baseline_eval.csv", eval::report_csv(report));
  print_report("baseline on target test", report);
}

void cmd_report(const Context& ctx) {
  struct Row {
    std::string provenance, label;
    nlohmann::json metrics;  // null fields render empty
  };
  std::vector<Row> rows;
  auto computed = [&](const char* file, const char* stage, const char* label, const char* key) {
    const auto j = read_json(require(ctx, file, stage));
    rows.push_back({"computed", label, key ? j.at(key) : j});
  };
  if (fs::exists(ctx.dir / "pretrain_eval.json")) {
    computed("pretrain_eval.json", "pretrain", "gra source model on source test", "source_test");
  }
  if (fs::exists(ctx.dir / "finetune.json")) {
    computed("finetune.json", "finetune", "gra k=0 on target test", "frozen_target_test");
  }
  computed("target_eval.json", "eval", "gra fine-tuned on target test", nullptr);
  computed("baseline_eval.json", "baseline", "demographics-only boosted trees on target test", nullptr);
  for (const auto& r : reference_rows()) {
    nlohmann::json m = {{"auroc", r.auroc}, {"auprc", r.auprc}};
    if (r.has_confusion) {
      m.update({{"accuracy", r.accuracy},
                {"sensitivity", r.sensitivity},
                {"specificity", r.specificity},
                {"ppv", r.ppv},
                {"npv", r.npv},
                {"f1", r.f1},
                {"threshold", r.threshold}});
    }
    rows.push_back({"paper-reported", r.label, m});
  }
  static const char* kCols[] = {"auroc", "auprc", "accuracy", "sensitivity", "specificity",
                                "ppv",   "npv",   "f1",       "threshold"};
  std::ostringstream csv, md;
  csv << "provenance,model";
  md << "| provenance | model |";
  for (const char* c : kCols) {
    csv << ',' << c;
    md << ' ' << c << " |";
  }
  csv << '\n';
  md << "\n|---|---|";
  for (std::size_t i = 0; i < std::size(kCols); ++i) md << "---|";
  md << '\n';
  for (const auto& r : rows) {
    csv << r.provenance << ",\"" << r.label << '"';
    md << "| " << r.provenance << " | " << r.label << " |";
    for (const char* c : kCols) {
      const std::string v = r.metrics.contains(c) && r.metrics[c].is_number() ? fmt(r.metrics[c].get<double>()) : "";
      csv << ',' << v;
      md << ' ' << v << " |";
    }
    csv << '\n';
    md << '\n';
  }
  write_text(ctx.dir / "report.csv", csv.str());
  write_text(ctx.dir / "report.md", md.str());
  std::cout << md.str();
}

using Command = void (*)(const Context&);

RunConfig resolve_config(const Flags& flags) {
  RunConfig cfg;
  if (!flags.config.empty()) {
    const fs::path p = flags.config;
    if (!fs::exists(p)) fail(ErrorKind::Config, "config file not found: " + p.string());
    std::ifstream in(p);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Config, "config file " + p.string() + ": " + e.what());
    }
    cfg = run_config_from_json(j);
  }
  if (flags.seed) cfg.seed = *flags.seed;
  if (!flags.k.empty()) cfg.k_list = flags.k;
  if (!flags.fraction.empty()) cfg.fraction_list = flags.fraction;
  if (flags.threads) cfg.threads = *flags.threads;
  if (flags.oracle) cfg.oracle = true;
  if (flags.full_cohort) cfg.calibration_full_cohort = true;
  validate(cfg);
  return cfg;
}

int execute(const std::string& name, Command cmd, const Flags& flags) {
  Context ctx;
  ctx.flags = flags;
  ctx.command = name;
  ctx.config = resolve_config(flags);
  ctx.dir = flags.out;
  std::error_code ec;
  fs::create_directories(ctx.dir, ec);
  if (ec || !fs::is_directory(ctx.dir)) fail(ErrorKind::Io, "cannot create output directory " + ctx.dir.string());
  write_json(ctx.dir / ("run_config_" + name + ".json"), {{"command", name}, {"config", to_json(ctx.config)}});
  cmd(ctx);
  return 0;
}

}  // namespace

const std::vector<fs::path>& read_log() { return mutable_read_log(); }
void reset_read_log() { mutable_read_log().clear(); }

int run(const std::vector<std::string>& args) {
  CLI::App app{"Glaucoma risk model pipeline on synthetic cohorts"};
  app.require_subcommand(1);
  Flags flags;
  const std::vector<std::pair<std::string, std::pair<Command, std::string>>> commands = {
      {"synth", {cmd_synth, "Generate source and shifted target cohorts"}},
      {"pretrain", {cmd_pretrain, "Train autoencoders and CNN on the source cohort"}},
      {"finetune", {cmd_finetune, "Fine-tune the last k layers on a fraction of the target"}},
      {"grid", {cmd_grid, "Run the (k, fraction) fine-tuning grid"}},
      {"eval", {cmd_eval, "Evaluate a checkpoint on the target test split"}},
      {"calibrate", {cmd_calibrate, "Decile calibration against four outcome channels"}},
      {"baseline", {cmd_baseline, "Fit the demographics-only boosted-tree baseline"}},
      {"report", {cmd_report, "Merge computed and reference results"}},
  };
  std::string chosen;
  Command chosen_cmd = nullptr;
  for (const auto& [name, entry] : commands) {
    auto* sub = app.add_subcommand(name, entry.second);
    sub->add_option("--config", flags.config, "JSON run configuration");
    sub->add_option("--seed", flags.seed, "Master seed");
    sub->add_option("--out", flags.out, "Working directory for inputs and outputs");
    sub->add_option("--k", flags.k, "Trainable layer counts")->delimiter(',');
    sub->add_option("--fraction", flags.fraction, "Target training fractions in percent")->delimiter(',');
    sub->add_option("--threads", flags.threads, "Grid worker threads");
    sub->add_flag("--oracle", flags.oracle, "Also score the ground-truth latent risk (reads truth.jsonl)");
    if (name == "eval" || name == "calibrate") {
      sub->add_option("--model", flags.model, "Checkpoint to score (default target.ckpt)");
    }
    if (name == "calibrate") sub->add_flag("--full-cohort", flags.full_cohort, "Use every target row");
    sub->callback([&chosen, &chosen_cmd, name = name, cmd = entry.first] {
      chosen = name;
      chosen_cmd = cmd;
    });
  }

  std::vector<const char*> argv{"gra"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code(ErrorKind::Config);
  }
  try {
    return execute(chosen, chosen_cmd, flags);
  } catch (const Error& e) {
    std::cerr << "gra " << chosen << ": " << to_string(e.kind()) << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "gra " << chosen << ": " << e.what() << "\n";
    return exit_code(ErrorKind::Numeric);
  }
}

int main(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace gra::cli
