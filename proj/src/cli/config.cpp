#include <cmath>
#include <set>

#include "gra/cli.hpp"
#include "gra/error.hpp"

namespace gra::cli {

RunConfig::RunConfig() {
  source.n_patients = 4000;
  source.target_prevalence = 0.15;
}

namespace {

// Reads keys of one JSON object, remembering which were consumed so that
// anything left over can be reported as unknown.
class Section {
 public:
  Section(const nlohmann::json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) fail(ErrorKind::Config, "config: '" + name_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(ErrorKind::Config, "config: bad value for " + name_ + "." + key);
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  const nlohmann::json& sub(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) fail(ErrorKind::Config, "config: unknown key " + name_ + "." + k);
    }
  }

 private:
  const nlohmann::json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

void read_train(Section& s, nn::TrainConfig& t) {
  s.get("epochs", t.epochs);
  s.get("batch_size", t.batch_size);
  s.get("learning_rate", t.learning_rate);
}

nlohmann::json train_json(const nn::TrainConfig& t) {
  return {{"epochs", t.epochs}, {"batch_size", t.batch_size}, {"learning_rate", t.learning_rate}};
}

template <typename F>
void section(Section& parent, const char* key, F&& body) {
  if (!parent.has(key)) return;
  Section s(parent.sub(key), key);
  body(s);
  s.finish();
}

}  // namespace

nlohmann::json to_json(const RunConfig& c) {
  const auto& o = c.source;
  return {
      {"seed", c.seed},
      {"source",
       {{"n_patients", o.n_patients},
        {"target_prevalence", o.target_prevalence},
        {"n_dx_concepts", o.n_dx_concepts},
        {"n_med_concepts", o.n_med_concepts},
        {"n_lab_concepts", o.n_lab_concepts},
        {"n_factors", o.n_factors},
        {"loading_min", o.loading_min},
        {"loading_max", o.loading_max},
        {"signal_fraction", o.signal_fraction},
        {"signal_scale", o.signal_scale},
        {"lab_signal_scale", o.lab_signal_scale},
        {"demographic_scale", o.demographic_scale},
        {"zero_signal", o.zero_signal},
        {"missingness_rate", o.missingness_rate}}},
      {"target", {{"n_patients", c.target_n}, {"id_offset", c.target_id_offset}}},
      {"shift",
       {{"prevalence_drift", c.shift.prevalence_drift},
        {"coefficient_noise_sd", c.shift.coefficient_noise_sd},
        {"concept_remap_fraction", c.shift.concept_remap_fraction},
        {"marginal_drift_sd", c.shift.marginal_drift_sd}}},
      {"split", {{"train", c.split.train}, {"validation", c.split.validation}, {"test", c.split.test}}},
      {"mice", {{"max_iter", c.mice.max_iter}, {"tol", c.mice.tol}, {"residual_noise", c.mice.residual_noise}}},
      {"autoencoder",
       {{"embedding_dim", c.autoencoder.embedding_dim},
        {"holdout_fraction", c.autoencoder.holdout_fraction},
        {"epochs", c.autoencoder.train.epochs},
        {"batch_size", c.autoencoder.train.batch_size},
        {"learning_rate", c.autoencoder.train.learning_rate}}},
      {"cnn", train_json(c.cnn)},
      {"finetune", train_json(c.finetune)},
      {"grid",
       {{"k_list", c.k_list}, {"fraction_list", c.fraction_list}, {"seeds", c.grid_seeds}, {"threads", c.threads}}},
      {"baseline",
       {{"n_trees", c.gbt.n_trees},
        {"max_depth", c.gbt.max_depth},
        {"learning_rate", c.gbt.learning_rate},
        {"min_leaf", c.gbt.min_leaf}}},
      {"calibration", {{"full_cohort", c.calibration_full_cohort}}},
      {"oracle", c.oracle},
  };
}

RunConfig run_config_from_json(const nlohmann::json& j, const RunConfig& base) {
  RunConfig c = base;
  Section root(j, "config");
  root.get("seed", c.seed);
  root.get("oracle", c.oracle);
  section(root, "source", [&](Section& s) {
    auto& o = c.source;
    s.get("n_patients", o.n_patients);
    s.get("target_prevalence", o.target_prevalence);
    s.get("n_dx_concepts", o.n_dx_concepts);
    s.get("n_med_concepts", o.n_med_concepts);
    s.get("n_lab_concepts", o.n_lab_concepts);
    s.get("n_factors", o.n_factors);
    s.get("loading_min", o.loading_min);
    s.get("loading_max", o.loading_max);
    s.get("signal_fraction", o.signal_fraction);
    s.get("signal_scale", o.signal_scale);
    s.get("lab_signal_scale", o.lab_signal_scale);
    s.get("demographic_scale", o.demographic_scale);
    s.get("zero_signal", o.zero_signal);
    s.get("missingness_rate", o.missingness_rate);
  });
  section(root, "target", [&](Section& s) {
    s.get("n_patients", c.target_n);
    s.get("id_offset", c.target_id_offset);
  });
  section(root, "shift", [&](Section& s) {
    s.get("prevalence_drift", c.shift.prevalence_drift);
    s.get("coefficient_noise_sd", c.shift.coefficient_noise_sd);
    s.get("concept_remap_fraction", c.shift.concept_remap_fraction);
    s.get("marginal_drift_sd", c.shift.marginal_drift_sd);
  });
  section(root, "split", [&](Section& s) {
    s.get("train", c.split.train);
    s.get("validation", c.split.validation);
    s.get("test", c.split.test);
  });
  section(root, "mice", [&](Section& s) {
    s.get("max_iter", c.mice.max_iter);
    s.get("tol", c.mice.tol);
    s.get("residual_noise", c.mice.residual_noise);
  });
  section(root, "autoencoder", [&](Section& s) {
    s.get("embedding_dim", c.autoencoder.embedding_dim);
    s.get("holdout_fraction", c.autoencoder.holdout_fraction);
    read_train(s, c.autoencoder.train);
  });
  section(root, "cnn", [&](Section& s) { read_train(s, c.cnn); });
  section(root, "finetune", [&](Section& s) { read_train(s, c.finetune); });
  section(root, "grid", [&](Section& s) {
    s.get("k_list", c.k_list);
    s.get("fraction_list", c.fraction_list);
    s.get("seeds", c.grid_seeds);
    s.get("threads", c.threads);
  });
  section(root, "baseline", [&](Section& s) {
    s.get("n_trees", c.gbt.n_trees);
    s.get("max_depth", c.gbt.max_depth);
    s.get("learning_rate", c.gbt.learning_rate);
    s.get("min_leaf", c.gbt.min_leaf);
  });
  section(root, "calibration", [&](Section& s) { s.get("full_cohort", c.calibration_full_cohort); });
  root.finish();
  validate(c);
  return c;
}

void validate(const RunConfig& c) {
  auto bad = [](const std::string& what) { fail(ErrorKind::Config, "config: " + what); };
  const auto& o = c.source;
  if (o.n_patients < 10) bad("source.n_patients must be at least 10");
  if (c.target_n < 10) bad("target.n_patients must be at least 10");
  if (!(o.target_prevalence > 0.0 && o.target_prevalence < 1.0)) {
    bad("source.target_prevalence must lie in (0, 1)");
  }
  const double shifted = o.target_prevalence + c.shift.prevalence_drift;
  if (!(shifted > 0.0 && shifted < 1.0)) bad("shifted prevalence must lie in (0, 1)");
  if (!(o.missingness_rate >= 0.0 && o.missingness_rate <= 0.9)) bad("source.missingness_rate must lie in [0, 0.9]");
  if (!(o.signal_fraction >= 0.0 && o.signal_fraction <= 1.0)) bad("source.signal_fraction must lie in [0, 1]");
  if (!(o.loading_min <= o.loading_max)) bad("source.loading_min exceeds loading_max");
  if (c.target_id_offset < static_cast<std::int64_t>(o.n_patients) + 1) {
    bad("target.id_offset must exceed the source patient ids");
  }
  cohort::validate(c.shift);
  for (double r : {c.split.train, c.split.validation, c.split.test}) {
    if (!(r > 0.0 && r < 1.0)) bad("split ratios must lie in (0, 1)");
  }
  if (std::abs(c.split.train + c.split.validation + c.split.test - 1.0) > 1e-9) bad("split ratios must sum to 1");
  if (c.mice.max_iter < 1 || !(c.mice.tol > 0.0)) bad("mice.max_iter and mice.tol must be positive");
  if (c.autoencoder.embedding_dim < 1) bad("autoencoder.embedding_dim must be positive");
  if (!(c.autoencoder.holdout_fraction > 0.0 && c.autoencoder.holdout_fraction < 1.0)) {
    bad("autoencoder.holdout_fraction must lie in (0, 1)");
  }
  nn::validate(c.autoencoder.train);
  nn::validate(c.cnn);
  nn::validate(c.finetune);
  if (c.k_list.empty() || c.fraction_list.empty()) bad("grid lists must be nonempty");
  for (auto k : c.k_list) {
    if (k > model::kCnnLayers) bad("k values must lie in [0, 18]");
  }
  for (double f : c.fraction_list) {
    if (!(f > 0.0 && f <= 100.0)) bad("fractions must lie in (0, 100]");
  }
  if (c.threads < 1) bad("threads must be at least 1");
  if (c.gbt.min_leaf < 1 || !(c.gbt.learning_rate > 0.0)) bad("baseline.min_leaf and learning_rate must be positive");
}

}  // namespace gra::cli
