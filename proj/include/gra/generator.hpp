#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "gra/cohort.hpp"

namespace gra::cohort {

// Planted logistic risk coefficients, one per concept in catalogue order.
// Lab weights multiply the patient's latent lab z-score.
struct SignalWeights {
  std::vector<double> dx;
  std::vector<double> med;
  std::vector<double> lab;
  bool operator==(const SignalWeights&) const = default;
};

struct DemographicEffects {
  double age_per_decade = 0.0;  // per 10 years above 65
  double male = 0.0;
  std::array<double, kRaceCount> race{};
  bool operator==(const DemographicEffects&) const = default;
};

// Everything needed to draw one site's cohort. Concept ids and marginals
// are explicit so that a shifted site can relabel and drift them.
struct GeneratorConfig {
  std::size_t n_patients = 1000;
  double target_prevalence = 0.15;
  std::size_t n_dx_concepts = 100;
  std::size_t n_med_concepts = 100;
  std::size_t n_lab_concepts = 12;
  SignalWeights signal_weights;
  DemographicEffects demographic_effects;
  double missingness_rate = 0.2;
  std::uint64_t seed = 7;

  std::vector<std::int32_t> dx_ids;
  std::vector<std::int32_t> med_ids;
  std::vector<std::int32_t> lab_ids;
  std::vector<double> dx_rate;   // per-concept presence probability
  std::vector<double> med_rate;
  std::vector<double> lab_mean;  // observed value = mean + sd * z
  std::vector<double> lab_sd;
  std::size_t n_vital_concepts = 3;  // trailing lab slots tagged as vitals
  std::int64_t patient_id_offset = 1;

  // Latent phenotype factors z ~ N(0, 1) shared by groups of dx/med
  // concepts: presence logit = logit(rate) + loading * z[factor]. With
  // n_factors = 0 concepts are drawn independently.
  std::size_t n_factors = 0;
  std::vector<std::size_t> dx_factor;
  std::vector<std::size_t> med_factor;
  std::vector<double> dx_loading;
  std::vector<double> med_loading;

  bool operator==(const GeneratorConfig&) const = default;
};

// Knobs for building a config with randomly drawn marginals and weights.
struct GeneratorOptions {
  std::size_t n_patients = 1000;
  double target_prevalence = 0.15;
  std::size_t n_dx_concepts = 100;
  std::size_t n_med_concepts = 100;
  std::size_t n_lab_concepts = 12;
  // Concepts are split round-robin across n_factors phenotype factors; the
  // first round(signal_fraction * n_factors) factors carry risk, each with
  // one sign for all of its concepts. With n_factors = 0 a random
  // signal_fraction of concepts carries independently signed weight.
  std::size_t n_factors = 8;
  double loading_min = 1.0;
  double loading_max = 2.0;
  double signal_fraction = 0.25;
  double signal_scale = 0.5;      // |weight| drawn from [0.67, 1.33] * scale
  double lab_signal_scale = 0.25;
  double demographic_scale = 1.0;
  bool zero_signal = false;  // every coefficient, demographics included, is 0
  double missingness_rate = 0.2;
  std::uint64_t seed = 7;
};

GeneratorConfig make_generator_config(const GeneratorOptions& options);

// Throws Error(Config) on an inconsistent or out-of-range config.
void validate(const GeneratorConfig& config);

// Share of absolute coefficient mass carried by dx and med concepts.
double dx_med_coefficient_share(const GeneratorConfig& config);

ConceptDictionary concept_dictionary(const GeneratorConfig& config);

struct GeneratedPatient {
  PatientRecord record;
  double latent_risk = 0.0;
  bool operator==(const GeneratedPatient&) const = default;
};

// Deterministic per seed: every patient draws from its own substream.
std::vector<GeneratedPatient> generate_cohort(const GeneratorConfig& config);

struct ShiftConfig {
  double prevalence_drift = 0.0;
  double coefficient_noise_sd = 0.0;
  double concept_remap_fraction = 0.0;
  double marginal_drift_sd = 0.0;
};

void validate(const ShiftConfig& shift);

// Target-site config: perturbed coefficients and marginals, floor(f * n)
// dx and med ids replaced by synonym ids (weights follow the new id), and
// additive prevalence drift. Coefficient noise is drawn per feature on the
// standardized scale (divided by the feature's base sd) for every dx, med
// and lab coefficient; for concepts tied to a phenotype factor a share
// kFactorNoiseShare of its variance is common to the factor.

GeneratorConfig apply_shift(const GeneratorConfig& config, const ShiftConfig& shift,
                            std::uint64_t seed);

inline constexpr double kFactorNoiseShare = 0.8;

// Offset added to a concept id to form its synonym at a shifted site.
inline constexpr std::int32_t kSynonymOffset = 500000;

}  // namespace gra::cohort
