#include "gra/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "gra/error.hpp"
#include "gra/random.hpp"

namespace gra::cohort {

namespace {

struct LabDefault {
  const char* name;
  double mean;
  double sd;
};

// Systemic labs first, then vitals.
constexpr std::array<LabDefault, 12> kLabDefaults = {{
    {"hba1c", 5.9, 0.9},
    {"glucose", 105.0, 25.0},
    {"ldl", 110.0, 32.0},
    {"hdl", 55.0, 15.0},
    {"triglycerides", 140.0, 60.0},
    {"creatinine", 1.0, 0.3},
    {"egfr", 80.0, 20.0},
    {"hemoglobin", 13.5, 1.6},
    {"tsh", 2.0, 1.1},
    {"bmi", 27.5, 5.5},
    {"systolic_bp", 128.0, 16.0},
    {"diastolic_bp", 77.0, 10.0},
}};

constexpr std::array<double, kRaceCount> kRaceShares = {0.50, 0.035, 0.26, 0.12, 0.085};
constexpr std::array<double, kRaceCount> kRaceEffects = {0.0, 0.45, 0.35, -0.05, -0.05};

const Date kWindowStart = Date::from_ymd(2013, 11, 1);
const Date kWindowEnd = Date::from_ymd(2024, 1, 31);

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) {
  p = std::clamp(p, 1e-9, 1.0 - 1e-9);
  return std::log(p / (1.0 - p));
}

std::string lab_name(std::size_t i) {
  return i < kLabDefaults.size() ? kLabDefaults[i].name : "lab_" + std::to_string(i);
}

// Per-patient draws that feed the planted score.
struct Draw {
  double age = 0.0;
  Sex sex = Sex::Female;
  RaceEthnicity race = RaceEthnicity::NhWhite;
  std::vector<std::uint8_t> dx, med, lab_observed;
  std::vector<double> lab_z;
  double score = 0.0;
};

Draw draw_features(const GeneratorConfig& cfg, Rng& rng) {
  Draw d;
  d.age = std::clamp(rng.normal(63.0, 18.0), 18.0, 100.0);
  d.age = std::round(d.age * 10.0) / 10.0;
  d.sex = rng.bernoulli(0.42) ? Sex::Male : Sex::Female;
  double u = rng.uniform();
  std::size_t race = 0;
  for (; race + 1 < kRaceCount; ++race) {
    if (u < kRaceShares[race]) break;
    u -= kRaceShares[race];
  }
  d.race = static_cast<RaceEthnicity>(race);

  d.dx.resize(cfg.n_dx_concepts);
  d.med.resize(cfg.n_med_concepts);
  d.lab_observed.resize(cfg.n_lab_concepts);
  d.lab_z.resize(cfg.n_lab_concepts);
  std::vector<double> z(cfg.n_factors);
  for (auto& v : z) v = rng.normal();
  auto presence = [&](double rate, const std::vector<std::size_t>& factor, const std::vector<double>& loading,
                      std::size_t c) {
    if (cfg.n_factors == 0) return rng.bernoulli(rate);
    return rng.bernoulli(sigmoid(logit(rate) + loading[c] * z[factor[c]]));
  };
  for (std::size_t c = 0; c < cfg.n_dx_concepts; ++c) {
    d.dx[c] = presence(cfg.dx_rate[c], cfg.dx_factor, cfg.dx_loading, c);
  }
  for (std::size_t c = 0; c < cfg.n_med_concepts; ++c) {
    d.med[c] = presence(cfg.med_rate[c], cfg.med_factor, cfg.med_loading, c);
  }
  for (std::size_t c = 0; c < cfg.n_lab_concepts; ++c) {
    d.lab_z[c] = rng.normal();
    d.lab_observed[c] = !rng.bernoulli(cfg.missingness_rate);
  }

  const auto& w = cfg.signal_weights;
  const auto& demo = cfg.demographic_effects;
  double s = demo.age_per_decade * (d.age - 65.0) / 10.0;
  if (d.sex == Sex::Male) s += demo.male;
  s += demo.race[race];
  for (std::size_t c = 0; c < cfg.n_dx_concepts; ++c) s += w.dx[c] * d.dx[c];
  for (std::size_t c = 0; c < cfg.n_med_concepts; ++c) s += w.med[c] * d.med[c];
  for (std::size_t c = 0; c < cfg.n_lab_concepts; ++c) s += w.lab[c] * d.lab_z[c];
  d.score = s;
  return d;
}

// Intercept such that the mean planted risk equals the target prevalence.
double solve_intercept(const std::vector<Draw>& draws, double prevalence) {
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    double mean = 0.0;
    for (const auto& d : draws) mean += sigmoid(mid + d.score);
    mean /= static_cast<double>(draws.size());
    (mean < prevalence ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Date uniform_date(Rng& rng, Date lo, Date hi) {
  if (hi <= lo) return lo;
  return lo + static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(hi - lo) + 1));
}

std::vector<Date> distinct_dates(Rng& rng, Date lo, Date hi, std::size_t n) {
  std::set<Date> out;
  const auto span = static_cast<std::size_t>(std::max(0, hi - lo) + 1);
  n = std::min(n, span);
  while (out.size() < n) out.insert(uniform_date(rng, lo, hi));
  return {out.begin(), out.end()};
}

}  // namespace

GeneratorConfig make_generator_config(const GeneratorOptions& o) {
  GeneratorConfig cfg;
  cfg.n_patients = o.n_patients;
  cfg.target_prevalence = o.target_prevalence;
  cfg.n_dx_concepts = o.n_dx_concepts;
  cfg.n_med_concepts = o.n_med_concepts;
  cfg.n_lab_concepts = o.n_lab_concepts;
  cfg.missingness_rate = o.missingness_rate;
  cfg.seed = o.seed;
  cfg.n_vital_concepts = std::min<std::size_t>(3, o.n_lab_concepts);

  Rng rng(substream_seed(o.seed, 0xC0F16ULL));
  auto rates = [&](std::size_t n) {
    std::vector<double> r(n);
    for (auto& p : r) p = std::exp(rng.uniform(std::log(0.03), std::log(0.30)));
    return r;
  };
  // Independent weights: a random signal_fraction of concepts, random signs.
  auto weights = [&](std::size_t n) {
    std::vector<double> w(n, 0.0);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(std::span(idx));
    const auto n_signal = static_cast<std::size_t>(std::llround(o.signal_fraction * n));
    for (std::size_t i = 0; i < n_signal && i < n; ++i) {
      const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
      w[idx[i]] = sign * o.signal_scale * rng.uniform(0.67, 1.33);
    }
    return w;
  };
  // Round-robin factor membership over a shuffled concept order.
  auto factors = [&](std::size_t n, std::vector<std::size_t>& factor, std::vector<double>& loading) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(std::span(idx));
    factor.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) factor[idx[i]] = i % o.n_factors;
    loading.resize(n);
    for (auto& l : loading) l = rng.uniform(o.loading_min, o.loading_max);
  };
  auto factor_weights = [&](const std::vector<std::size_t>& factor, const std::vector<double>& sign) {
    std::vector<double> w(factor.size(), 0.0);
    for (std::size_t c = 0; c < factor.size(); ++c) {
      const double mag = o.signal_scale * rng.uniform(0.67, 1.33);
      if (sign[factor[c]] != 0.0) w[c] = sign[factor[c]] * mag;
    }
    return w;
  };

  for (std::size_t i = 0; i < o.n_dx_concepts; ++i) cfg.dx_ids.push_back(10000 + static_cast<std::int32_t>(i));
  for (std::size_t i = 0; i < o.n_med_concepts; ++i) cfg.med_ids.push_back(20000 + static_cast<std::int32_t>(i));
  for (std::size_t i = 0; i < o.n_lab_concepts; ++i) cfg.lab_ids.push_back(30000 + static_cast<std::int32_t>(i));
  cfg.dx_rate = rates(o.n_dx_concepts);
  cfg.med_rate = rates(o.n_med_concepts);
  if (o.n_factors > 0) {
    cfg.n_factors = o.n_factors;
    factors(o.n_dx_concepts, cfg.dx_factor, cfg.dx_loading);
    factors(o.n_med_concepts, cfg.med_factor, cfg.med_loading);
    std::vector<double> sign(o.n_factors, 0.0);
    const auto n_signal = std::min<std::size_t>(
        o.n_factors, static_cast<std::size_t>(std::llround(o.signal_fraction * static_cast<double>(o.n_factors))));
    for (std::size_t f = 0; f < n_signal; ++f) sign[f] = rng.bernoulli(0.5) ? 1.0 : -1.0;
    cfg.signal_weights.dx = factor_weights(cfg.dx_factor, sign);
    cfg.signal_weights.med = factor_weights(cfg.med_factor, sign);
  } else {
    cfg.signal_weights.dx = weights(o.n_dx_concepts);
    cfg.signal_weights.med = weights(o.n_med_concepts);
  }
  cfg.signal_weights.lab.resize(o.n_lab_concepts);
  for (auto& w : cfg.signal_weights.lab) w = o.lab_signal_scale * rng.normal();
  for (std::size_t i = 0; i < o.n_lab_concepts; ++i) {
    const auto& def = kLabDefaults[i % kLabDefaults.size()];
    cfg.lab_mean.push_back(def.mean);
    cfg.lab_sd.push_back(def.sd);
  }
  cfg.demographic_effects.age_per_decade = 0.35 * o.demographic_scale;
  cfg.demographic_effects.male = 0.10 * o.demographic_scale;
  for (std::size_t r = 0; r < kRaceCount; ++r) {
    cfg.demographic_effects.race[r] = kRaceEffects[r] * o.demographic_scale;
  }

  if (o.zero_signal) {
    auto zero = [](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); };
    zero(cfg.signal_weights.dx);
    zero(cfg.signal_weights.med);
    zero(cfg.signal_weights.lab);
    cfg.demographic_effects = {};
  }
  validate(cfg);
  return cfg;
}

void validate(const GeneratorConfig& c) {
  auto bad = [](const std::string& what) { fail(ErrorKind::Config, "generator config: " + what); };
  if (c.n_patients == 0) bad("n_patients must be positive");
  if (!(c.target_prevalence > 0.0 && c.target_prevalence < 1.0)) {
    bad("target_prevalence must lie in (0, 1), got " + std::to_string(c.target_prevalence));
  }
  if (!(c.missingness_rate >= 0.0 && c.missingness_rate <= 0.9)) {
    bad("missingness_rate must lie in [0, 0.9]");
  }
  auto check_len = [&](std::size_t n, std::size_t got, const char* name) {
    if (n != got) bad(std::string(name) + " length mismatch");
  };
  check_len(c.n_dx_concepts, c.dx_ids.size(), "dx_ids");
  check_len(c.n_dx_concepts, c.dx_rate.size(), "dx_rate");
  check_len(c.n_dx_concepts, c.signal_weights.dx.size(), "signal_weights.dx");
  check_len(c.n_med_concepts, c.med_ids.size(), "med_ids");
  check_len(c.n_med_concepts, c.med_rate.size(), "med_rate");
  check_len(c.n_med_concepts, c.signal_weights.med.size(), "signal_weights.med");
  check_len(c.n_lab_concepts, c.lab_ids.size(), "lab_ids");
  check_len(c.n_lab_concepts, c.lab_mean.size(), "lab_mean");
  check_len(c.n_lab_concepts, c.lab_sd.size(), "lab_sd");
  check_len(c.n_lab_concepts, c.signal_weights.lab.size(), "signal_weights.lab");
  if (c.n_vital_concepts > c.n_lab_concepts) bad("n_vital_concepts exceeds n_lab_concepts");
  if (c.n_factors > 0) {
    check_len(c.n_dx_concepts, c.dx_factor.size(), "dx_factor");
    check_len(c.n_dx_concepts, c.dx_loading.size(), "dx_loading");
    check_len(c.n_med_concepts, c.med_factor.size(), "med_factor");
    check_len(c.n_med_concepts, c.med_loading.size(), "med_loading");
    for (const auto* v : {&c.dx_factor, &c.med_factor}) {
      for (auto f : *v) {
        if (f >= c.n_factors) bad("factor index out of range");
      }
    }
    for (const auto* v : {&c.dx_loading, &c.med_loading}) {
      for (double l : *v) {
        if (!std::isfinite(l)) bad("non-finite factor loading");
      }
    }
  }
  for (double p : c.dx_rate) {
    if (!(p >= 0.0 && p <= 1.0)) bad("dx_rate outside [0, 1]");
  }
  for (double p : c.med_rate) {
    if (!(p >= 0.0 && p <= 1.0)) bad("med_rate outside [0, 1]");
  }
  for (double sd : c.lab_sd) {
    if (!(sd > 0.0)) bad("lab_sd must be positive");
  }
  std::set<std::int32_t> ids;
  for (const auto* v : {&c.dx_ids, &c.med_ids, &c.lab_ids}) {
    for (auto id : *v) {
      if (!ids.insert(id).second) bad("duplicate concept id " + std::to_string(id));
      if (id >= 9000 && id < 10000) bad("concept id collides with eye concept range");
    }
  }
}

double dx_med_coefficient_share(const GeneratorConfig& c) {
  auto mass = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += std::abs(x);
    return s;
  };
  const double dxmed = mass(c.signal_weights.dx) + mass(c.signal_weights.med);
  double other = mass(c.signal_weights.lab) + std::abs(c.demographic_effects.age_per_decade) +
                 std::abs(c.demographic_effects.male);
  for (double r : c.demographic_effects.race) other += std::abs(r);
  const double total = dxmed + other;
  return total > 0.0 ? dxmed / total : 0.0;
}

ConceptDictionary concept_dictionary(const GeneratorConfig& c) {
  ConceptDictionary dict;
  for (std::size_t i = 0; i < c.n_dx_concepts; ++i) {
    dict.add(c.dx_ids[i], Domain::Diagnosis, "dx_" + std::to_string(c.dx_ids[i]));
  }
  for (std::size_t i = 0; i < c.n_med_concepts; ++i) {
    dict.add(c.med_ids[i], Domain::Medication, "med_" + std::to_string(c.med_ids[i]));
  }
  const std::size_t first_vital = c.n_lab_concepts - c.n_vital_concepts;
  for (std::size_t i = 0; i < c.n_lab_concepts; ++i) {
    dict.add(c.lab_ids[i], i < first_vital ? Domain::Lab : Domain::Vital, lab_name(i));
  }
  add_eye_concepts(dict);
  return dict;
}

std::vector<GeneratedPatient> generate_cohort(const GeneratorConfig& cfg) {
  validate(cfg);
  const std::size_t n = cfg.n_patients;

  std::vector<Draw> draws;
  draws.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(substream_seed(cfg.seed, 2 * i));
    draws.push_back(draw_features(cfg, rng));
  }
  const double intercept = solve_intercept(draws, cfg.target_prevalence);
  double mean_s = 0.0, var_s = 0.0;
  for (const auto& d : draws) mean_s += d.score;
  mean_s /= static_cast<double>(n);
  for (const auto& d : draws) var_s += (d.score - mean_s) * (d.score - mean_s);
  const double sd_s = std::sqrt(var_s / static_cast<double>(n));

  const std::size_t first_vital = cfg.n_lab_concepts - cfg.n_vital_concepts;
  std::vector<GeneratedPatient> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Draw& d = draws[i];
    Rng rng(substream_seed(cfg.seed, 2 * i + 1));
    GeneratedPatient& gp = out[i];
    gp.latent_risk = sigmoid(intercept + d.score);
    const double z = sd_s > 0.0 ? (d.score - mean_s) / sd_s : 0.0;
    const bool positive = rng.bernoulli(gp.latent_risk);

    PatientRecord& rec = gp.record;
    rec.patient_id = cfg.patient_id_offset + static_cast<std::int64_t>(i);
    rec.age = d.age;
    rec.sex = d.sex;
    rec.race_ethnicity = d.race;

    const Date start = kWindowStart + static_cast<std::int32_t>(rng.below(1100));
    const Date end = kWindowEnd - static_cast<std::int32_t>(rng.below(365));
    const std::int32_t span = end - start;
    const Date first_dx =
        start + static_cast<std::int32_t>(std::floor(span * rng.uniform(0.40, 0.85)));
    const Date feature_end = positive ? first_dx - 1 : end;

    auto add_event = [&](std::int32_t id, Domain dom, Date date) {
      rec.events.push_back({{id, dom}, date});
    };
    auto add_coded = [&](const std::vector<std::uint8_t>& present,
                         const std::vector<std::int32_t>& ids, Domain dom) {
      for (std::size_t c = 0; c < present.size(); ++c) {
        if (!present[c]) continue;
        for (Date dt : distinct_dates(rng, start, feature_end, 1 + rng.below(3))) {
          add_event(ids[c], dom, dt);
        }
      }
    };
    add_coded(d.dx, cfg.dx_ids, Domain::Diagnosis);
    add_coded(d.med, cfg.med_ids, Domain::Medication);

    for (std::size_t c = 0; c < cfg.n_lab_concepts; ++c) {
      if (!d.lab_observed[c]) continue;
      const Domain dom = c < first_vital ? Domain::Lab : Domain::Vital;
      for (Date dt : distinct_dates(rng, start, feature_end, 1 + rng.below(3))) {
        const double v = cfg.lab_mean[c] + cfg.lab_sd[c] * (d.lab_z[c] + rng.normal(0.0, 0.15));
        rec.measurements.push_back({{cfg.lab_ids[c], dom}, dt, v});
      }
    }

    bool suspect = false;
    if (positive) {
      // Encounters on and after the first diagnosis date.
      std::vector<Date> dx_dates = distinct_dates(rng, first_dx + 1, end, 1 + rng.below(4));
      dx_dates.insert(dx_dates.begin(), first_dx);
      for (Date dt : dx_dates) {
        add_event(eye_concepts::kGlaucomaDx[rng.below(eye_concepts::kGlaucomaDx.size())],
                  Domain::GlaucomaDx, dt);
      }
      // Post-diagnosis systemic activity that the cutoff must remove.
      for (std::size_t k = 1 + rng.below(3); k > 0; --k) {
        if (rng.bernoulli(0.5) && cfg.n_dx_concepts > 0) {
          add_event(cfg.dx_ids[rng.below(cfg.n_dx_concepts)], Domain::Diagnosis,
                    uniform_date(rng, first_dx, end));
        } else if (cfg.n_med_concepts > 0) {
          add_event(cfg.med_ids[rng.below(cfg.n_med_concepts)], Domain::Medication,
                    uniform_date(rng, first_dx, end));
        }
      }
      for (std::size_t c = 0; c < cfg.n_lab_concepts; ++c) {
        if (d.lab_observed[c] && rng.bernoulli(0.3)) {
          const Domain dom = c < first_vital ? Domain::Lab : Domain::Vital;
          const double v = cfg.lab_mean[c] + cfg.lab_sd[c] * (d.lab_z[c] + 2.0);
          rec.measurements.push_back({{cfg.lab_ids[c], dom}, uniform_date(rng, first_dx, end), v});
        }
      }
    } else {
      suspect = rng.bernoulli(0.05 + 0.3 * gp.latent_risk);
      if (suspect) {
        for (Date dt : distinct_dates(rng, start, end, 1 + rng.below(3))) {
          add_event(eye_concepts::kGlaucomaSuspect[rng.below(eye_concepts::kGlaucomaSuspect.size())],
                    Domain::GlaucomaSuspectDx, dt);
        }
      }
      if (rng.bernoulli(0.03)) {  // single rule-out glaucoma encounter
        add_event(eye_concepts::kGlaucomaDx[rng.below(eye_concepts::kGlaucomaDx.size())],
                  Domain::GlaucomaDx, uniform_date(rng, start, end));
      }
    }

    const double p_treat = positive ? 0.82 : 0.03 + (suspect ? 0.25 : 0.0);
    if (rng.bernoulli(p_treat)) {
      const Date lo = positive ? first_dx : start;
      for (std::size_t k = 1 + rng.below(2); k > 0; --k) {
        add_event(eye_concepts::kTreatment[rng.below(eye_concepts::kTreatment.size())],
                  Domain::GlaucomaTreatment, uniform_date(rng, lo, end));
      }
    }

    const double label = positive ? 1.0 : 0.0;
    const double max_iop =
        std::clamp(19.4 + 1.1 * z + 1.6 * label + rng.normal(0.0, 1.6), 6.0, 60.0);
    const auto iop_dates = distinct_dates(rng, start, end, 1 + rng.below(4));
    for (std::size_t k = 0; k < iop_dates.size(); ++k) {
      const double v = k == 0 ? max_iop : std::max(5.0, max_iop - rng.uniform(0.5, 5.0));
      rec.measurements.push_back(
          {{eye_concepts::kIop, Domain::IntraocularPressure}, iop_dates[k], v});
    }
    if (rng.bernoulli(0.85)) {
      const double max_cdr =
          std::clamp(0.44 + 0.07 * z + 0.13 * label + rng.normal(0.0, 0.07), 0.05, 0.95);
      const auto cdr_dates = distinct_dates(rng, start, end, 1 + rng.below(2));
      for (std::size_t k = 0; k < cdr_dates.size(); ++k) {
        const double v = k == 0 ? max_cdr : std::max(0.0, max_cdr - rng.uniform(0.0, 0.1));
        rec.measurements.push_back(
            {{eye_concepts::kCdr, Domain::CupToDiscRatio}, cdr_dates[k], v});
      }
    }

    std::sort(rec.events.begin(), rec.events.end(), [](const auto& a, const auto& b) {
      return std::tie(a.date, a.code.id) < std::tie(b.date, b.code.id);
    });
    std::stable_sort(rec.measurements.begin(), rec.measurements.end(),
                     [](const auto& a, const auto& b) {
                       return std::tie(a.date, a.code.id) < std::tie(b.date, b.code.id);
                     });
  }
  return out;
}

void validate(const ShiftConfig& s) {
  if (!(s.coefficient_noise_sd >= 0.0) || !(s.marginal_drift_sd >= 0.0)) {
    fail(ErrorKind::Config, "shift magnitudes must be non-negative");
  }
  if (!(s.concept_remap_fraction >= 0.0 && s.concept_remap_fraction <= 1.0)) {
    fail(ErrorKind::Config, "concept_remap_fraction must lie in [0, 1]");
  }
  if (!std::isfinite(s.prevalence_drift)) {
    fail(ErrorKind::Config, "prevalence_drift must be finite");
  }
}

GeneratorConfig apply_shift(const GeneratorConfig& config, const ShiftConfig& shift,
                            std::uint64_t seed) {
  validate(shift);
  GeneratorConfig out = config;
  out.target_prevalence = config.target_prevalence + shift.prevalence_drift;
  if (!(out.target_prevalence > 0.0 && out.target_prevalence < 1.0)) {
    fail(ErrorKind::Config,
         "shifted prevalence " + std::to_string(out.target_prevalence) + " outside (0, 1)");
  }

  Rng rng(substream_seed(seed, 0x5A1F7ULL));
  const double sd = shift.coefficient_noise_sd;
  std::vector<double> factor_noise(config.n_factors);
  for (auto& e : factor_noise) e = rng.normal();
  auto perturb_coded = [&](std::vector<double>& w, const std::vector<double>& rate,
                           const std::vector<std::size_t>& factor) {
    for (std::size_t c = 0; c < w.size(); ++c) {
      double e = rng.normal();
      if (config.n_factors > 0) {
        e = std::sqrt(kFactorNoiseShare) * factor_noise[factor[c]] + std::sqrt(1.0 - kFactorNoiseShare) * e;
      }
      const double feature_sd = std::sqrt(std::max(rate[c] * (1.0 - rate[c]), 1e-4));
      if (sd > 0.0) w[c] += sd * e / feature_sd;
    }
  };
  perturb_coded(out.signal_weights.dx, config.dx_rate, config.dx_factor);
  perturb_coded(out.signal_weights.med, config.med_rate, config.med_factor);
  for (auto& w : out.signal_weights.lab) {
    const double e = rng.normal();
    if (sd > 0.0) w += sd * e;  // lab coefficients act on z-scores already
  }

  auto drift_rates = [&](std::vector<double>& rates) {
    for (auto& p : rates) {
      const double e = rng.normal();
      if (shift.marginal_drift_sd > 0.0) {
        const double logit = std::log(p / (1.0 - p)) + shift.marginal_drift_sd * e;
        p = std::clamp(1.0 / (1.0 + std::exp(-logit)), 0.005, 0.6);
      }
    }
  };
  drift_rates(out.dx_rate);
  drift_rates(out.med_rate);
  for (std::size_t i = 0; i < out.lab_mean.size(); ++i) {
    const double e = rng.normal();
    if (shift.marginal_drift_sd > 0.0) out.lab_mean[i] += shift.marginal_drift_sd * e * out.lab_sd[i];
  }

  auto remap = [&](std::vector<std::int32_t>& ids) {
    const auto m = static_cast<std::size_t>(
        std::floor(shift.concept_remap_fraction * static_cast<double>(ids.size()) + 1e-9));
    std::vector<std::size_t> idx(ids.size());
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(std::span(idx));
    for (std::size_t k = 0; k < m; ++k) ids[idx[k]] += kSynonymOffset;
  };
  remap(out.dx_ids);
  remap(out.med_ids);

  validate(out);
  return out;
}

}  // namespace gra::cohort
