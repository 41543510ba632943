#include "gra/cohort_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "gra/error.hpp"

namespace gra::cohort {

using nlohmann::json;

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingArtifact, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  return out;
}

template <typename T>
T get(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) fail(ErrorKind::Format, std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("bad field '") + key + "': " + e.what());
  }
}

}  // namespace

json to_json(const PatientRecord& r) {
  json events = json::array();
  for (const auto& e : r.events) {
    events.push_back({{"concept_id", e.code.id},
                      {"domain", std::string(to_string(e.code.domain))},
                      {"date", e.date.iso()}});
  }
  json meas = json::array();
  for (const auto& m : r.measurements) {
    meas.push_back({{"concept_id", m.code.id},
                    {"domain", std::string(to_string(m.code.domain))},
                    {"date", m.date.iso()},
                    {"value", m.value}});
  }
  return {{"patient_id", r.patient_id},
          {"age", r.age},
          {"sex", std::string(to_string(r.sex))},
          {"race_ethnicity", std::string(to_string(r.race_ethnicity))},
          {"events", std::move(events)},
          {"measurements", std::move(meas)}};
}

PatientRecord patient_from_json(const json& j) {
  PatientRecord r;
  r.patient_id = get<std::int64_t>(j, "patient_id");
  r.age = get<double>(j, "age");
  r.sex = sex_from_string(get<std::string>(j, "sex"));
  r.race_ethnicity = race_from_string(get<std::string>(j, "race_ethnicity"));
  for (const auto& e : get<json>(j, "events")) {
    r.events.push_back({{get<std::int32_t>(e, "concept_id"),
                         domain_from_string(get<std::string>(e, "domain"))},
                        Date::parse(get<std::string>(e, "date"))});
  }
  for (const auto& m : get<json>(j, "measurements")) {
    r.measurements.push_back({{get<std::int32_t>(m, "concept_id"),
                               domain_from_string(get<std::string>(m, "domain"))},
                              Date::parse(get<std::string>(m, "date")),
                              get<double>(m, "value")});
  }
  if (r.age < 18.0) fail(ErrorKind::Format, "patient " + std::to_string(r.patient_id) + " under 18");
  return r;
}

void write_cohort_jsonl(std::ostream& out, const std::vector<PatientRecord>& cohort) {
  for (const auto& r : cohort) out << to_json(r).dump() << '\n';
}

std::vector<PatientRecord> read_cohort_jsonl(std::istream& in) {
  std::vector<PatientRecord> out;
  std::set<std::int64_t> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorKind::Format, "cohort line " + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(patient_from_json(j));
    if (!seen.insert(out.back().patient_id).second) {
      fail(ErrorKind::Format, "duplicate patient_id " + std::to_string(out.back().patient_id));
    }
  }
  return out;
}

void write_cohort_jsonl(const std::filesystem::path& path,
                        const std::vector<PatientRecord>& cohort) {
  auto out = open_out(path);
  write_cohort_jsonl(out, cohort);
}

std::vector<PatientRecord> read_cohort_jsonl(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_cohort_jsonl(in);
}

json to_json(const ConceptDictionary& dict) {
  json concepts = json::array();
  for (const auto& [id, entry] : dict.entries()) {
    concepts.push_back(
        {{"concept_id", id}, {"domain", std::string(to_string(entry.domain))}, {"name", entry.name}});
  }
  auto id_list = [&](Domain d) {
    const auto ids = dict.ids_in(d);
    return json(std::vector<std::int32_t>(ids.begin(), ids.end()));
  };
  return {{"concepts", std::move(concepts)},
          {"glaucoma_set", id_list(Domain::GlaucomaDx)},
          {"suspect_set", id_list(Domain::GlaucomaSuspectDx)},
          {"treatment_set", id_list(Domain::GlaucomaTreatment)}};
}

ConceptDictionary dictionary_from_json(const json& j) {
  ConceptDictionary dict;
  for (const auto& c : get<json>(j, "concepts")) {
    dict.add(get<std::int32_t>(c, "concept_id"), domain_from_string(get<std::string>(c, "domain")),
             get<std::string>(c, "name"));
  }
  dict.validate();
  return dict;
}

void write_truth_jsonl(const std::filesystem::path& path,
                       const std::vector<GeneratedPatient>& cohort) {
  auto out = open_out(path);
  for (const auto& p : cohort) {
    out << json{{"patient_id", p.record.patient_id}, {"latent_risk", p.latent_risk}}.dump() << '\n';
  }
}

std::vector<std::pair<std::int64_t, double>> read_truth_jsonl(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<std::pair<std::int64_t, double>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    out.emplace_back(get<std::int64_t>(j, "patient_id"), get<double>(j, "latent_risk"));
  }
  return out;
}

json to_json(const GeneratorConfig& c) {
  const auto& d = c.demographic_effects;
  return {{"n_patients", c.n_patients},
          {"target_prevalence", c.target_prevalence},
          {"n_dx_concepts", c.n_dx_concepts},
          {"n_med_concepts", c.n_med_concepts},
          {"n_lab_concepts", c.n_lab_concepts},
          {"n_vital_concepts", c.n_vital_concepts},
          {"signal_weights",
           {{"dx", c.signal_weights.dx}, {"med", c.signal_weights.med}, {"lab", c.signal_weights.lab}}},
          {"demographic_effects",
           {{"age_per_decade", d.age_per_decade}, {"male", d.male}, {"race", d.race}}},
          {"missingness_rate", c.missingness_rate},
          {"seed", c.seed},
          {"dx_ids", c.dx_ids},
          {"med_ids", c.med_ids},
          {"lab_ids", c.lab_ids},
          {"dx_rate", c.dx_rate},
          {"med_rate", c.med_rate},
          {"lab_mean", c.lab_mean},
          {"lab_sd", c.lab_sd},
          {"patient_id_offset", c.patient_id_offset},
          {"n_factors", c.n_factors},
          {"dx_factor", c.dx_factor},
          {"med_factor", c.med_factor},
          {"dx_loading", c.dx_loading},
          {"med_loading", c.med_loading}};
}

GeneratorConfig generator_config_from_json(const json& j) {
  GeneratorConfig c;
  c.n_patients = get<std::size_t>(j, "n_patients");
  c.target_prevalence = get<double>(j, "target_prevalence");
  c.n_dx_concepts = get<std::size_t>(j, "n_dx_concepts");
  c.n_med_concepts = get<std::size_t>(j, "n_med_concepts");
  c.n_lab_concepts = get<std::size_t>(j, "n_lab_concepts");
  c.n_vital_concepts = get<std::size_t>(j, "n_vital_concepts");
  const auto w = get<json>(j, "signal_weights");
  c.signal_weights.dx = get<std::vector<double>>(w, "dx");
  c.signal_weights.med = get<std::vector<double>>(w, "med");
  c.signal_weights.lab = get<std::vector<double>>(w, "lab");
  const auto d = get<json>(j, "demographic_effects");
  c.demographic_effects.age_per_decade = get<double>(d, "age_per_decade");
  c.demographic_effects.male = get<double>(d, "male");
  c.demographic_effects.race = get<std::array<double, kRaceCount>>(d, "race");
  c.missingness_rate = get<double>(j, "missingness_rate");
  c.seed = get<std::uint64_t>(j, "seed");
  c.dx_ids = get<std::vector<std::int32_t>>(j, "dx_ids");
  c.med_ids = get<std::vector<std::int32_t>>(j, "med_ids");
  c.lab_ids = get<std::vector<std::int32_t>>(j, "lab_ids");
  c.dx_rate = get<std::vector<double>>(j, "dx_rate");
  c.med_rate = get<std::vector<double>>(j, "med_rate");
  c.lab_mean = get<std::vector<double>>(j, "lab_mean");
  c.lab_sd = get<std::vector<double>>(j, "lab_sd");
  c.patient_id_offset = get<std::int64_t>(j, "patient_id_offset");
  c.n_factors = j.value("n_factors", std::size_t{0});
  if (c.n_factors > 0) {
    c.dx_factor = get<std::vector<std::size_t>>(j, "dx_factor");
    c.med_factor = get<std::vector<std::size_t>>(j, "med_factor");
    c.dx_loading = get<std::vector<double>>(j, "dx_loading");
    c.med_loading = get<std::vector<double>>(j, "med_loading");
  }
  validate(c);
  return c;
}

json to_json(const ShiftConfig& s) {
  return {{"prevalence_drift", s.prevalence_drift},
          {"coefficient_noise_sd", s.coefficient_noise_sd},
          {"concept_remap_fraction", s.concept_remap_fraction},
          {"marginal_drift_sd", s.marginal_drift_sd}};
}

ShiftConfig shift_config_from_json(const json& j) {
  ShiftConfig s;
  s.prevalence_drift = j.value("prevalence_drift", 0.0);
  s.coefficient_noise_sd = j.value("coefficient_noise_sd", 0.0);
  s.concept_remap_fraction = j.value("concept_remap_fraction", 0.0);
  s.marginal_drift_sd = j.value("marginal_drift_sd", 0.0);
  validate(s);
  return s;
}

}  // namespace gra::cohort
