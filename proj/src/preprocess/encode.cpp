#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <unordered_map>

#include "gra/error.hpp"
#include "gra/preprocess.hpp"

namespace gra::prep {

using cohort::Domain;

std::vector<std::string> default_demographic_columns() {
  std::vector<std::string> cols = {"age", "sex_male", "sex_female"};
  for (std::size_t r = 0; r < cohort::kRaceCount; ++r) {
    cols.push_back("race_" + std::string(cohort::to_string(static_cast<cohort::RaceEthnicity>(r))));
  }
  return cols;
}

std::vector<std::string> FeatureSchema::column_names() const {
  std::vector<std::string> names = demographic_columns;
  for (auto id : dx_columns) names.push_back("dx_" + std::to_string(id));
  for (auto id : med_columns) names.push_back("med_" + std::to_string(id));
  for (const auto& [id, name] : continuous_columns) names.push_back(name);
  return names;
}

std::vector<std::size_t> FeatureSchema::numeric_columns() const {
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < demographic_columns.size(); ++i) {
    if (demographic_columns[i] == "age") cols.push_back(i);
  }
  for (std::size_t i = 0; i < continuous_columns.size(); ++i) cols.push_back(continuous_offset() + i);
  return cols;
}

bool FeatureSchema::is_boolean(std::size_t column) const {
  if (column >= continuous_offset()) return false;
  if (column < demographic_columns.size()) return demographic_columns[column] != "age";
  return true;
}

void FeatureSchema::validate() const {
  std::set<std::string> seen;
  for (const auto& name : column_names()) {
    if (!seen.insert(name).second) fail(ErrorKind::Schema, "duplicate column '" + name + "'");
  }
  std::set<std::int32_t> ids;
  for (auto id : dx_columns) ids.insert(id);
  for (auto id : med_columns) {
    if (!ids.insert(id).second) fail(ErrorKind::Schema, "concept " + std::to_string(id) + " in two column lists");
  }
  for (const auto& [id, name] : continuous_columns) {
    if (!ids.insert(id).second) fail(ErrorKind::Schema, "concept " + std::to_string(id) + " in two column lists");
  }
  for (const auto& excluded : exclusion_list) {
    if (seen.contains(excluded)) {
      fail(ErrorKind::Schema, "evaluation-only feature '" + excluded + "' present in feature schema");
    }
  }
}

FeatureSchema build_schema(const cohort::ConceptDictionary& dict) {
  FeatureSchema s;
  s.demographic_columns = default_demographic_columns();
  for (const auto& [id, entry] : dict.entries()) {
    switch (entry.domain) {
      case Domain::Diagnosis: s.dx_columns.push_back(id); break;
      case Domain::Medication: s.med_columns.push_back(id); break;
      case Domain::Lab:
      case Domain::Vital: s.continuous_columns.emplace_back(id, entry.name); break;
      default: break;
    }
  }
  s.exclusion_list = cohort::eval_feature_names();
  s.validate();
  return s;
}

nlohmann::json to_json(const FeatureSchema& s) {
  nlohmann::json cont = nlohmann::json::array();
  for (const auto& [id, name] : s.continuous_columns) cont.push_back({{"concept_id", id}, {"name", name}});
  return {{"dx_columns", s.dx_columns},
          {"med_columns", s.med_columns},
          {"continuous_columns", std::move(cont)},
          {"demographic_columns", s.demographic_columns},
          {"exclusion_list", s.exclusion_list}};
}

FeatureSchema schema_from_json(const nlohmann::json& j) {
  FeatureSchema s;
  try {
    s.dx_columns = j.at("dx_columns").get<std::vector<std::int32_t>>();
    s.med_columns = j.at("med_columns").get<std::vector<std::int32_t>>();
    for (const auto& c : j.at("continuous_columns")) {
      s.continuous_columns.emplace_back(c.at("concept_id").get<std::int32_t>(),
                                        c.at("name").get<std::string>());
    }
    s.demographic_columns = j.at("demographic_columns").get<std::vector<std::string>>();
    s.exclusion_list = j.at("exclusion_list").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("feature schema: ") + e.what());
  }
  s.validate();
  return s;
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> rows) const {
  FeatureMatrix out;
  out.n_rows = rows.size();
  out.n_cols = n_cols;
  out.schema = schema;
  out.values.reserve(rows.size() * n_cols);
  out.missing.reserve(rows.size() * n_cols);
  for (auto r : rows) {
    if (r >= n_rows) fail(ErrorKind::Shape, "row index out of range");
    out.values.insert(out.values.end(), values.begin() + r * n_cols, values.begin() + (r + 1) * n_cols);
    out.missing.insert(out.missing.end(), missing.begin() + r * n_cols, missing.begin() + (r + 1) * n_cols);
    out.patient_ids.push_back(patient_ids[r]);
  }
  return out;
}

Encoded encode_mapped(const std::vector<cohort::PatientRecord>& cohort, const FeatureSchema& schema,
                      UnknownConcepts policy) {
  schema.validate();
  std::unordered_map<std::int32_t, std::size_t> dx_col, med_col, cont_col;
  for (std::size_t i = 0; i < schema.dx_columns.size(); ++i) dx_col[schema.dx_columns[i]] = schema.dx_offset() + i;
  for (std::size_t i = 0; i < schema.med_columns.size(); ++i) med_col[schema.med_columns[i]] = schema.med_offset() + i;
  for (std::size_t i = 0; i < schema.continuous_columns.size(); ++i) {
    cont_col[schema.continuous_columns[i].first] = schema.continuous_offset() + i;
  }
  std::unordered_map<std::string, std::size_t> demo_col;
  for (std::size_t i = 0; i < schema.demographic_columns.size(); ++i) demo_col[schema.demographic_columns[i]] = i;

  Encoded out;
  FeatureMatrix& m = out.matrix;
  m.schema = schema;
  m.n_rows = cohort.size();
  m.n_cols = schema.n_columns();
  m.values.assign(m.n_rows * m.n_cols, 0.0);
  m.missing.assign(m.n_rows * m.n_cols, 0);
  std::set<std::int32_t> unknown_ids;

  auto unknown = [&](std::int32_t id, std::int64_t patient) {
    if (policy == UnknownConcepts::Reject) {
      fail(ErrorKind::Schema, "concept " + std::to_string(id) + " (patient " + std::to_string(patient) +
                                  ") has no column in the feature schema");
    }
    unknown_ids.insert(id);
  };

  for (std::size_t r = 0; r < cohort.size(); ++r) {
    const auto& rec = cohort[r];
    m.patient_ids.push_back(rec.patient_id);
    auto set_demo = [&](const std::string& name, double v) {
      if (auto it = demo_col.find(name); it != demo_col.end()) m.at(r, it->second) = v;
    };
    set_demo("age", rec.age);
    set_demo("sex_" + std::string(cohort::to_string(rec.sex)), 1.0);
    set_demo("race_" + std::string(cohort::to_string(rec.race_ethnicity)), 1.0);

    std::set<std::int32_t> unknown_here;
    for (const auto& ev : rec.events) {
      const auto d = ev.code.domain;
      if (d != Domain::Diagnosis && d != Domain::Medication) continue;
      auto& cols = d == Domain::Diagnosis ? dx_col : med_col;
      if (auto it = cols.find(ev.code.id); it != cols.end()) {
        m.at(r, it->second) = 1.0;
      } else {
        unknown(ev.code.id, rec.patient_id);
        unknown_here.insert(ev.code.id);
      }
    }
    out.coverage.unknown_codes += unknown_here.size();

    // Latest value wins; on equal dates the later record in the list wins.
    std::map<std::size_t, std::pair<Date, double>> latest;
    for (const auto& ms : rec.measurements) {
      const auto d = ms.code.domain;
      if (d != Domain::Lab && d != Domain::Vital) continue;
      auto it = cont_col.find(ms.code.id);
      if (it == cont_col.end()) {
        unknown(ms.code.id, rec.patient_id);
        continue;
      }
      auto [pos, inserted] = latest.emplace(it->second, std::make_pair(ms.date, ms.value));
      if (!inserted && ms.date >= pos->second.first) pos->second = {ms.date, ms.value};
    }
    for (std::size_t i = 0; i < schema.continuous_columns.size(); ++i) {
      const std::size_t c = schema.continuous_offset() + i;
      if (auto it = latest.find(c); it != latest.end()) {
        m.at(r, c) = it->second.second;
      } else {
        m.at(r, c) = std::numeric_limits<double>::quiet_NaN();
        m.missing[r * m.n_cols + c] = 1;
      }
    }
  }
  for (std::size_t r = 0; r < m.n_rows; ++r) {
    for (std::size_t c = schema.dx_offset(); c < schema.continuous_offset(); ++c) {
      if (m.at(r, c) != 0.0) ++out.coverage.known_codes;
    }
  }
  out.coverage.distinct_unknown = unknown_ids.size();
  return out;
}

FeatureMatrix encode(const std::vector<cohort::PatientRecord>& cohort, const FeatureSchema& schema) {
  return encode_mapped(cohort, schema, UnknownConcepts::Reject).matrix;
}

}  // namespace gra::prep
