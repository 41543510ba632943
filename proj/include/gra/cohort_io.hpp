#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include <nlohmann/json.hpp>

#include "gra/cohort.hpp"
#include "gra/generator.hpp"

namespace gra::cohort {

// One patient per line; dates as ISO-8601 strings.
nlohmann::json to_json(const PatientRecord& record);
PatientRecord patient_from_json(const nlohmann::json& j);

void write_cohort_jsonl(std::ostream& out, const std::vector<PatientRecord>& cohort);
std::vector<PatientRecord> read_cohort_jsonl(std::istream& in);

void write_cohort_jsonl(const std::filesystem::path& path, const std::vector<PatientRecord>& cohort);
std::vector<PatientRecord> read_cohort_jsonl(const std::filesystem::path& path);

nlohmann::json to_json(const ConceptDictionary& dict);
ConceptDictionary dictionary_from_json(const nlohmann::json& j);

// Ground-truth latent risks, one {patient_id, latent_risk} object per line.
void write_truth_jsonl(const std::filesystem::path& path,
                       const std::vector<GeneratedPatient>& cohort);
std::vector<std::pair<std::int64_t, double>> read_truth_jsonl(const std::filesystem::path& path);

nlohmann::json to_json(const GeneratorConfig& config);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ShiftConfig& shift);
ShiftConfig shift_config_from_json(const nlohmann::json& j);

}  // namespace gra::cohort
