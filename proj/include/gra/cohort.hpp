#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "gra/date.hpp"

namespace gra::cohort {

// IOP and cup-to-disc ratio get their own domains so that eye-exam
// measurements can never be mistaken for systemic labs or vitals.
enum class Domain {
  Diagnosis,
  Medication,
  Lab,
  Vital,
  GlaucomaDx,
  GlaucomaSuspectDx,
  GlaucomaTreatment,
  IntraocularPressure,
  CupToDiscRatio,
};

std::string_view to_string(Domain d);
Domain domain_from_string(std::string_view s);

// Domains whose codes are eye-specific and therefore evaluation-only.
bool is_eye_domain(Domain d);

struct ConceptCode {
  std::int32_t id = 0;
  Domain domain = Domain::Diagnosis;
  bool operator==(const ConceptCode&) const = default;
};

struct CodedEvent {
  ConceptCode code;
  Date date;
  bool operator==(const CodedEvent&) const = default;
};

struct MeasurementEvent {
  ConceptCode code;
  Date date;
  double value = 0.0;
  bool operator==(const MeasurementEvent&) const = default;
};

enum class Sex { Male, Female };
enum class RaceEthnicity { NhWhite, NhBlack, NhAsian, Hispanic, Other };
inline constexpr std::size_t kRaceCount = 5;

std::string_view to_string(Sex s);
std::string_view to_string(RaceEthnicity r);
Sex sex_from_string(std::string_view s);
RaceEthnicity race_from_string(std::string_view s);

struct PatientRecord {
  std::int64_t patient_id = 0;
  double age = 0.0;
  Sex sex = Sex::Female;
  RaceEthnicity race_ethnicity = RaceEthnicity::NhWhite;
  std::vector<CodedEvent> events;
  std::vector<MeasurementEvent> measurements;
  bool operator==(const PatientRecord&) const = default;
};

struct CohortLabel {
  bool is_glaucoma = false;
  std::optional<Date> first_dx_date;
  bool operator==(const CohortLabel&) const = default;
};

// Eye-exam outcomes used for calibration only; never model inputs.
struct EyeEvalFeatures {
  std::optional<double> max_iop;
  std::optional<double> max_cdr;
  bool any_treatment = false;
};

// Names reserved for evaluation-only features. Feature schemas must not
// contain any of them.
const std::vector<std::string>& eval_feature_names();

// Positive iff at least two distinct calendar dates carry a GlaucomaDx code
// that is not in `suspect_set`. Any two glaucoma concepts qualify.
CohortLabel label_glaucoma(const PatientRecord& record, const std::set<std::int32_t>& suspect_set);

// Positive patients keep only events/measurements strictly before the first
// diagnosis date; negatives are returned unchanged.
PatientRecord apply_temporal_cutoff(const PatientRecord& record, const CohortLabel& label);

EyeEvalFeatures extract_eval_features(const PatientRecord& record);

// Sidecar dictionary: id -> (domain, name). Glaucoma, suspect and
// treatment sets are the ids registered under those domains.
class ConceptDictionary {
 public:
  struct Entry {
    Domain domain;
    std::string name;
    bool operator==(const Entry&) const = default;
  };

  void add(std::int32_t id, Domain domain, std::string name);
  const Entry* find(std::int32_t id) const;
  std::set<std::int32_t> ids_in(Domain domain) const;
  std::set<std::int32_t> suspect_set() const { return ids_in(Domain::GlaucomaSuspectDx); }
  const std::map<std::int32_t, Entry>& entries() const { return entries_; }

  // Throws Error(Format) if glaucoma and suspect sets intersect.
  void validate() const;

  bool operator==(const ConceptDictionary&) const = default;

 private:
  std::map<std::int32_t, Entry> entries_;
};

// Fixed eye-domain concept ids shared by every generated site.
namespace eye_concepts {
inline constexpr std::array<std::int32_t, 5> kGlaucomaDx = {9001, 9002, 9003, 9004, 9005};
inline constexpr std::array<std::int32_t, 3> kGlaucomaSuspect = {9101, 9102, 9103};
// medication, SLT, trabeculectomy, tube shunt, other laser
inline constexpr std::array<std::int32_t, 5> kTreatment = {9201, 9202, 9203, 9204, 9205};
inline constexpr std::int32_t kIop = 9301;
inline constexpr std::int32_t kCdr = 9302;
}  // namespace eye_concepts

void add_eye_concepts(ConceptDictionary& dict);

}  // namespace gra::cohort
