#include "gra/cohort.hpp"

#include <algorithm>

#include "gra/error.hpp"

namespace gra::cohort {

namespace {

constexpr std::array<std::pair<Domain, std::string_view>, 9> kDomainNames = {{
    {Domain::Diagnosis, "diagnosis"},
    {Domain::Medication, "medication"},
    {Domain::Lab, "lab"},
    {Domain::Vital, "vital"},
    {Domain::GlaucomaDx, "glaucoma_dx"},
    {Domain::GlaucomaSuspectDx, "glaucoma_suspect_dx"},
    {Domain::GlaucomaTreatment, "glaucoma_treatment"},
    {Domain::IntraocularPressure, "iop"},
    {Domain::CupToDiscRatio, "cdr"},
}};

constexpr std::array<std::string_view, kRaceCount> kRaceNames = {
    "nh_white", "nh_black", "nh_asian", "hispanic", "other"};

}  // namespace

std::string_view to_string(Domain d) {
  for (const auto& [domain, name] : kDomainNames) {
    if (domain == d) return name;
  }
  return "unknown";
}

Domain domain_from_string(std::string_view s) {
  for (const auto& [domain, name] : kDomainNames) {
    if (name == s) return domain;
  }
  fail(ErrorKind::Format, "unknown concept domain '" + std::string(s) + "'");
}

bool is_eye_domain(Domain d) {
  switch (d) {
    case Domain::GlaucomaDx:
    case Domain::GlaucomaSuspectDx:
    case Domain::GlaucomaTreatment:
    case Domain::IntraocularPressure:
    case Domain::CupToDiscRatio:
      return true;
    default:
      return false;
  }
}

std::string_view to_string(Sex s) { return s == Sex::Male ? "male" : "female"; }

std::string_view to_string(RaceEthnicity r) { return kRaceNames[static_cast<std::size_t>(r)]; }

Sex sex_from_string(std::string_view s) {
  if (s == "male") return Sex::Male;
  if (s == "female") return Sex::Female;
  fail(ErrorKind::Format, "unknown sex '" + std::string(s) + "'");
}

RaceEthnicity race_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kRaceNames.size(); ++i) {
    if (kRaceNames[i] == s) return static_cast<RaceEthnicity>(i);
  }
  fail(ErrorKind::Format, "unknown race/ethnicity '" + std::string(s) + "'");
}

const std::vector<std::string>& eval_feature_names() {
  static const std::vector<std::string> names = {"max_iop", "max_cdr", "any_treatment", "iop",
                                                 "cdr"};
  return names;
}

CohortLabel label_glaucoma(const PatientRecord& record, const std::set<std::int32_t>& suspect_set) {
  std::set<Date> dates;
  for (const auto& ev : record.events) {
    if (ev.code.domain == Domain::GlaucomaDx && !suspect_set.contains(ev.code.id)) {
      dates.insert(ev.date);
    }
  }
  if (dates.size() < 2) return {};
  return CohortLabel{true, *dates.begin()};
}

PatientRecord apply_temporal_cutoff(const PatientRecord& record, const CohortLabel& label) {
  if (!label.is_glaucoma || !label.first_dx_date) return record;
  const Date cutoff = *label.first_dx_date;
  PatientRecord out = record;
  std::erase_if(out.events, [&](const CodedEvent& e) { return e.date >= cutoff; });
  std::erase_if(out.measurements, [&](const MeasurementEvent& m) { return m.date >= cutoff; });
  return out;
}

EyeEvalFeatures extract_eval_features(const PatientRecord& record) {
  EyeEvalFeatures out;
  for (const auto& m : record.measurements) {
    if (m.code.domain == Domain::IntraocularPressure) {
      out.max_iop = out.max_iop ? std::max(*out.max_iop, m.value) : m.value;
    } else if (m.code.domain == Domain::CupToDiscRatio) {
      out.max_cdr = out.max_cdr ? std::max(*out.max_cdr, m.value) : m.value;
    }
  }
  out.any_treatment = std::any_of(record.events.begin(), record.events.end(), [](const auto& e) {
    return e.code.domain == Domain::GlaucomaTreatment;
  });
  return out;
}

void ConceptDictionary::add(std::int32_t id, Domain domain, std::string name) {
  auto [it, inserted] = entries_.emplace(id, Entry{domain, std::move(name)});
  if (!inserted && it->second.domain != domain) {
    fail(ErrorKind::Format, "concept " + std::to_string(id) + " registered under two domains");
  }
}

const ConceptDictionary::Entry* ConceptDictionary::find(std::int32_t id) const {
  auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : &it->second;
}

std::set<std::int32_t> ConceptDictionary::ids_in(Domain domain) const {
  std::set<std::int32_t> out;
  for (const auto& [id, entry] : entries_) {
    if (entry.domain == domain) out.insert(id);
  }
  return out;
}

void ConceptDictionary::validate() const {
  // Ids are map keys, so a code belongs to exactly one domain; glaucoma and
  // suspect sets are disjoint by construction. Check names are present.
  for (const auto& [id, entry] : entries_) {
    if (entry.name.empty()) {
      fail(ErrorKind::Format, "concept " + std::to_string(id) + " has no name");
    }
  }
}

void add_eye_concepts(ConceptDictionary& dict) {
  const std::array<std::string_view, 5> dx_names = {"primary_open_angle_glaucoma",
                                                    "angle_closure_glaucoma",
                                                    "normal_tension_glaucoma",
                                                    "secondary_glaucoma", "pigmentary_glaucoma"};
  for (std::size_t i = 0; i < eye_concepts::kGlaucomaDx.size(); ++i) {
    dict.add(eye_concepts::kGlaucomaDx[i], Domain::GlaucomaDx, std::string(dx_names[i]));
  }
  const std::array<std::string_view, 3> suspect_names = {
      "glaucoma_suspect", "ocular_hypertension_suspect", "anatomical_narrow_angle_suspect"};
  for (std::size_t i = 0; i < eye_concepts::kGlaucomaSuspect.size(); ++i) {
    dict.add(eye_concepts::kGlaucomaSuspect[i], Domain::GlaucomaSuspectDx,
             std::string(suspect_names[i]));
  }
  const std::array<std::string_view, 5> tx_names = {"glaucoma_medication",
                                                    "selective_laser_trabeculoplasty",
                                                    "trabeculectomy", "tube_shunt", "other_laser"};
  for (std::size_t i = 0; i < eye_concepts::kTreatment.size(); ++i) {
    dict.add(eye_concepts::kTreatment[i], Domain::GlaucomaTreatment, std::string(tx_names[i]));
  }
  dict.add(eye_concepts::kIop, Domain::IntraocularPressure, "intraocular_pressure");
  dict.add(eye_concepts::kCdr, Domain::CupToDiscRatio, "cup_to_disc_ratio");
}

}  // namespace gra::cohort
