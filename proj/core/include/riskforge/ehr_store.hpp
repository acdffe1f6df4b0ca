#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "riskforge/dates.hpp"

namespace riskforge {

enum class Gender { male, female, unknown };
enum class EncounterType { outpatient, inpatient, followup, other };

Gender parse_gender(const std::string& raw);
EncounterType parse_encounter_type(const std::string& raw);
std::string to_string(Gender g);
std::string to_string(EncounterType t);

struct PatientRow {
    std::string patient_id;
    Gender gender = Gender::unknown;
    Date birthday;
};

struct EncounterRow {
    std::string encounter_id;
    std::string patient_id;
    std::string organization_id;
    Date commit_time;
    EncounterType encounter_type = EncounterType::other;
    std::optional<std::string> icd_code;
    std::optional<std::string> diagnosis;
    std::optional<double> cost;
};

struct LabTestRow {
    std::string encounter_id;
    std::string test_item_name;
    double test_value = 0.0;
    Date commit_time;
};

struct FollowUpRow {
    std::string encounter_id;
    std::optional<double> systolic_bp;
    std::optional<bool> daily_smoking;
    Date commit_time;
};

struct MedicationRow {
    std::string encounter_id;
    std::string drug_name;
    Date commit_time;
};

// Per-table parse outcome plus the foreign-key audit.
struct LoadReport {
    std::map<std::string, std::size_t> rows_loaded;
    std::map<std::string, std::size_t> rows_skipped;
    std::size_t dangling_encounter_patient_refs = 0;
    std::size_t dangling_child_encounter_refs = 0;
    std::string to_string() const;
};

struct IcdAudit {
    bool defined = false; // false when the Encounter table is empty
    double null_rate = 0.0;
    double valid_rate_among_nonnull = 0.0;
};

// Immutable once built; read-only queries are thread-safe.
class EhrRepository {
public:
    std::vector<PatientRow> patients;
    std::vector<EncounterRow> encounters;
    std::vector<LabTestRow> lab_tests;
    std::vector<FollowUpRow> follow_ups;
    std::vector<MedicationRow> medications;
    std::unordered_map<std::string, std::string> organizations;

    void build_indexes();

    const PatientRow* find_patient(const std::string& patient_id) const;
    // Indexes hold positions into the row vectors above.
    const std::vector<std::size_t>& encounters_of(const std::string& patient_id) const;
    const std::vector<std::size_t>& lab_tests_of_encounter(const std::string& encounter_id) const;
    const std::vector<std::size_t>& follow_ups_of_encounter(const std::string& encounter_id) const;
    const std::vector<std::size_t>& medications_of_encounter(const std::string& encounter_id) const;
    const EncounterRow* find_encounter(const std::string& encounter_id) const;

    std::vector<std::string> sorted_patient_ids() const;

private:
    std::unordered_map<std::string, std::size_t> patient_by_id_;
    std::unordered_map<std::string, std::size_t> encounter_by_id_;
    std::unordered_map<std::string, std::vector<std::size_t>> encounters_by_patient_;
    std::unordered_map<std::string, std::vector<std::size_t>> labs_by_encounter_;
    std::unordered_map<std::string, std::vector<std::size_t>> fus_by_encounter_;
    std::unordered_map<std::string, std::vector<std::size_t>> meds_by_encounter_;
};

struct LoadResult {
    EhrRepository repo;
    LoadReport report;
};

// table_paths keys: patient, encounter, labtest, followup, medication, organization.
// Missing file or malformed header throws; malformed rows are skipped and counted.
LoadResult load_repository(const std::map<std::string, std::string>& table_paths);

// Writes the six tables back out with canonical headers.
void export_repository(const EhrRepository& repo, const std::string& directory);

IcdAudit audit_icd_validity(const EhrRepository& repo,
                            const std::unordered_set<std::string>& icd_catalog);

// Structural ICD-10 well-formedness: letter + 2 digits, optional ".xxx" suffix.
bool looks_like_icd10(const std::string& code);

} // namespace riskforge
