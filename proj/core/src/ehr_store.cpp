#include "riskforge/ehr_store.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "riskforge/csv.hpp"

namespace riskforge {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::optional<double> parse_decimal(const std::string& s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

std::optional<bool> parse_bool(const std::string& s) {
    std::string t = lower(s);
    if (t == "1" || t == "true" || t == "yes" || t == "y") return true;
    if (t == "0" || t == "false" || t == "no" || t == "n") return false;
    return std::nullopt;
}

const std::vector<std::string>& expected_header(const std::string& table) {
    static const std::map<std::string, std::vector<std::string>> headers = {
        {"patient", {"patient_id", "gender", "birthday"}},
        {"encounter",
         {"encounter_id", "patient_id", "organization_id", "commit_time", "encounter_type",
          "icd_code", "diagnosis", "cost"}},
        {"labtest", {"encounter_id", "test_item_name", "test_value", "commit_time"}},
        {"followup", {"encounter_id", "systolic_bp", "daily_smoking", "commit_time"}},
        {"medication", {"encounter_id", "drug_name", "commit_time"}},
        {"organization", {"organization_id", "name"}},
    };
    auto it = headers.find(table);
    if (it == headers.end()) throw std::runtime_error("unknown table name: " + table);
    return it->second;
}

csv::Table read_table(const std::string& table, const std::string& path) {
    if (!std::filesystem::exists(path))
        throw std::runtime_error("missing table file for '" + table + "': " + path);
    csv::Table t = csv::read_file(path);
    if (t.header != expected_header(table)) {
        std::string got;
        for (const auto& h : t.header) got += (got.empty() ? "" : ",") + h;
        throw std::runtime_error("malformed header in " + path + ": got [" + got + "]");
    }
    return t;
}

} // namespace

Gender parse_gender(const std::string& raw) {
    std::string g = lower(raw);
    if (g == "male" || g == "m" || g == "1") return Gender::male;
    if (g == "female" || g == "f" || g == "2") return Gender::female;
    return Gender::unknown;
}

EncounterType parse_encounter_type(const std::string& raw) {
    std::string t = lower(raw);
    if (t == "outpatient") return EncounterType::outpatient;
    if (t == "inpatient") return EncounterType::inpatient;
    if (t == "followup" || t == "follow-up" || t == "follow_up") return EncounterType::followup;
    return EncounterType::other;
}

std::string to_string(Gender g) {
    switch (g) {
        case Gender::male: return "male";
        case Gender::female: return "female";
        default: return "unknown";
    }
}

std::string to_string(EncounterType t) {
    switch (t) {
        case EncounterType::outpatient: return "outpatient";
        case EncounterType::inpatient: return "inpatient";
        case EncounterType::followup: return "followup";
        default: return "other";
    }
}

std::string LoadReport::to_string() const {
    std::ostringstream out;
    for (const auto& [table, n] : rows_loaded) {
        out << table << ": " << n << " rows loaded";
        auto it = rows_skipped.find(table);
        if (it != rows_skipped.end() && it->second > 0) out << ", " << it->second << " rows skipped";
        out << '\n';
    }
    out << "dangling encounter->patient refs: " << dangling_encounter_patient_refs << '\n';
    out << "dangling child->encounter refs: " << dangling_child_encounter_refs << '\n';
    return out.str();
}

void EhrRepository::build_indexes() {
    patient_by_id_.clear();
    encounter_by_id_.clear();
    encounters_by_patient_.clear();
    labs_by_encounter_.clear();
    fus_by_encounter_.clear();
    meds_by_encounter_.clear();
    for (std::size_t i = 0; i < patients.size(); ++i) patient_by_id_[patients[i].patient_id] = i;
    for (std::size_t i = 0; i < encounters.size(); ++i) {
        encounter_by_id_[encounters[i].encounter_id] = i;
        encounters_by_patient_[encounters[i].patient_id].push_back(i);
    }
    for (std::size_t i = 0; i < lab_tests.size(); ++i)
        labs_by_encounter_[lab_tests[i].encounter_id].push_back(i);
    for (std::size_t i = 0; i < follow_ups.size(); ++i)
        fus_by_encounter_[follow_ups[i].encounter_id].push_back(i);
    for (std::size_t i = 0; i < medications.size(); ++i)
        meds_by_encounter_[medications[i].encounter_id].push_back(i);
}

const PatientRow* EhrRepository::find_patient(const std::string& patient_id) const {
    auto it = patient_by_id_.find(patient_id);
    return it == patient_by_id_.end() ? nullptr : &patients[it->second];
}

const EncounterRow* EhrRepository::find_encounter(const std::string& encounter_id) const {
    auto it = encounter_by_id_.find(encounter_id);
    return it == encounter_by_id_.end() ? nullptr : &encounters[it->second];
}

namespace {
const std::vector<std::size_t> kEmptyIndex;
const std::vector<std::size_t>& lookup(
    const std::unordered_map<std::string, std::vector<std::size_t>>& index,
    const std::string& key) {
    auto it = index.find(key);
    return it == index.end() ? kEmptyIndex : it->second;
}
} // namespace

const std::vector<std::size_t>& EhrRepository::encounters_of(const std::string& patient_id) const {
    return lookup(encounters_by_patient_, patient_id);
}
const std::vector<std::size_t>& EhrRepository::lab_tests_of_encounter(
    const std::string& encounter_id) const {
    return lookup(labs_by_encounter_, encounter_id);
}
const std::vector<std::size_t>& EhrRepository::follow_ups_of_encounter(
    const std::string& encounter_id) const {
    return lookup(fus_by_encounter_, encounter_id);
}
const std::vector<std::size_t>& EhrRepository::medications_of_encounter(
    const std::string& encounter_id) const {
    return lookup(meds_by_encounter_, encounter_id);
}

std::vector<std::string> EhrRepository::sorted_patient_ids() const {
    std::vector<std::string> ids;
    ids.reserve(patients.size());
    for (const auto& p : patients) ids.push_back(p.patient_id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

LoadResult load_repository(const std::map<std::string, std::string>& table_paths) {
    LoadResult result;
    auto path_of = [&](const std::string& table) -> std::string {
        auto it = table_paths.find(table);
        if (it == table_paths.end())
            throw std::runtime_error("table_paths missing entry for '" + table + "'");
        return it->second;
    };

    auto& repo = result.repo;
    auto& report = result.report;

    {
        csv::Table t = read_table("patient", path_of("patient"));
        std::unordered_set<std::string> seen;
        for (const auto& row : t.rows) {
            if (row.size() != 3) { ++report.rows_skipped["patient"]; continue; }
            auto bday = Date::parse(row[2]);
            if (row[0].empty() || !bday || !seen.insert(row[0]).second) {
                ++report.rows_skipped["patient"];
                continue;
            }
            repo.patients.push_back({row[0], parse_gender(row[1]), *bday});
        }
        report.rows_loaded["patient"] = repo.patients.size();
    }
    {
        csv::Table t = read_table("encounter", path_of("encounter"));
        std::unordered_set<std::string> seen;
        for (const auto& row : t.rows) {
            if (row.size() != 8) { ++report.rows_skipped["encounter"]; continue; }
            auto when = Date::parse(row[3]);
            if (row[0].empty() || row[1].empty() || !when || !seen.insert(row[0]).second) {
                ++report.rows_skipped["encounter"];
                continue;
            }
            EncounterRow e;
            e.encounter_id = row[0];
            e.patient_id = row[1];
            e.organization_id = row[2];
            e.commit_time = *when;
            e.encounter_type = parse_encounter_type(row[4]);
            if (!row[5].empty()) e.icd_code = row[5];
            if (!row[6].empty()) e.diagnosis = row[6];
            if (auto c = parse_decimal(row[7]); c && *c >= 0) e.cost = c;
            repo.encounters.push_back(std::move(e));
        }
        report.rows_loaded["encounter"] = repo.encounters.size();
    }
    {
        csv::Table t = read_table("labtest", path_of("labtest"));
        for (const auto& row : t.rows) {
            if (row.size() != 4) { ++report.rows_skipped["labtest"]; continue; }
            auto value = parse_decimal(row[2]);
            auto when = Date::parse(row[3]);
            if (row[0].empty() || row[1].empty() || !value || !when) {
                ++report.rows_skipped["labtest"];
                continue;
            }
            repo.lab_tests.push_back({row[0], row[1], *value, *when});
        }
        report.rows_loaded["labtest"] = repo.lab_tests.size();
    }
    {
        csv::Table t = read_table("followup", path_of("followup"));
        for (const auto& row : t.rows) {
            if (row.size() != 4) { ++report.rows_skipped["followup"]; continue; }
            auto when = Date::parse(row[3]);
            if (row[0].empty() || !when) { ++report.rows_skipped["followup"]; continue; }
            FollowUpRow f;
            f.encounter_id = row[0];
            if (!row[1].empty()) {
                auto sbp = parse_decimal(row[1]);
                if (!sbp || *sbp <= 0 || *sbp >= 400) {
                    ++report.rows_skipped["followup"];
                    continue;
                }
                f.systolic_bp = sbp;
            }
            f.daily_smoking = parse_bool(row[2]);
            f.commit_time = *when;
            repo.follow_ups.push_back(std::move(f));
        }
        report.rows_loaded["followup"] = repo.follow_ups.size();
    }
    {
        csv::Table t = read_table("medication", path_of("medication"));
        for (const auto& row : t.rows) {
            if (row.size() != 3) { ++report.rows_skipped["medication"]; continue; }
            auto when = Date::parse(row[2]);
            if (row[0].empty() || row[1].empty() || !when) {
                ++report.rows_skipped["medication"];
                continue;
            }
            repo.medications.push_back({row[0], row[1], *when});
        }
        report.rows_loaded["medication"] = repo.medications.size();
    }
    {
        csv::Table t = read_table("organization", path_of("organization"));
        for (const auto& row : t.rows) {
            if (row.size() != 2 || row[0].empty()) {
                ++report.rows_skipped["organization"];
                continue;
            }
            repo.organizations[row[0]] = row[1];
        }
        report.rows_loaded["organization"] = repo.organizations.size();
    }

    repo.build_indexes();

    // Dangling foreign keys are kept in the row collections; audit only.
    for (const auto& e : repo.encounters)
        if (!repo.find_patient(e.patient_id)) ++report.dangling_encounter_patient_refs;
    auto count_dangling = [&](const auto& rows) {
        std::size_t n = 0;
        for (const auto& r : rows)
            if (!repo.find_encounter(r.encounter_id)) ++n;
        return n;
    };
    report.dangling_child_encounter_refs = count_dangling(repo.lab_tests) +
                                           count_dangling(repo.follow_ups) +
                                           count_dangling(repo.medications);
    return result;
}

void export_repository(const EhrRepository& repo, const std::string& directory) {
    namespace fs = std::filesystem;
    fs::create_directories(directory);
    auto fmt = [](const std::optional<double>& v) {
        if (!v) return std::string{};
        std::ostringstream s;
        s.precision(17);
        s << *v;
        return s.str();
    };

    csv::Table patient;
    patient.header = {"patient_id", "gender", "birthday"};
    for (const auto& p : repo.patients)
        patient.rows.push_back({p.patient_id, to_string(p.gender), p.birthday.to_string()});
    csv::write_file((fs::path(directory) / "patient.csv").string(), patient);

    csv::Table encounter;
    encounter.header = {"encounter_id", "patient_id", "organization_id", "commit_time",
                        "encounter_type", "icd_code", "diagnosis", "cost"};
    for (const auto& e : repo.encounters)
        encounter.rows.push_back({e.encounter_id, e.patient_id, e.organization_id,
                                  e.commit_time.to_string(), to_string(e.encounter_type),
                                  e.icd_code.value_or(""), e.diagnosis.value_or(""), fmt(e.cost)});
    csv::write_file((fs::path(directory) / "encounter.csv").string(), encounter);

    csv::Table labtest;
    labtest.header = {"encounter_id", "test_item_name", "test_value", "commit_time"};
    for (const auto& l : repo.lab_tests)
        labtest.rows.push_back(
            {l.encounter_id, l.test_item_name, fmt(l.test_value), l.commit_time.to_string()});
    csv::write_file((fs::path(directory) / "labtest.csv").string(), labtest);

    csv::Table followup;
    followup.header = {"encounter_id", "systolic_bp", "daily_smoking", "commit_time"};
    for (const auto& f : repo.follow_ups)
        followup.rows.push_back({f.encounter_id, fmt(f.systolic_bp),
                                 f.daily_smoking ? (*f.daily_smoking ? "1" : "0") : "",
                                 f.commit_time.to_string()});
    csv::write_file((fs::path(directory) / "followup.csv").string(), followup);

    csv::Table medication;
    medication.header = {"encounter_id", "drug_name", "commit_time"};
    for (const auto& m : repo.medications)
        medication.rows.push_back({m.encounter_id, m.drug_name, m.commit_time.to_string()});
    csv::write_file((fs::path(directory) / "medication.csv").string(), medication);

    csv::Table organization;
    organization.header = {"organization_id", "name"};
    std::vector<std::pair<std::string, std::string>> orgs(repo.organizations.begin(),
                                                          repo.organizations.end());
    std::sort(orgs.begin(), orgs.end());
    for (const auto& [id, name] : orgs) organization.rows.push_back({id, name});
    csv::write_file((fs::path(directory) / "organization.csv").string(), organization);
}

IcdAudit audit_icd_validity(const EhrRepository& repo,
                            const std::unordered_set<std::string>& icd_catalog) {
    IcdAudit audit;
    if (repo.encounters.empty()) return audit; // defined stays false, not 0/0
    std::size_t nulls = 0, nonnull = 0, valid = 0;
    for (const auto& e : repo.encounters) {
        if (!e.icd_code) {
            ++nulls;
            continue;
        }
        ++nonnull;
        if (icd_catalog.empty() ? looks_like_icd10(*e.icd_code) : icd_catalog.contains(*e.icd_code))
            ++valid;
    }
    audit.defined = true;
    audit.null_rate = static_cast<double>(nulls) / static_cast<double>(repo.encounters.size());
    audit.valid_rate_among_nonnull =
        nonnull == 0 ? 0.0 : static_cast<double>(valid) / static_cast<double>(nonnull);
    return audit;
}

bool looks_like_icd10(const std::string& code) {
    if (code.size() < 3) return false;
    if (!std::isupper(static_cast<unsigned char>(code[0]))) return false;
    if (!std::isdigit(static_cast<unsigned char>(code[1])) ||
        !std::isdigit(static_cast<unsigned char>(code[2])))
        return false;
    if (code.size() == 3) return true;
    if (code[3] != '.') return false;
    if (code.size() == 4 || code.size() > 8) return false;
    for (std::size_t i = 4; i < code.size(); ++i)
        if (!std::isalnum(static_cast<unsigned char>(code[i]))) return false;
    return true;
}

} // namespace riskforge
