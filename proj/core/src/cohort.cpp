#include "riskforge/cohort.hpp"

#include <algorithm>
#include <iostream>

#include "riskforge/csv.hpp"

namespace riskforge {

namespace {

bool icd_has_prefix(const std::optional<std::string>& code,
                    const std::vector<std::string>& prefixes) {
    if (!code) return false;
    for (const auto& p : prefixes)
        if (code->rfind(p, 0) == 0) return true;
    return false;
}

} // namespace

bool encounter_matches_t2dm(const EncounterRow& e, const DiagnosisDictionary& dict) {
    if (e.diagnosis && match_diagnosis(*e.diagnosis, dict.t2dm_patterns)) return true;
    return icd_has_prefix(e.icd_code, dict.t2dm_icd_prefixes);
}

bool encounter_matches_ascvd(const EncounterRow& e, const DiagnosisDictionary& dict) {
    return e.diagnosis && match_diagnosis(*e.diagnosis, dict.ascvd_patterns);
}

bool encounter_matches_exclusion(const EncounterRow& e, const DiagnosisDictionary& dict) {
    if (e.diagnosis && match_diagnosis(*e.diagnosis, dict.exclusion_patterns)) return true;
    return icd_has_prefix(e.icd_code, dict.exclusion_icd_prefixes);
}

std::optional<Date> find_index_event(const EhrRepository& repo, const std::string& patient_id,
                                     const DiagnosisDictionary& dict, const StudyWindow& window) {
    std::optional<Date> earliest;
    auto consider = [&](Date when) {
        if (when < window.index_period_start || when > window.index_period_end) return;
        if (!earliest || when < *earliest) earliest = when;
    };
    for (std::size_t idx : repo.encounters_of(patient_id)) {
        const EncounterRow& e = repo.encounters[idx];
        if (encounter_matches_t2dm(e, dict)) consider(e.commit_time);
        for (std::size_t m : repo.medications_of_encounter(e.encounter_id)) {
            const MedicationRow& med = repo.medications[m];
            auto it = dict.drug_class_map.find(med.drug_name);
            if (it != dict.drug_class_map.end() && dict.t2dm_drug_classes.contains(it->second))
                consider(med.commit_time);
        }
    }
    return earliest;
}

void FunnelReport::write_csv(const std::string& path) const {
    csv::Table t;
    t.header = {"criterion", "excluded_count", "remaining_count"};
    for (const auto& s : steps)
        t.rows.push_back({s.criterion, std::to_string(s.excluded), std::to_string(s.remaining)});
    csv::write_file(path, t);
}

InclusionResult apply_inclusion(const EhrRepository& repo, const DiagnosisDictionary& dict,
                                const StudyWindow& window) {
    InclusionResult result;
    std::vector<std::string> ids = repo.sorted_patient_ids();

    struct Tally {
        std::string name;
        std::size_t excluded = 0;
    };
    std::vector<Tally> tallies = {
        {"no index event"}, {"no visit in lookback window"}, {"no T2DM outpatient visit after index"},
        {"under 18"},       {"unknown gender"},              {"gestational or type 1 diabetes"},
    };

    std::size_t considered = ids.size();
    for (const auto& pid : ids) {
        const PatientRow* patient = repo.find_patient(pid);
        auto fail = [&](std::size_t step) { ++tallies[step].excluded; };

        auto index_date = find_index_event(repo, pid, dict, window);
        if (!index_date) { fail(0); continue; }

        const auto& enc_idx = repo.encounters_of(pid);
        // >=1 encounter of any type within lookback_days before the index period
        bool lookback_visit = false;
        for (std::size_t idx : enc_idx) {
            Date when = repo.encounters[idx].commit_time;
            int gap = days_between(when, window.index_period_start);
            if (gap > 0 && gap <= window.lookback_days) { lookback_visit = true; break; }
        }
        if (!lookback_visit) { fail(1); continue; }

        // >=1 T2DM outpatient visit on/after the index event
        bool t2dm_outpatient = false;
        for (std::size_t idx : enc_idx) {
            const EncounterRow& e = repo.encounters[idx];
            if (e.encounter_type == EncounterType::outpatient && e.commit_time >= *index_date &&
                encounter_matches_t2dm(e, dict)) {
                t2dm_outpatient = true;
                break;
            }
        }
        if (!t2dm_outpatient) { fail(2); continue; }

        double age_years = days_between(patient->birthday, *index_date) / 365.0;
        if (age_years < 18.0) { fail(3); continue; }
        if (patient->gender == Gender::unknown) { fail(4); continue; }

        bool excluded_dx = false;
        for (std::size_t idx : enc_idx)
            if (encounter_matches_exclusion(repo.encounters[idx], dict)) { excluded_dx = true; break; }
        if (excluded_dx) { fail(5); continue; }

        CohortInstance inst;
        inst.patient_id = pid;
        inst.index_date = *index_date;

        std::optional<Date> first_ascvd;
        for (std::size_t idx : enc_idx) {
            const EncounterRow& e = repo.encounters[idx];
            if (encounter_matches_ascvd(e, dict) && (!first_ascvd || e.commit_time < *first_ascvd))
                first_ascvd = e.commit_time;
        }
        if (!first_ascvd) inst.group = CohortGroup::ascvd_never;
        else if (*first_ascvd < *index_date) inst.group = CohortGroup::ascvd_before;
        else inst.group = CohortGroup::ascvd_after;

        result.instances.push_back(std::move(inst));
    }

    std::size_t remaining = considered;
    for (const auto& t : tallies) {
        remaining -= t.excluded;
        result.funnel.steps.push_back({t.name, t.excluded, remaining});
    }
    return result;
}

Cohort finalize_cohort(const EhrRepository& repo, const DiagnosisDictionary& dict,
                       std::vector<CohortInstance> instances) {
    Cohort cohort;
    for (auto& inst : instances) {
        if (inst.group == CohortGroup::ascvd_before) continue;
        const auto& enc_idx = repo.encounters_of(inst.patient_id);
        if (inst.group == CohortGroup::ascvd_after) {
            std::optional<Date> first_ascvd;
            for (std::size_t idx : enc_idx) {
                const EncounterRow& e = repo.encounters[idx];
                if (encounter_matches_ascvd(e, dict) &&
                    (!first_ascvd || e.commit_time < *first_ascvd))
                    first_ascvd = e.commit_time;
            }
            inst.label = 1;
            inst.censored = false;
            inst.event_or_censor_days = days_between(inst.index_date, *first_ascvd);
            ++cohort.positives;
        } else {
            // censor at the last observed encounter, not the study end
            Date last = inst.index_date;
            for (std::size_t idx : enc_idx)
                if (repo.encounters[idx].commit_time > last) last = repo.encounters[idx].commit_time;
            inst.label = 0;
            inst.censored = true;
            inst.event_or_censor_days = days_between(inst.index_date, last);
            ++cohort.negatives;
        }
        cohort.instances.push_back(std::move(inst));
    }
    if (cohort.positives == 0 || cohort.negatives == 0)
        std::cerr << "warning: cohort has an empty class (positives=" << cohort.positives
                  << ", negatives=" << cohort.negatives << "); downstream AUC undefined\n";
    return cohort;
}

} // namespace riskforge
