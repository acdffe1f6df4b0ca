#pragma once

#include <optional>
#include <string>
#include <vector>

#include "riskforge/dates.hpp"
#include "riskforge/dictionary.hpp"
#include "riskforge/ehr_store.hpp"

namespace riskforge {

struct StudyWindow {
    Date index_period_start;
    Date index_period_end;
    int lookback_days = 360;
    int observation_days = 365;
};

enum class CohortGroup { ascvd_before, ascvd_after, ascvd_never };

struct CohortInstance {
    std::string patient_id;
    Date index_date; // first T2DM evidence
    int label = 0;   // 1 = ASCVD after index
    int event_or_censor_days = 0;
    bool censored = true;
    CohortGroup group = CohortGroup::ascvd_never;
};

// Exclusion waterfall, one row per criterion in application order.
struct FunnelReport {
    struct Step {
        std::string criterion;
        std::size_t excluded = 0;
        std::size_t remaining = 0;
    };
    std::vector<Step> steps;
    void write_csv(const std::string& path) const;
};

std::optional<Date> find_index_event(const EhrRepository& repo, const std::string& patient_id,
                                     const DiagnosisDictionary& dict, const StudyWindow& window);

// Encounter-level predicates used by inclusion; exposed for tests.
bool encounter_matches_t2dm(const EncounterRow& e, const DiagnosisDictionary& dict);
bool encounter_matches_ascvd(const EncounterRow& e, const DiagnosisDictionary& dict);
bool encounter_matches_exclusion(const EncounterRow& e, const DiagnosisDictionary& dict);

struct InclusionResult {
    std::vector<CohortInstance> instances; // all three groups, sorted by patient_id
    FunnelReport funnel;
};

InclusionResult apply_inclusion(const EhrRepository& repo, const DiagnosisDictionary& dict,
                                const StudyWindow& window);

struct Cohort {
    std::vector<CohortInstance> instances; // ascvd_before dropped, labels assigned
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

Cohort finalize_cohort(const EhrRepository& repo, const DiagnosisDictionary& dict,
                       std::vector<CohortInstance> instances);

} // namespace riskforge
