#include "riskforge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include <json.hpp>

#include "riskforge/csv.hpp"
#include "riskforge/dates.hpp"

namespace riskforge {

namespace {

struct PlantedCode {
    const char* code;
    double effect;
};

// Effect weights are the generator's ground truth, not epidemiology.
constexpr PlantedCode kCodePool[] = {
    {"I10", 0.8}, {"E78", 0.7},  {"H81", 0.35}, {"G47", 0.3}, {"J06", 0.25}, {"K29", 0.2},
    {"M54", 0.15}, {"J40", 0.1}, {"R53", 0.05}, {"M25", 0.05}, {"J31", 0.0}, {"H10", 0.0},
};
constexpr double kCodePrevalence = 0.2;

struct Draft {
    std::string patient_id;
    bool male = false;
    double age = 0.0;
    Date index_date;
    double tc = 0, hdl = 0, sbp = 0;
    bool smoker = false, treated = false;
    std::vector<int> codes; // indexes into kCodePool
    double pce = 0.0;
    double code_effect = 0.0;
    double noise = 0.0;
    double true_prob = 0.0;
    bool label = false;
    int lookback_gap = 0, factor_gap = 0, med_gap = 0, event_gap = 0, final_gap = 0;
};

double logit(double p) { return std::log(p / (1.0 - p)); }
double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

} // namespace

SynthSummary generate_synthetic(const SynthSpec& spec, const PceCoefficientTable& pce_table,
                                const std::string& output_dir) {
    namespace fs = std::filesystem;
    if (spec.n_patients < 10) throw std::runtime_error("generate_synthetic: n_patients < 10");
    fs::create_directories(output_dir);

    const Date period_start(2012, 8, 1);
    const Date period_end(2016, 3, 31);
    const int period_days = days_between(period_start, period_end);

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<Draft> drafts(spec.n_patients);
    for (std::size_t i = 0; i < spec.n_patients; ++i) {
        Draft& d = drafts[i];
        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "P%06zu", i + 1);
        d.patient_id = idbuf;
        d.male = unit(rng) < 0.5;
        d.age = 40.0 + unit(rng) * 39.0;
        d.index_date = period_start.add_days(static_cast<int>(unit(rng) * period_days));
        d.tc = std::max(90.0, 200.0 + 35.0 * normal(rng));
        d.hdl = std::max(20.0, 50.0 + 12.0 * normal(rng));
        d.sbp = std::clamp(130.0 + 18.0 * normal(rng), 85.0, 220.0);
        d.smoker = unit(rng) < 0.3;
        d.treated = unit(rng) < 0.4;
        for (int c = 0; c < static_cast<int>(std::size(kCodePool)); ++c)
            if (unit(rng) < kCodePrevalence) {
                d.codes.push_back(c);
                d.code_effect += kCodePool[c].effect;
            }
        d.noise = spec.noise_sd * normal(rng);
        d.lookback_gap = 1 + static_cast<int>(unit(rng) * 359.0);
        d.factor_gap = static_cast<int>(unit(rng) * 365.0);
        d.med_gap = static_cast<int>(unit(rng) * 365.0);
        d.event_gap = 30 + static_cast<int>(unit(rng) * 570.0);
        d.final_gap = 650 + static_cast<int>(unit(rng) * 350.0);

        KnownFactorProfile profile;
        profile.patient_id = d.patient_id;
        profile.gender_male = d.male ? 1 : 0;
        profile.age_years = d.age;
        profile.tc = d.tc;
        profile.hdl_c = d.hdl;
        profile.sbp = d.sbp;
        profile.hbp_treated = d.treated;
        profile.smoker = d.smoker;
        d.pce = pce_risk(profile, pce_table);
    }

    // standardize the two signals across the cohort before mixing
    auto standardized = [&](auto getter) {
        std::vector<double> v(spec.n_patients);
        double mean = 0;
        for (std::size_t i = 0; i < spec.n_patients; ++i) mean += (v[i] = getter(drafts[i]));
        mean /= static_cast<double>(spec.n_patients);
        double var = 0;
        for (double x : v) var += (x - mean) * (x - mean);
        double sd = std::sqrt(var / static_cast<double>(spec.n_patients));
        for (double& x : v) x = sd == 0.0 ? 0.0 : (x - mean) / sd;
        return v;
    };
    std::vector<double> z_pce = standardized([](const Draft& d) { return logit(d.pce); });
    std::vector<double> z_code = standardized([](const Draft& d) { return d.code_effect; });

    double intercept = logit(std::clamp(spec.event_rate, 0.01, 0.99));
    SynthSummary summary;
    summary.n_patients = spec.n_patients;
    for (std::size_t i = 0; i < spec.n_patients; ++i) {
        Draft& d = drafts[i];
        double score = spec.knowledge_signal_strength * z_pce[i] +
                       spec.data_signal_strength * z_code[i] + d.noise;
        d.true_prob = sigmoid(intercept + score);
        d.label = unit(rng) < d.true_prob;
        if (d.label) ++summary.n_events;
    }
    if (summary.n_events == 0)
        std::fprintf(stderr, "warning: synthetic cohort has no events (event_rate=%g, n=%zu)\n",
                     spec.event_rate, spec.n_patients);

    auto miss = [&](const char* factor) {
        auto it = spec.missingness.find(factor);
        double rate = it == spec.missingness.end() ? 0.0 : it->second;
        return rate > 0.0 && unit(rng) < rate;
    };

    csv::Table patient{{"patient_id", "gender", "birthday"}, {}};
    csv::Table encounter{{"encounter_id", "patient_id", "organization_id", "commit_time",
                          "encounter_type", "icd_code", "diagnosis", "cost"},
                         {}};
    csv::Table labtest{{"encounter_id", "test_item_name", "test_value", "commit_time"}, {}};
    csv::Table followup{{"encounter_id", "systolic_bp", "daily_smoking", "commit_time"}, {}};
    csv::Table medication{{"encounter_id", "drug_name", "commit_time"}, {}};
    csv::Table organization{{"organization_id", "name"}, {{"O1", "Synthetic General Hospital"}}};

    long next_encounter = 1;
    auto add_encounter = [&](const std::string& pid, Date when, const char* type,
                             const std::string& icd, const std::string& dx) {
        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "E%08ld", next_encounter++);
        encounter.rows.push_back({idbuf, pid, "O1", when.to_string(), type, icd, dx, ""});
        return std::string(idbuf);
    };
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", v);
        return std::string(buf);
    };

    for (const Draft& d : drafts) {
        Date birthday = d.index_date.add_days(-static_cast<int>(std::lround(d.age * 365.0)));
        patient.rows.push_back({d.patient_id, d.male ? "male" : "female", birthday.to_string()});

        add_encounter(d.patient_id, period_start.add_days(-d.lookback_gap), "other", "",
                      "routine visit");
        add_encounter(d.patient_id, d.index_date, "outpatient", "E11.901",
                      "type 2 diabetes mellitus");

        Date factor_when = d.index_date.add_days(-d.factor_gap);
        std::string factor_enc =
            add_encounter(d.patient_id, factor_when, "followup", "", "chronic disease followup");
        bool miss_tc = miss("tc"), miss_hdl = miss("hdl_c");
        bool miss_sbp = miss("sbp"), miss_smoker = miss("smoker");
        if (!miss_tc)
            labtest.rows.push_back({factor_enc, "tc", fmt(d.tc), factor_when.to_string()});
        if (!miss_hdl)
            labtest.rows.push_back({factor_enc, "hdl-c", fmt(d.hdl), factor_when.to_string()});
        followup.rows.push_back({factor_enc, miss_sbp ? "" : fmt(d.sbp),
                                 miss_smoker ? "" : (d.smoker ? "1" : "0"),
                                 factor_when.to_string()});
        if (d.treated) {
            Date med_when = d.index_date.add_days(-d.med_gap);
            std::string med_enc =
                add_encounter(d.patient_id, med_when, "followup", "", "medication refill");
            medication.rows.push_back({med_enc, "amlodipine", med_when.to_string()});
        }
        for (int c : d.codes) {
            Date when = d.index_date.add_days(-((d.factor_gap + 37 * (c + 1)) % 365));
            add_encounter(d.patient_id, when, "outpatient", std::string(kCodePool[c].code) + ".0",
                          "");
        }
        if (d.label)
            add_encounter(d.patient_id, d.index_date.add_days(d.event_gap), "inpatient", "I21.0",
                          "acute myocardial infarction");
        add_encounter(d.patient_id, d.index_date.add_days(d.final_gap), "outpatient", "",
                      "routine visit");
    }

    csv::write_file((fs::path(output_dir) / "patient.csv").string(), patient);
    csv::write_file((fs::path(output_dir) / "encounter.csv").string(), encounter);
    csv::write_file((fs::path(output_dir) / "labtest.csv").string(), labtest);
    csv::write_file((fs::path(output_dir) / "followup.csv").string(), followup);
    csv::write_file((fs::path(output_dir) / "medication.csv").string(), medication);
    csv::write_file((fs::path(output_dir) / "organization.csv").string(), organization);

    nlohmann::json truth;
    for (const Draft& d : drafts)
        truth[d.patient_id] = {{"true_prob", d.true_prob},
                               {"label", d.label ? 1 : 0},
                               {"pce_risk", d.pce}};
    std::ofstream out(fs::path(output_dir) / "ground_truth.json");
    out << truth.dump(2) << '\n';
    return summary;
}

} // namespace riskforge
