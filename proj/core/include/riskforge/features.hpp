#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "riskforge/cohort.hpp"
#include "riskforge/dictionary.hpp"
#include "riskforge/ehr_store.hpp"

namespace riskforge {

struct KnownFactorProfile {
    std::string patient_id;
    int gender_male = 0; // 1 = male
    double age_years = 0.0;
    std::optional<double> tc;    // mg/dL
    std::optional<double> hdl_c; // mg/dL
    std::optional<double> sbp;   // mmHg
    bool hbp_treated = false;    // never missing
    std::optional<bool> smoker;
    // race is fixed "white_or_other" and diabetes fixed true for this cohort

    bool complete() const { return tc && hdl_c && sbp && smoker.has_value(); }
};

struct FeatureMatrix {
    std::size_t n = 0, m = 0;
    std::vector<double> values; // row-major n*m
    std::vector<std::string> feature_names;
    std::vector<std::string> instance_ids;

    double& at(std::size_t i, std::size_t j) { return values[i * m + j]; }
    double at(std::size_t i, std::size_t j) const { return values[i * m + j]; }
    std::vector<double> column(std::size_t j) const;
    void append_columns(const FeatureMatrix& other); // same instance order required
    void write_csv(const std::string& path) const;
};

using LabelVector = std::vector<int>;

KnownFactorProfile extract_known_factors(const EhrRepository& repo, const CohortInstance& instance,
                                         const DiagnosisDictionary& dict,
                                         int observation_days = 365);

struct MissingnessReport {
    std::size_t total = 0;
    std::map<std::string, std::size_t> present_counts; // per factor
    std::size_t complete = 0;
};

// Keeps indices (into the input vector) of profiles with all factors present.
std::vector<std::size_t> complete_case_filter(const std::vector<KnownFactorProfile>& profiles,
                                              MissingnessReport* report = nullptr);

// The 7 PCE factors as numeric columns, in fixed order.
FeatureMatrix known_factor_matrix(const std::vector<KnownFactorProfile>& profiles);

enum class IcdFeatureMode { chapter22, threedigit };

struct ChapterRange {
    int chapter = 0;
    std::string block_start; // e.g. "E00"
    std::string block_end;   // e.g. "E90"
};

std::vector<ChapterRange> default_chapter_map();
std::vector<ChapterRange> load_chapter_map(const std::string& csv_path);
void write_chapter_map(const std::vector<ChapterRange>& map, const std::string& csv_path);
// 0 when the code falls in no block.
int chapter_of(const std::string& three_digit_code, const std::vector<ChapterRange>& map);

FeatureMatrix build_icd_features(const EhrRepository& repo,
                                 const std::vector<CohortInstance>& instances, IcdFeatureMode mode,
                                 int observation_days, const std::vector<ChapterRange>& chapter_map);

double chi2_statistic_2x2(double n11, double n10, double n01, double n00);
// Column-wise chi-squared against binary labels; returns selected column indices
// (size top_k, statistic descending, ties lexicographic by feature name).
std::vector<std::size_t> chi2_select_indices(const FeatureMatrix& features,
                                             const LabelVector& labels, std::size_t top_k);
FeatureMatrix select_columns(const FeatureMatrix& features, const std::vector<std::size_t>& cols);

struct Standardization {
    std::vector<double> mean;
    std::vector<double> stddev; // population; 0 marks a constant column
    void save_json(const std::string& path) const;
};

// Z-scores both matrices with train statistics; constant train columns map to 0.
Standardization standardize(FeatureMatrix& train, FeatureMatrix* test = nullptr);

} // namespace riskforge
