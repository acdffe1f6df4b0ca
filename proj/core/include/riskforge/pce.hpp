#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "riskforge/features.hpp"

namespace riskforge {

// Term grammar over KnownFactorProfile fields. sbp terms are split by
// treatment status: a treated term contributes 0 for untreated profiles
// and vice versa.
enum class PceTerm {
    ln_age,
    ln_age_sq,
    ln_tc,
    ln_age_ln_tc,
    ln_hdl,
    ln_age_ln_hdl,
    ln_sbp_treated,
    ln_sbp_untreated,
    ln_age_ln_sbp_treated,
    ln_age_ln_sbp_untreated,
    smoker,
    ln_age_smoker,
    diabetes,
};

PceTerm parse_pce_term(const std::string& descriptor);
std::string to_string(PceTerm term);

struct PceStratum {
    std::vector<std::pair<PceTerm, double>> terms;
    double mean_lp = 0.0;
    double s0 = 0.0; // baseline survival, in (0,1)
};

struct PceCoefficientTable {
    // keys: male_white, female_white, male_black, female_black
    std::map<std::string, PceStratum> strata;
    static PceCoefficientTable load(const std::string& json_path);
};

// 10-year ASCVD risk: 1 - s0 ^ exp(L - mean_lp). Race is fixed to
// "white or other" for this cohort, so the stratum is chosen by gender.
double pce_risk(const KnownFactorProfile& profile, const PceCoefficientTable& table);

// element-wise pce_risk over complete profiles; k=1 knowledge score vector
std::vector<double> score_cohort(const std::vector<KnownFactorProfile>& profiles,
                                 const PceCoefficientTable& table);

// FNV-1a over file bytes, used to pin the shipped coefficient file.
std::uint64_t fnv1a_file(const std::string& path);

} // namespace riskforge
