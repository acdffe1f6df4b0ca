#include "riskforge/pce.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace riskforge {

namespace {
const std::map<std::string, PceTerm> kTermNames = {
    {"ln_age", PceTerm::ln_age},
    {"ln_age_sq", PceTerm::ln_age_sq},
    {"ln_tc", PceTerm::ln_tc},
    {"ln_age_ln_tc", PceTerm::ln_age_ln_tc},
    {"ln_hdl", PceTerm::ln_hdl},
    {"ln_age_ln_hdl", PceTerm::ln_age_ln_hdl},
    {"ln_sbp_treated", PceTerm::ln_sbp_treated},
    {"ln_sbp_untreated", PceTerm::ln_sbp_untreated},
    {"ln_age_ln_sbp_treated", PceTerm::ln_age_ln_sbp_treated},
    {"ln_age_ln_sbp_untreated", PceTerm::ln_age_ln_sbp_untreated},
    {"smoker", PceTerm::smoker},
    {"ln_age_smoker", PceTerm::ln_age_smoker},
    {"diabetes", PceTerm::diabetes},
};
}

PceTerm parse_pce_term(const std::string& descriptor) {
    auto it = kTermNames.find(descriptor);
    if (it == kTermNames.end()) throw std::runtime_error("unknown PCE term: " + descriptor);
    return it->second;
}

std::string to_string(PceTerm term) {
    for (const auto& [name, t] : kTermNames)
        if (t == term) return name;
    return "?";
}

PceCoefficientTable PceCoefficientTable::load(const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in) throw std::runtime_error("cannot open PCE coefficient file: " + json_path);
    nlohmann::json j = nlohmann::json::parse(in);
    PceCoefficientTable table;
    for (const char* key : {"male_white", "female_white", "male_black", "female_black"}) {
        const auto& js = j.at(key);
        PceStratum s;
        for (const auto& term : js.at("terms"))
            s.terms.emplace_back(parse_pce_term(term.at("descriptor").get<std::string>()),
                                 term.at("beta").get<double>());
        s.mean_lp = js.at("mean_lp").get<double>();
        s.s0 = js.at("s0").get<double>();
        if (!(s.s0 > 0.0 && s.s0 < 1.0))
            throw std::runtime_error(std::string("baseline survival out of (0,1) for ") + key);
        table.strata[key] = std::move(s);
    }
    return table;
}

double pce_risk(const KnownFactorProfile& profile, const PceCoefficientTable& table) {
    if (!profile.complete())
        throw std::runtime_error("pce_risk: incomplete profile for " + profile.patient_id);
    if (profile.age_years <= 0 || *profile.tc <= 0 || *profile.hdl_c <= 0 || *profile.sbp <= 0)
        throw std::domain_error("pce_risk: non-positive continuous input for " + profile.patient_id);

    const std::string key = profile.gender_male ? "male_white" : "female_white";
    const PceStratum& s = table.strata.at(key);

    const double ln_age = std::log(profile.age_years);
    const double ln_tc = std::log(*profile.tc);
    const double ln_hdl = std::log(*profile.hdl_c);
    const double ln_sbp = std::log(*profile.sbp);
    const bool treated = profile.hbp_treated;
    const double smoker = *profile.smoker ? 1.0 : 0.0;

    double lp = 0.0;
    for (const auto& [term, beta] : s.terms) {
        double value = 0.0;
        switch (term) {
            case PceTerm::ln_age: value = ln_age; break;
            case PceTerm::ln_age_sq: value = ln_age * ln_age; break;
            case PceTerm::ln_tc: value = ln_tc; break;
            case PceTerm::ln_age_ln_tc: value = ln_age * ln_tc; break;
            case PceTerm::ln_hdl: value = ln_hdl; break;
            case PceTerm::ln_age_ln_hdl: value = ln_age * ln_hdl; break;
            case PceTerm::ln_sbp_treated: value = treated ? ln_sbp : 0.0; break;
            case PceTerm::ln_sbp_untreated: value = treated ? 0.0 : ln_sbp; break;
            case PceTerm::ln_age_ln_sbp_treated: value = treated ? ln_age * ln_sbp : 0.0; break;
            case PceTerm::ln_age_ln_sbp_untreated: value = treated ? 0.0 : ln_age * ln_sbp; break;
            case PceTerm::smoker: value = smoker; break;
            case PceTerm::ln_age_smoker: value = ln_age * smoker; break;
            case PceTerm::diabetes: value = 1.0; break; // cohort is diabetic by construction
        }
        lp += beta * value;
    }
    return 1.0 - std::pow(s.s0, std::exp(lp - s.mean_lp));
}

std::vector<double> score_cohort(const std::vector<KnownFactorProfile>& profiles,
                                 const PceCoefficientTable& table) {
    std::vector<double> scores;
    scores.reserve(profiles.size());
    for (const auto& p : profiles) {
        try {
            scores.push_back(pce_risk(p, table));
        } catch (const std::exception& e) {
            throw std::runtime_error("score_cohort failed at instance " + p.patient_id + ": " +
                                     e.what());
        }
    }
    return scores;
}

std::uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file for checksum: " + path);
    std::uint64_t hash = 14695981039346656037ull;
    char c;
    while (in.get(c)) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 1099511628211ull;
    }
    return hash;
}

} // namespace riskforge
