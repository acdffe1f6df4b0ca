#include "riskforge/dictionary.hpp"

#include <cctype>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace riskforge {

namespace {

using nlohmann::json;

std::vector<Pattern> parse_patterns(const json& arr) {
    std::vector<Pattern> out;
    for (const auto& item : arr) {
        Pattern p;
        if (item.is_string()) {
            p.text = item.get<std::string>();
        } else {
            p.text = item.at("pattern").get<std::string>();
            if (item.contains("mode")) {
                std::string mode = item["mode"].get<std::string>();
                if (mode == "substring") p.mode = MatchMode::substring;
                else if (mode == "normalized-substring") p.mode = MatchMode::normalized_substring;
                else throw std::runtime_error("unknown match mode: " + mode);
            }
        }
        out.push_back(std::move(p));
    }
    return out;
}

} // namespace

std::string normalize_text(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    for (unsigned char c : text) {
        if (std::isalnum(c)) out += static_cast<char>(std::tolower(c));
        // whitespace and punctuation dropped; multi-byte text passes through
        else if (c >= 0x80) out += static_cast<char>(c);
    }
    return out;
}

bool match_diagnosis(const std::string& text, const std::vector<Pattern>& patterns) {
    if (text.empty()) return false;
    std::string normalized; // computed lazily
    bool have_normalized = false;
    for (const auto& p : patterns) {
        if (p.text.empty()) continue;
        if (p.mode == MatchMode::substring) {
            if (text.find(p.text) != std::string::npos) return true;
        } else {
            if (!have_normalized) {
                normalized = normalize_text(text);
                have_normalized = true;
            }
            if (normalized.find(normalize_text(p.text)) != std::string::npos) return true;
        }
    }
    return false;
}

DiagnosisDictionary DiagnosisDictionary::load(const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in) throw std::runtime_error("cannot open dictionary file: " + json_path);
    json j = json::parse(in);

    DiagnosisDictionary d;
    d.ascvd_patterns = parse_patterns(j.at("ascvd_patterns"));
    d.t2dm_patterns = parse_patterns(j.at("t2dm_patterns"));
    for (const auto& c : j.at("t2dm_drug_classes")) d.t2dm_drug_classes.insert(c.get<std::string>());
    for (auto& [drug, cls] : j.at("drug_class_map").items())
        d.drug_class_map[drug] = cls.get<std::string>();
    if (j.contains("exclusion_patterns")) d.exclusion_patterns = parse_patterns(j["exclusion_patterns"]);
    if (j.contains("t2dm_icd_prefixes")) {
        d.t2dm_icd_prefixes.clear();
        for (const auto& p : j["t2dm_icd_prefixes"]) d.t2dm_icd_prefixes.push_back(p.get<std::string>());
    }
    if (j.contains("exclusion_icd_prefixes")) {
        d.exclusion_icd_prefixes.clear();
        for (const auto& p : j["exclusion_icd_prefixes"])
            d.exclusion_icd_prefixes.push_back(p.get<std::string>());
    }
    if (j.contains("antihypertensive_classes"))
        for (const auto& c : j["antihypertensive_classes"])
            d.antihypertensive_classes.insert(c.get<std::string>());
    if (j.contains("tc_item_names"))
        for (const auto& c : j["tc_item_names"]) d.tc_item_names.insert(c.get<std::string>());
    if (j.contains("hdl_item_names"))
        for (const auto& c : j["hdl_item_names"]) d.hdl_item_names.insert(c.get<std::string>());

    if (d.ascvd_patterns.empty() || d.t2dm_patterns.empty())
        throw std::runtime_error("dictionary pattern lists must be non-empty");
    // map values must come from a declared class vocabulary
    std::unordered_set<std::string> vocab = d.t2dm_drug_classes;
    vocab.insert(d.antihypertensive_classes.begin(), d.antihypertensive_classes.end());
    for (const auto& [drug, cls] : d.drug_class_map)
        if (!vocab.contains(cls))
            throw std::runtime_error("drug_class_map value '" + cls + "' not in class vocabulary");
    if (d.tc_item_names.empty()) d.tc_item_names = {"tc"};
    if (d.hdl_item_names.empty()) d.hdl_item_names = {"hdl-c"};
    return d;
}

DiagnosisDictionary DiagnosisDictionary::builtin_sample() {
    DiagnosisDictionary d;
    auto norm = [](std::string s) { return Pattern{std::move(s), MatchMode::normalized_substring}; };
    d.ascvd_patterns = {norm("myocardial infarction"), norm("coronary heart disease"),
                        norm("coronary artery disease"), norm("unstable angina"),
                        norm("stable angina"),          norm("ischemic stroke"),
                        norm("cerebral infarction"),    norm("transient ischemic attack"),
                        norm("peripheral arterial disease"), norm("acute coronary syndrome"),
                        norm("revascularization")};
    d.t2dm_patterns = {norm("type 2 diabetes"), norm("type ii diabetes"),
                       norm("diabetes mellitus type 2"), norm("t2dm")};
    d.t2dm_drug_classes = {"biguanide", "sulfonylurea", "insulin", "dpp4_inhibitor",
                           "alpha_glucosidase_inhibitor"};
    d.antihypertensive_classes = {"ace_inhibitor", "arb", "beta_blocker",
                                  "calcium_channel_blocker", "thiazide_diuretic"};
    d.drug_class_map = {
        {"metformin", "biguanide"},       {"glipizide", "sulfonylurea"},
        {"glimepiride", "sulfonylurea"},  {"insulin glargine", "insulin"},
        {"sitagliptin", "dpp4_inhibitor"},{"acarbose", "alpha_glucosidase_inhibitor"},
        {"lisinopril", "ace_inhibitor"},  {"enalapril", "ace_inhibitor"},
        {"losartan", "arb"},              {"valsartan", "arb"},
        {"metoprolol", "beta_blocker"},   {"amlodipine", "calcium_channel_blocker"},
        {"nifedipine", "calcium_channel_blocker"}, {"hydrochlorothiazide", "thiazide_diuretic"},
    };
    d.exclusion_patterns = {norm("gestational diabetes"), norm("type 1 diabetes"),
                            norm("type i diabetes mellitus")};
    d.tc_item_names = {"tc"};
    d.hdl_item_names = {"hdl-c"};
    return d;
}

} // namespace riskforge
