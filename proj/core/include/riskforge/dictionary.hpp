#pragma once

#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace riskforge {

enum class MatchMode { substring, normalized_substring };

struct Pattern {
    std::string text;
    MatchMode mode = MatchMode::normalized_substring;
};

// Configurable stand-in for the site-specific synonym lists; loaded from JSON.
struct DiagnosisDictionary {
    std::vector<Pattern> ascvd_patterns;
    std::vector<Pattern> t2dm_patterns;
    std::unordered_set<std::string> t2dm_drug_classes;
    std::unordered_map<std::string, std::string> drug_class_map;
    std::vector<Pattern> exclusion_patterns; // gestational / type-1 diabetes
    std::vector<std::string> t2dm_icd_prefixes{"E11"};
    std::vector<std::string> exclusion_icd_prefixes{"O24", "E10"};
    std::unordered_set<std::string> antihypertensive_classes;
    // Lab item names (lowercased) recognized per factor.
    std::unordered_set<std::string> tc_item_names;
    std::unordered_set<std::string> hdl_item_names;

    static DiagnosisDictionary load(const std::string& json_path);
    static DiagnosisDictionary builtin_sample();
};

// Normalized-substring mode strips whitespace/punctuation and case-folds
// before the containment test. Null/empty text never matches.
bool match_diagnosis(const std::string& text, const std::vector<Pattern>& patterns);
std::string normalize_text(const std::string& text);

} // namespace riskforge
