#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "riskforge/csv.hpp"
#include "riskforge/dates.hpp"
#include "riskforge/dictionary.hpp"

using namespace riskforge;
namespace fs = std::filesystem;

TEST_CASE("date parse round trip") {
    auto d = Date::parse("2016-03-31");
    REQUIRE(d.has_value());
    CHECK(d->to_string() == "2016-03-31");
    CHECK(Date::parse("2020-02-29").has_value());  // leap day
    CHECK_FALSE(Date::parse("2019-02-29").has_value());
    CHECK_FALSE(Date::parse("2019-13-01").has_value());
    CHECK_FALSE(Date::parse("2019-00-10").has_value());
    CHECK_FALSE(Date::parse("20190110").has_value());
    CHECK_FALSE(Date::parse("2019-1-1").has_value());
    CHECK_FALSE(Date::parse("").has_value());
}

TEST_CASE("days_between spans a leap day") {
    CHECK(days_between(Date(2019, 3, 1), Date(2020, 3, 1)) == 366);
    CHECK(days_between(Date(2018, 3, 1), Date(2019, 3, 1)) == 365);
    CHECK(days_between(Date(2020, 2, 28), Date(2020, 3, 1)) == 2);
    CHECK(days_between(Date(2020, 3, 1), Date(2020, 2, 28)) == -2);
    CHECK(days_between(Date(2001, 5, 5), Date(2001, 5, 5)) == 0);
}

TEST_CASE("date ordering") {
    CHECK(Date(2012, 8, 1) < Date(2012, 8, 2));
    CHECK(Date(2012, 8, 1) == *Date::parse("2012-08-01"));
    CHECK(Date(2011, 12, 31) < Date(2012, 1, 1));
}

TEST_CASE("csv round trip with quoting") {
    csv::Table t;
    t.header = {"a", "b,comma", "c"};
    t.rows = {{"plain", "with \"quotes\"", "line\nbreak"}, {"", ",", "\""}};
    fs::path p = fs::temp_directory_path() / "rf_csv_roundtrip.csv";
    csv::write_file(p.string(), t);
    csv::Table back = csv::read_file(p.string());
    CHECK(back.header == t.header);
    CHECK(back.rows == t.rows);
    fs::remove(p);
}

TEST_CASE("csv parses CRLF and doubled quotes") {
    fs::path p = fs::temp_directory_path() / "rf_csv_crlf.csv";
    std::ofstream(p) << "x,y\r\n\"a\"\"b\",2\r\n";
    csv::Table t = csv::read_file(p.string());
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0][0] == "a\"b");
    CHECK(t.rows[0][1] == "2");
    fs::remove(p);
}

TEST_CASE("normalize_text strips punctuation and case") {
    CHECK(normalize_text("Type 2 Diabetes!") == "type2diabetes");
    CHECK(normalize_text("  T2DM ") == "t2dm");
    CHECK(normalize_text("...") == "");
}

TEST_CASE("match_diagnosis modes") {
    std::vector<Pattern> pats = {{"type 2 diabetes", MatchMode::normalized_substring},
                                 {"raw-token", MatchMode::substring}};
    CHECK(match_diagnosis("TYPE-2 DIABETES mellitus", pats));
    CHECK(match_diagnosis("history of type 2 diabetes", pats));
    CHECK(match_diagnosis("xx raw-token yy", pats));
    CHECK_FALSE(match_diagnosis("RAW-TOKEN", pats));  // substring mode is literal
    CHECK_FALSE(match_diagnosis("type 1 diabetes", pats));
    CHECK_FALSE(match_diagnosis("", pats));
}

TEST_CASE("dictionary load validates class vocabulary") {
    fs::path p = fs::temp_directory_path() / "rf_dict_bad.json";
    std::ofstream(p) << R"({
        "ascvd_patterns": [{"text": "stroke", "mode": "normalized_substring"}],
        "t2dm_patterns": [{"text": "t2dm", "mode": "normalized_substring"}],
        "t2dm_drug_classes": ["biguanide"],
        "antihypertensive_classes": ["arb"],
        "drug_class_map": {"mystery": "not_a_class"},
        "exclusion_patterns": [],
        "tc_item_names": ["tc"],
        "hdl_item_names": ["hdl-c"]
    })";
    CHECK_THROWS(DiagnosisDictionary::load(p.string()));
    fs::remove(p);
}

TEST_CASE("builtin dictionary is self-consistent") {
    auto d = DiagnosisDictionary::builtin_sample();
    CHECK_FALSE(d.ascvd_patterns.empty());
    CHECK_FALSE(d.t2dm_patterns.empty());
    for (const auto& [drug, cls] : d.drug_class_map)
        CHECK((d.t2dm_drug_classes.count(cls) || d.antihypertensive_classes.count(cls)));
}
