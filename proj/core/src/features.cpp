#include "riskforge/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "riskforge/csv.hpp"

namespace riskforge {

std::vector<double> FeatureMatrix::column(std::size_t j) const {
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = at(i, j);
    return col;
}

void FeatureMatrix::append_columns(const FeatureMatrix& other) {
    if (n != other.n || instance_ids != other.instance_ids)
        throw std::runtime_error("append_columns: instance order mismatch");
    std::vector<double> merged(n * (m + other.m));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) merged[i * (m + other.m) + j] = at(i, j);
        for (std::size_t j = 0; j < other.m; ++j) merged[i * (m + other.m) + m + j] = other.at(i, j);
    }
    values = std::move(merged);
    feature_names.insert(feature_names.end(), other.feature_names.begin(),
                         other.feature_names.end());
    m += other.m;
}

void FeatureMatrix::write_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "instance_id";
    for (const auto& name : feature_names) out << ',' << csv::escape(name);
    out << '\n';
    out.precision(17);
    for (std::size_t i = 0; i < n; ++i) {
        out << csv::escape(instance_ids[i]);
        for (std::size_t j = 0; j < m; ++j) out << ',' << at(i, j);
        out << '\n';
    }
}

KnownFactorProfile extract_known_factors(const EhrRepository& repo, const CohortInstance& instance,
                                         const DiagnosisDictionary& dict, int observation_days) {
    KnownFactorProfile p;
    p.patient_id = instance.patient_id;
    const PatientRow* patient = repo.find_patient(instance.patient_id);
    if (!patient) throw std::runtime_error("unknown patient: " + instance.patient_id);
    p.gender_male = patient->gender == Gender::male ? 1 : 0;
    p.age_years = days_between(patient->birthday, instance.index_date) / 365.0;

    auto in_window = [&](Date when) {
        int gap = days_between(when, instance.index_date); // index - when
        return gap >= 0 && gap <= observation_days;
    };

    // most recent in-window value wins
    std::optional<Date> tc_when, hdl_when, sbp_when, smoker_when;
    for (std::size_t e : repo.encounters_of(instance.patient_id)) {
        const std::string& eid = repo.encounters[e].encounter_id;
        for (std::size_t li : repo.lab_tests_of_encounter(eid)) {
            const LabTestRow& lab = repo.lab_tests[li];
            if (!in_window(lab.commit_time)) continue;
            std::string item;
            for (char c : lab.test_item_name) item += static_cast<char>(std::tolower(c));
            if (dict.tc_item_names.contains(item) && (!tc_when || lab.commit_time > *tc_when)) {
                p.tc = lab.test_value;
                tc_when = lab.commit_time;
            }
            if (dict.hdl_item_names.contains(item) && (!hdl_when || lab.commit_time > *hdl_when)) {
                p.hdl_c = lab.test_value;
                hdl_when = lab.commit_time;
            }
        }
        for (std::size_t fi : repo.follow_ups_of_encounter(eid)) {
            const FollowUpRow& fu = repo.follow_ups[fi];
            if (!in_window(fu.commit_time)) continue;
            if (fu.systolic_bp && (!sbp_when || fu.commit_time > *sbp_when)) {
                p.sbp = fu.systolic_bp;
                sbp_when = fu.commit_time;
            }
            if (fu.daily_smoking && (!smoker_when || fu.commit_time > *smoker_when)) {
                p.smoker = fu.daily_smoking;
                smoker_when = fu.commit_time;
            }
        }
        for (std::size_t mi : repo.medications_of_encounter(eid)) {
            const MedicationRow& med = repo.medications[mi];
            if (!in_window(med.commit_time)) continue;
            auto it = dict.drug_class_map.find(med.drug_name);
            if (it != dict.drug_class_map.end() &&
                dict.antihypertensive_classes.contains(it->second))
                p.hbp_treated = true;
        }
    }
    return p;
}

std::vector<std::size_t> complete_case_filter(const std::vector<KnownFactorProfile>& profiles,
                                              MissingnessReport* report) {
    MissingnessReport local;
    local.total = profiles.size();
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        const auto& p = profiles[i];
        local.present_counts["gender"] += 1;
        local.present_counts["age"] += 1;
        local.present_counts["hbp_treated"] += 1;
        if (p.tc) local.present_counts["tc"] += 1;
        if (p.hdl_c) local.present_counts["hdl_c"] += 1;
        if (p.sbp) local.present_counts["sbp"] += 1;
        if (p.smoker) local.present_counts["smoker"] += 1;
        if (p.complete()) kept.push_back(i);
    }
    local.complete = kept.size();
    if (report) *report = local;
    return kept;
}

FeatureMatrix known_factor_matrix(const std::vector<KnownFactorProfile>& profiles) {
    FeatureMatrix fm;
    fm.feature_names = {"gender", "age", "tc", "hdl_c", "sbp", "hbp_treated", "smoker"};
    fm.m = fm.feature_names.size();
    fm.n = profiles.size();
    fm.values.resize(fm.n * fm.m);
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        const auto& p = profiles[i];
        if (!p.complete()) throw std::runtime_error("known_factor_matrix requires complete profiles");
        fm.instance_ids.push_back(p.patient_id);
        fm.at(i, 0) = p.gender_male;
        fm.at(i, 1) = p.age_years;
        fm.at(i, 2) = *p.tc;
        fm.at(i, 3) = *p.hdl_c;
        fm.at(i, 4) = *p.sbp;
        fm.at(i, 5) = p.hbp_treated ? 1.0 : 0.0;
        fm.at(i, 6) = *p.smoker ? 1.0 : 0.0;
    }
    return fm;
}

std::vector<ChapterRange> default_chapter_map() {
    return {
        {1, "A00", "B99"},  {2, "C00", "D48"},  {3, "D50", "D89"},  {4, "E00", "E90"},
        {5, "F00", "F99"},  {6, "G00", "G99"},  {7, "H00", "H59"},  {8, "H60", "H95"},
        {9, "I00", "I99"},  {10, "J00", "J99"}, {11, "K00", "K93"}, {12, "L00", "L99"},
        {13, "M00", "M99"}, {14, "N00", "N99"}, {15, "O00", "O99"}, {16, "P00", "P96"},
        {17, "Q00", "Q99"}, {18, "R00", "R99"}, {19, "S00", "T98"}, {20, "V01", "Y98"},
        {21, "Z00", "Z99"}, {22, "U00", "U99"},
    };
}

std::vector<ChapterRange> load_chapter_map(const std::string& csv_path) {
    csv::Table t = csv::read_file(csv_path);
    if (t.header != std::vector<std::string>{"chapter", "block_start", "block_end"})
        throw std::runtime_error("bad chapter map header in " + csv_path);
    std::vector<ChapterRange> map;
    for (const auto& row : t.rows)
        map.push_back({std::stoi(row[0]), row[1], row[2]});
    return map;
}

void write_chapter_map(const std::vector<ChapterRange>& map, const std::string& csv_path) {
    csv::Table t;
    t.header = {"chapter", "block_start", "block_end"};
    for (const auto& r : map) t.rows.push_back({std::to_string(r.chapter), r.block_start, r.block_end});
    csv::write_file(csv_path, t);
}

int chapter_of(const std::string& code, const std::vector<ChapterRange>& map) {
    if (code.size() < 3) return 0;
    std::string prefix = code.substr(0, 3);
    for (const auto& r : map)
        if (prefix >= r.block_start && prefix <= r.block_end) return r.chapter;
    return 0;
}

FeatureMatrix build_icd_features(const EhrRepository& repo,
                                 const std::vector<CohortInstance>& instances, IcdFeatureMode mode,
                                 int observation_days,
                                 const std::vector<ChapterRange>& chapter_map) {
    FeatureMatrix fm;
    fm.n = instances.size();
    for (const auto& inst : instances) fm.instance_ids.push_back(inst.patient_id);

    auto in_window = [&](const CohortInstance& inst, Date when) {
        int gap = days_between(when, inst.index_date);
        return gap >= 0 && gap <= observation_days;
    };

    if (mode == IcdFeatureMode::chapter22) {
        fm.m = chapter_map.size();
        for (const auto& r : chapter_map) fm.feature_names.push_back("c" + std::to_string(r.chapter));
        fm.values.assign(fm.n * fm.m, 0.0);
        for (std::size_t i = 0; i < instances.size(); ++i)
            for (std::size_t e : repo.encounters_of(instances[i].patient_id)) {
                const EncounterRow& enc = repo.encounters[e];
                if (!enc.icd_code || !looks_like_icd10(*enc.icd_code)) continue;
                if (!in_window(instances[i], enc.commit_time)) continue;
                int ch = chapter_of(*enc.icd_code, chapter_map);
                if (ch > 0) {
                    for (std::size_t j = 0; j < chapter_map.size(); ++j)
                        if (chapter_map[j].chapter == ch) fm.at(i, j) = 1.0;
                }
            }
        return fm;
    }

    // threedigit: one column per prefix observed in-window across the cohort
    std::set<std::string> prefixes;
    for (const auto& inst : instances)
        for (std::size_t e : repo.encounters_of(inst.patient_id)) {
            const EncounterRow& enc = repo.encounters[e];
            if (enc.icd_code && looks_like_icd10(*enc.icd_code) && in_window(inst, enc.commit_time))
                prefixes.insert(enc.icd_code->substr(0, 3));
        }
    fm.feature_names.assign(prefixes.begin(), prefixes.end()); // already sorted
    fm.m = fm.feature_names.size();
    fm.values.assign(fm.n * fm.m, 0.0);
    for (std::size_t i = 0; i < instances.size(); ++i)
        for (std::size_t e : repo.encounters_of(instances[i].patient_id)) {
            const EncounterRow& enc = repo.encounters[e];
            if (!enc.icd_code || !looks_like_icd10(*enc.icd_code)) continue;
            if (!in_window(instances[i], enc.commit_time)) continue;
            auto it = std::lower_bound(fm.feature_names.begin(), fm.feature_names.end(),
                                       enc.icd_code->substr(0, 3));
            if (it != fm.feature_names.end() && *it == enc.icd_code->substr(0, 3))
                fm.at(i, static_cast<std::size_t>(it - fm.feature_names.begin())) = 1.0;
        }
    return fm;
}

double chi2_statistic_2x2(double n11, double n10, double n01, double n00) {
    double n = n11 + n10 + n01 + n00;
    double row1 = n11 + n10, row0 = n01 + n00;
    double col1 = n11 + n01, col0 = n10 + n00;
    // degenerate margins carry no information
    if (row1 == 0 || row0 == 0 || col1 == 0 || col0 == 0) return 0.0;
    double d = n11 * n00 - n10 * n01;
    return n * d * d / (row1 * row0 * col1 * col0);
}

std::vector<std::size_t> chi2_select_indices(const FeatureMatrix& features,
                                             const LabelVector& labels, std::size_t top_k) {
    if (features.n != labels.size()) throw std::runtime_error("chi2_select: label length mismatch");
    struct Scored {
        double stat;
        std::string name;
        std::size_t index;
    };
    std::vector<Scored> scored;
    for (std::size_t j = 0; j < features.m; ++j) {
        double n11 = 0, n10 = 0, n01 = 0, n00 = 0; // (feature, label)
        for (std::size_t i = 0; i < features.n; ++i) {
            bool f = features.at(i, j) != 0.0;
            bool y = labels[i] != 0;
            if (f && y) ++n11;
            else if (f) ++n10;
            else if (y) ++n01;
            else ++n00;
        }
        scored.push_back({chi2_statistic_2x2(n11, n10, n01, n00), features.feature_names[j], j});
    }
    std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        if (a.stat != b.stat) return a.stat > b.stat;
        return a.name < b.name;
    });
    std::vector<std::size_t> selected;
    for (std::size_t k = 0; k < std::min(top_k, scored.size()); ++k)
        selected.push_back(scored[k].index);
    return selected;
}

FeatureMatrix select_columns(const FeatureMatrix& features, const std::vector<std::size_t>& cols) {
    FeatureMatrix out;
    out.n = features.n;
    out.m = cols.size();
    out.instance_ids = features.instance_ids;
    for (std::size_t j : cols) out.feature_names.push_back(features.feature_names[j]);
    out.values.resize(out.n * out.m);
    for (std::size_t i = 0; i < out.n; ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) out.at(i, j) = features.at(i, cols[j]);
    return out;
}

void Standardization::save_json(const std::string& path) const {
    nlohmann::json j;
    j["mean"] = mean;
    j["stddev"] = stddev;
    std::ofstream out(path);
    out << j.dump(2) << '\n';
}

Standardization standardize(FeatureMatrix& train, FeatureMatrix* test) {
    if (train.n == 0) throw std::runtime_error("standardize: empty training matrix");
    Standardization stats;
    stats.mean.resize(train.m);
    stats.stddev.resize(train.m);
    for (std::size_t j = 0; j < train.m; ++j) {
        double sum = 0;
        for (std::size_t i = 0; i < train.n; ++i) sum += train.at(i, j);
        double mu = sum / static_cast<double>(train.n);
        double ss = 0;
        for (std::size_t i = 0; i < train.n; ++i) {
            double d = train.at(i, j) - mu;
            ss += d * d;
        }
        double sd = std::sqrt(ss / static_cast<double>(train.n)); // population stddev
        stats.mean[j] = mu;
        stats.stddev[j] = sd;
        auto apply = [&](FeatureMatrix& fm) {
            for (std::size_t i = 0; i < fm.n; ++i)
                fm.at(i, j) = sd == 0.0 ? 0.0 : (fm.at(i, j) - mu) / sd;
        };
        apply(train);
        if (test) apply(*test);
    }
    return stats;
}

} // namespace riskforge
