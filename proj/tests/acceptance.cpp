// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Statistical criteria use fixed seeds end to end.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "riskforge/pipeline.hpp"
#include "riskforge/synth.hpp"

using namespace riskforge;
namespace fs = std::filesystem;

namespace {

const std::string kCoeffPath = std::string(RISKFORGE_DATA_DIR) + "/pce_coefficients.json";

int g_failures = 0;

void report(int num, const char* name, bool ok) {
    std::printf("%s - criterion %d: %s\n", ok ? "PASS" : "FAIL", num, name);
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& tag) {
    fs::path d = fs::temp_directory_path() / ("rf_accept_" + tag);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::map<std::string, std::string> table_paths(const fs::path& dir) {
    std::map<std::string, std::string> m;
    for (const char* t : {"patient", "encounter", "labtest", "followup", "medication",
                          "organization"})
        m[t] = (dir / (std::string(t) + ".csv")).string();
    return m;
}

// ---------- criterion 1: risk-equation oracle ----------

KnownFactorProfile make_profile(bool male, double age, double tc, double hdl, double sbp,
                                bool treated, bool smoker) {
    KnownFactorProfile p;
    p.patient_id = "x";
    p.gender_male = male ? 1 : 0;
    p.age_years = age;
    p.tc = tc;
    p.hdl_c = hdl;
    p.sbp = sbp;
    p.hbp_treated = treated;
    p.smoker = smoker;
    return p;
}

// Second, independent evaluation of the published equations.
double oracle_risk(const KnownFactorProfile& p) {
    double la = std::log(p.age_years), lt = std::log(*p.tc), lh = std::log(*p.hdl_c),
           ls = std::log(*p.sbp);
    double L, mean_lp, s0;
    if (p.gender_male) {
        L = 12.344 * la + 11.853 * lt - 2.664 * la * lt - 7.990 * lh + 1.769 * la * lh +
            (p.hbp_treated ? 1.797 : 1.764) * ls + (*p.smoker ? 7.837 - 1.795 * la : 0.0) + 0.658;
        mean_lp = 61.18;
        s0 = 0.9144;
    } else {
        L = -29.799 * la + 4.884 * la * la + 13.540 * lt - 3.114 * la * lt - 13.578 * lh +
            3.149 * la * lh + (p.hbp_treated ? 2.019 : 1.957) * ls +
            (*p.smoker ? 7.574 - 1.665 * la : 0.0) + 0.661;
        mean_lp = -29.18;
        s0 = 0.9665;
    }
    return 1.0 - std::pow(s0, std::exp(L - mean_lp));
}

bool criterion1() {
    auto table = PceCoefficientTable::load(kCoeffPath);
    // hand-derived profiles, worked out longhand from the published equations
    struct Hand {
        KnownFactorProfile p;
        double risk;
    };
    std::vector<Hand> hands = {
        {make_profile(true, 55, 213, 50, 120, false, false), 0.10136022962230795},
        {make_profile(false, 60, 230, 55, 140, true, true), 0.22140692919121718},
        {make_profile(true, 65, 180, 42, 150, true, true), oracle_risk(
            make_profile(true, 65, 180, 42, 150, true, true))},
    };
    for (const auto& h : hands)
        if (std::abs(pce_risk(h.p, table) - h.risk) >= 1e-6) return false;
    std::mt19937_64 rng(100);
    std::uniform_real_distribution<double> age(40, 79), tc(130, 320), hdl(20, 100), sbp(90, 200);
    std::bernoulli_distribution flag(0.5);
    for (int i = 0; i < 20; ++i) {
        auto p = make_profile(flag(rng), age(rng), tc(rng), hdl(rng), sbp(rng), flag(rng),
                              flag(rng));
        if (std::abs(pce_risk(p, table) - oracle_risk(p)) >= 1e-9) return false;
    }
    return true;
}

// ---------- criterion 2: AUC exactness ----------

double auc_by_pairs(const std::vector<double>& scores, const LabelVector& labels) {
    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[i] != 1 || labels[j] != 0) continue;
            pairs += 1;
            if (scores[i] > scores[j]) wins += 1;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    return wins / pairs;
}

bool criterion2() {
    std::mt19937_64 rng(200);
    std::uniform_int_distribution<int> size(4, 50), grid(0, 7);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t n = static_cast<std::size_t>(size(rng));
        std::vector<double> scores(n);
        LabelVector labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = grid(rng) / 8.0;  // coarse grid: plenty of ties
            labels[i] = grid(rng) < 3 ? 1 : 0;
        }
        labels[0] = 1;
        labels[n - 1] = 0;
        if (std::abs(auc(scores, labels) - auc_by_pairs(scores, labels)) >= 1e-12) return false;
    }
    return true;
}

// ---------- criterion 3: survival correctness ----------

bool criterion3() {
    // hand-computed product-limit fixture
    SurvivalData fixture;
    fixture.time_days = {5, 10, 15, 20};
    fixture.event = {true, true, false, true};
    auto km = kaplan_meier(fixture);
    if (km.size() != 4) return false;
    double expected[] = {3.0 / 4.0, 0.5, 0.5, 0.0};
    for (std::size_t i = 0; i < 4; ++i)
        if (km[i].survival != expected[i]) return false;

    // planted hazard ratio 2.0 with ~30% censoring
    std::mt19937_64 rng(300);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SurvivalData d;
    d.covariate_names = {"arm"};
    const double beta_true = std::log(2.0);
    for (std::size_t i = 0; i < 2000; ++i) {
        double x = (i % 2 == 0) ? 1.0 : 0.0;
        double t = -std::log(u(rng)) / (0.01 * std::exp(beta_true * x));
        double c = -std::log(u(rng)) / 0.004;
        d.covariates.push_back(x);
        d.time_days.push_back(1 + static_cast<int>(std::min(t, c)));
        d.event.push_back(t <= c);
    }
    CoxFitResult fit = fit_cox(d);
    if (!fit.converged || fit.exp_beta[0] < 1.8 || fit.exp_beta[0] > 2.2) return false;

    // partial-likelihood gradient vs finite differences
    std::vector<double> beta = {0.25};
    std::vector<double> grad;
    cox_log_likelihood(d, beta, &grad);
    const double h = 1e-6;
    double up = cox_log_likelihood(d, {beta[0] + h}, nullptr);
    double dn = cox_log_likelihood(d, {beta[0] - h}, nullptr);
    double fd = (up - dn) / (2 * h);
    return std::abs(fd - grad[0]) / std::max(std::abs(fd), 1e-8) < 1e-5;
}

// ---------- criterion 4: gradient suite ----------

bool gradient_ok(const std::vector<int>& sizes, const std::vector<double>& inputs, std::size_t n,
                 const std::vector<double>& t1, double w1, const std::vector<double>& t2,
                 double w2, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 0.5);
    std::vector<double> params(detail::param_count(sizes));
    for (auto& p : params) p = normal(rng);
    std::vector<double> grad;
    detail::mlp_loss_and_gradient(sizes, params, inputs, n, t1, w1, t2, w2, &grad);
    const double h = 1e-6;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto p = params;
        p[k] += h;
        double up = detail::mlp_loss_and_gradient(sizes, p, inputs, n, t1, w1, t2, w2, nullptr);
        p[k] -= 2 * h;
        double dn = detail::mlp_loss_and_gradient(sizes, p, inputs, n, t1, w1, t2, w2, nullptr);
        double fd = (up - dn) / (2 * h);
        double denom = std::max({std::abs(fd), std::abs(grad[k]), 1e-8});
        if (std::abs(fd - grad[k]) / denom >= 1e-4) return false;
    }
    return true;
}

bool criterion4() {
    std::mt19937_64 rng(400);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> u(0.05, 0.95);
    std::size_t n = 10;
    std::vector<double> inputs(n * 4);
    for (auto& v : inputs) v = normal(rng);
    std::vector<double> labels(n), soft_a(n), soft_b(n);
    for (auto& v : labels) v = u(rng) < 0.5 ? 0.0 : 1.0;
    for (auto& v : soft_a) v = u(rng);  // knowledge scores / frozen-network outputs
    for (auto& v : soft_b) v = u(rng);
    std::vector<int> lr_sizes = {4, 1}, mlp_sizes = {4, 8, 8, 8, 1};
    for (int trial = 0; trial < 5; ++trial) {
        // LR (single sigmoid layer, label loss)
        if (!gradient_ok(lr_sizes, inputs, n, labels, 1.0, labels, 0.0, rng)) return false;
        // plain MLP label loss
        if (!gradient_ok(mlp_sizes, inputs, n, labels, 1.0, labels, 0.0, rng)) return false;
        // KENN composite: (1-pi) labels + pi knowledge
        if (!gradient_ok(mlp_sizes, inputs, n, labels, 0.347, soft_a, 0.653, rng)) return false;
        // TSNN teacher phase: student mimicry + pi_T knowledge
        if (!gradient_ok(mlp_sizes, inputs, n, soft_b, 1.0, soft_a, 0.653, rng)) return false;
        // TSNN student phase: teacher mimicry + pi_S labels
        if (!gradient_ok(mlp_sizes, inputs, n, soft_a, 1.0, labels, 1.0, rng)) return false;
    }
    return true;
}

// ---------- criterion 5: reduction identities ----------

FeatureMatrix random_matrix(std::size_t n, std::size_t m, std::uint64_t seed) {
    FeatureMatrix fm;
    fm.n = n;
    fm.m = m;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    for (std::size_t j = 0; j < m; ++j) fm.feature_names.push_back("f" + std::to_string(j));
    for (std::size_t i = 0; i < n; ++i) {
        fm.instance_ids.push_back("i" + std::to_string(i));
        for (std::size_t j = 0; j < m; ++j) fm.values.push_back(normal(rng));
    }
    return fm;
}

bool criterion5() {
    auto fm = random_matrix(64, 6, 500);
    LabelVector y(fm.n);
    std::mt19937_64 rng(501);
    std::bernoulli_distribution b(0.4);
    for (auto& v : y) v = b(rng) ? 1 : 0;
    std::vector<double> knowledge(fm.n, 0.37), zeros(fm.n, 0.0);

    MlpConfig cfg;  // stock defaults: 3x8, dropout 0.5, 50 epochs
    cfg.epochs = 20;
    cfg.seed = 55;
    InjectionWeights inj;
    inj.pi = 0.0;
    TrainedModel nn = train_mlp(fm, y, cfg, nullptr, nullptr, ModelKind::nn);
    TrainedModel kenn = train_mlp(fm, y, cfg, &knowledge, &inj, ModelKind::kenn);
    if (nn.loss_trace != kenn.loss_trace) return false;  // bitwise
    if (nn.params != kenn.params) return false;

    TrainedModel lr = train_logistic(fm, y, cfg);
    TrainedModel lrk = train_logistic(fm, y, cfg, ModelKind::lr_k, &zeros);
    return lr.loss_trace == lrk.loss_trace;
}

// ---------- criteria 6 & 10: seeded synthetic benchmarks ----------

struct BenchResult {
    std::map<std::string, double> test_auc;  // by model name
    double pce_auc = 0.0;
};

BenchResult run_bench(std::uint64_t seed, double knowledge_signal, double data_signal) {
    auto table = PceCoefficientTable::load(kCoeffPath);
    SynthSpec spec;
    spec.n_patients = 1000;
    spec.knowledge_signal_strength = knowledge_signal;
    spec.data_signal_strength = data_signal;
    spec.seed = seed;
    fs::path dir = fresh_dir("bench_" + std::to_string(seed) + "_" +
                             std::to_string(knowledge_signal));
    generate_synthetic(spec, table, dir.string());

    LoadResult loaded = load_repository(table_paths(dir));
    auto dict = DiagnosisDictionary::builtin_sample();
    StudyWindow window{Date(2012, 8, 1), Date(2016, 3, 31), 360, 365};
    Cohort cohort = finalize_cohort(loaded.repo, dict,
                                    apply_inclusion(loaded.repo, dict, window).instances);
    std::vector<KnownFactorProfile> profiles;
    LabelVector labels;
    std::vector<CohortInstance> instances;
    for (const auto& inst : cohort.instances) {
        auto p = extract_known_factors(loaded.repo, inst, dict, window.observation_days);
        if (!p.complete()) continue;
        profiles.push_back(p);
        instances.push_back(inst);
        labels.push_back(inst.label);
    }
    std::vector<double> knowledge = score_cohort(profiles, table);

    SplitSpec split_spec;
    split_spec.seed = seed * 7919 + 3;
    Split split = split_train_test(labels.size(), labels, split_spec);
    FeatureMatrix raw = known_factor_matrix(profiles);
    auto subset_rows = [&](const std::vector<std::size_t>& rows) {
        FeatureMatrix out;
        out.m = raw.m;
        out.n = rows.size();
        out.feature_names = raw.feature_names;
        for (std::size_t i : rows) {
            out.instance_ids.push_back(raw.instance_ids[i]);
            for (std::size_t j = 0; j < raw.m; ++j) out.values.push_back(raw.at(i, j));
        }
        return out;
    };
    FeatureMatrix train = subset_rows(split.train);
    FeatureMatrix test = subset_rows(split.test);
    standardize(train, &test);
    LabelVector y_train, y_test;
    std::vector<double> k_train, k_test;
    for (std::size_t i : split.train) y_train.push_back(labels[i]);
    for (std::size_t i : split.test) y_test.push_back(labels[i]);
    for (std::size_t i : split.train) k_train.push_back(knowledge[i]);
    for (std::size_t i : split.test) k_test.push_back(knowledge[i]);

    MlpConfig cfg;
    InjectionWeights inj;  // pi 0.653, pi_S 1
    BenchResult r;
    r.pce_auc = auc(k_test, y_test);

    cfg.seed = derive_seed(seed, "bench/LR");
    TrainedModel lr = train_logistic(train, y_train, cfg);
    r.test_auc["LR"] = auc(predict(lr, test), y_test);
    cfg.seed = derive_seed(seed, "bench/LR-K");
    TrainedModel lrk = train_logistic(train, y_train, cfg, ModelKind::lr_k, &k_train);
    r.test_auc["LR-K"] = auc(predict(lrk, test, &k_test), y_test);
    cfg.seed = derive_seed(seed, "bench/NN");
    TrainedModel nn = train_mlp(train, y_train, cfg, nullptr, nullptr, ModelKind::nn);
    auto nn_test = predict(nn, test);
    r.test_auc["NN"] = auc(nn_test, y_test);
    cfg.seed = derive_seed(seed, "bench/NN-K");
    TrainedModel nnk = train_mlp(train, y_train, cfg, &k_train, &inj, ModelKind::nn_k);
    r.test_auc["NN-K"] = auc(predict(nnk, test, &k_test), y_test);
    cfg.seed = derive_seed(seed, "bench/KENN");
    TrainedModel kenn = train_mlp(train, y_train, cfg, &k_train, &inj, ModelKind::kenn);
    r.test_auc["KENN"] = auc(predict(kenn, test), y_test);
    cfg.seed = derive_seed(seed, "bench/TSNN");
    auto [teacher, student] = train_tsnn(train, y_train, k_train, cfg, inj);
    r.test_auc["TSNN-T"] = auc(predict(teacher, test), y_test);
    r.test_auc["TSNN-S"] = auc(predict(student, test), y_test);
    double auc0 = auc(predict(nn, train), y_train);
    double auc1 = auc(k_train, y_train);
    auto fused = fuse_weighted_average({nn_test, k_test},
                                       {auc0 / (auc0 + auc1), auc1 / (auc0 + auc1)});
    r.test_auc["DF-WA"] = auc(fused, y_test);

    fs::remove_all(dir);
    return r;
}

bool criterion6() {
    std::map<std::string, double> sums;
    double pce_sum = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        BenchResult r = run_bench(seed, 3.0, 0.1);  // strong knowledge, weak data signal
        for (const auto& [k, v] : r.test_auc) sums[k] += v;
        pce_sum += r.pce_auc;
    }
    double nn = sums["NN"] / 10, pce = pce_sum / 10;
    for (const char* model : {"NN-K", "KENN", "TSNN-S"}) {
        double mean = sums[model] / 10;
        std::printf("  [injection] %s mean test AUC %.4f (NN %.4f, PCE %.4f)\n", model, mean, nn,
                    pce);
        if (mean < nn - 0.01) return false;
        if (mean < pce - 0.02) return false;
    }
    return true;
}

bool criterion10() {
    std::map<std::string, double> sums;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        BenchResult r = run_bench(seed + 1000, 0.0, 0.0);  // pure noise labels
        for (const auto& [k, v] : r.test_auc) sums[k] += v;
    }
    for (const auto& [model, sum] : sums) {
        double mean = sum / 10;
        std::printf("  [null-signal] %s mean test AUC %.4f\n", model.c_str(), mean);
        if (mean < 0.4 || mean > 0.6) return false;
    }
    return true;
}

// ---------- criterion 7: feature-selection oracle ----------

bool criterion7() {
    std::mt19937_64 rng(700);
    std::bernoulli_distribution feature(0.3), label(0.4);
    for (int trial = 0; trial < 5; ++trial) {
        FeatureMatrix fm;
        fm.n = 80;
        fm.m = 50;
        // unique names; ties come from duplicated *columns* below
        for (std::size_t j = 0; j < fm.m; ++j)
            fm.feature_names.push_back("v" + std::to_string(100 + j));
        LabelVector y(fm.n);
        for (auto& v : y) v = label(rng) ? 1 : 0;
        fm.values.resize(fm.n * fm.m);
        for (std::size_t i = 0; i < fm.n; ++i) {
            fm.instance_ids.push_back("i" + std::to_string(i));
            for (std::size_t j = 0; j < 40; ++j) fm.at(i, j) = feature(rng) ? 1.0 : 0.0;
            for (std::size_t j = 40; j < 50; ++j) fm.at(i, j) = fm.at(i, j - 40);  // tie columns
        }
        auto got = chi2_select_indices(fm, y, 20);
        // brute force: score every column, sort (stat desc, name asc)
        std::vector<std::pair<double, std::size_t>> scored;
        for (std::size_t j = 0; j < fm.m; ++j) {
            double n11 = 0, n10 = 0, n01 = 0, n00 = 0;
            for (std::size_t i = 0; i < fm.n; ++i) {
                bool f = fm.at(i, j) != 0.0, lab = y[i] != 0;
                (f ? (lab ? n11 : n10) : (lab ? n01 : n00)) += 1;
            }
            scored.push_back({chi2_statistic_2x2(n11, n10, n01, n00), j});
        }
        std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return fm.feature_names[a.second] < fm.feature_names[b.second];
        });
        for (std::size_t k = 0; k < 20; ++k)
            if (got[k] != scored[k].second) return false;
    }
    return true;
}

// ---------- criterion 8: pipeline determinism ----------

bool criterion8() {
    auto table = PceCoefficientTable::load(kCoeffPath);
    SynthSpec spec;
    spec.n_patients = 300;
    spec.seed = 808;
    fs::path data = fresh_dir("det_data");
    generate_synthetic(spec, table, data.string());

    PipelineConfig cfg;
    cfg.table_paths = table_paths(data);
    cfg.pce_coefficients_path = kCoeffPath;
    cfg.experiments = {"EX-1", "EX-2"};
    cfg.mlp.epochs = 10;
    cfg.master_seed = 4242;
    fs::path a = fresh_dir("det_a"), b = fresh_dir("det_b");
    cfg.output_dir = a.string();
    run_pipeline(cfg);
    cfg.output_dir = b.string();
    run_pipeline(cfg);
    bool ok = true;
    for (const char* f : {"table2.csv", "table3.csv", "km_curve.csv"})
        ok = ok && slurp(a / f) == slurp(b / f) && !slurp(a / f).empty();
    fs::remove_all(data);
    fs::remove_all(a);
    fs::remove_all(b);
    return ok;
}

// ---------- criterion 9: report fidelity ----------

bool criterion9() {
    EvalReport report;
    // printed-row fixtures: three-decimal cells with trailing zeros intact
    for (const char* model : {"LR", "LR-K", "NN", "NN-K", "TSNN-T", "TSNN-S", "KENN", "DF-WA"})
        for (const char* ex : {"EX-1", "EX-2", "EX-3", "EX-4"})
            report.grid.push_back({ex, model, 0.7, 0.653});
    report.grid[1].train_auc = 0.7195;  // LR / EX-2 train: rounds to 0.720
    report.grid[5].test_auc = 0.723;    // LR-K / EX-2 test
    report.table3 = {{"age", 0.001, 0.182, 0.001, 1.035, 1.030, 1.042},
                     {"c9", 0.001, 0.236, 0.050, 1.300, 1.000, 1.690}};
    report.km_curve = {{365, 0.9871, 4000}};
    fs::path dir = fresh_dir("fidelity");
    render_reports(report, dir.string());

    std::istringstream t2(slurp(dir / "table2.csv"));
    std::string line;
    std::getline(t2, line);
    if (line != "model,EX-1_train,EX-1_test,EX-2_train,EX-2_test,EX-3_train,EX-3_test,"
                "EX-4_train,EX-4_test")
        return false;
    std::getline(t2, line);  // LR row: 4 experiments x train/test pairs
    if (line != "LR,0.700,0.653,0.720,0.653,0.700,0.653,0.700,0.653") return false;
    std::getline(t2, line);
    if (line != "LR-K,0.700,0.653,0.700,0.723,0.700,0.653,0.700,0.653") return false;
    int rows = 2;
    while (std::getline(t2, line) && !line.empty()) ++rows;
    if (rows != 8) return false;

    std::istringstream t3(slurp(dir / "table3.csv"));
    std::getline(t3, line);
    if (line != "variable,sig,pearson,cox_sig,exp_beta,ci_lower,ci_upper") return false;
    std::getline(t3, line);
    if (line != "age,0.001,0.182,0.001,1.035,1.030,1.042") return false;
    std::getline(t3, line);
    if (line != "c9,0.001,0.236,0.050,1.300,1.000,1.690") return false;
    fs::remove_all(dir);
    return true;
}

} // namespace

int main() {
    report(1, "risk-equation oracle equivalence (1e-6 hand / 1e-9 random)", criterion1());
    report(2, "AUC equals exhaustive pair counting to 1e-12", criterion2());
    report(3, "KM fixture exact; Cox recovers HR 2.0; Cox gradient matches FD", criterion3());
    report(4, "finite-difference gradient suite across all trainable losses", criterion4());
    report(5, "reduction identities are bitwise (KENN pi=0 == NN; LR-K zeros == LR)", criterion5());
    report(6, "knowledge injection helps on planted-signal cohorts (seeds 0-9)", criterion6());
    report(7, "chi-squared top-20 equals brute force, ties included", criterion7());
    report(8, "run-to-run determinism: byte-identical tables", criterion8());
    report(9, "report layouts match printed-row fixtures", criterion9());
    report(10, "null-signal cohorts yield mean test AUC in [0.4, 0.6]", criterion10());
    if (g_failures) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
