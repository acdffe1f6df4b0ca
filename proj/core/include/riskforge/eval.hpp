#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "riskforge/features.hpp"

namespace riskforge {

struct SplitSpec {
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
    bool stratified = true;
};

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Disjoint, exhaustive; stratified keeps class proportions within one instance.
Split split_train_test(std::size_t n, const LabelVector& labels, const SplitSpec& spec);

// Mann-Whitney rank AUC, ties counted 1/2. Both classes must be present.
double auc(const std::vector<double>& scores, const LabelVector& labels);

struct SurvivalData {
    std::vector<int> time_days;
    std::vector<bool> event; // true = observed outcome
    std::vector<std::string> covariate_names;
    std::vector<double> covariates; // row-major n x p, may be empty for KM
    std::size_t n() const { return time_days.size(); }
    std::size_t p() const { return covariate_names.size(); }
};

struct KmPoint {
    int time = 0;
    double survival = 1.0;
    std::size_t at_risk = 0;
};

// Product-limit estimator; ties at a time process events before censorings.
std::vector<KmPoint> kaplan_meier(const SurvivalData& data);

struct CoxFitResult {
    bool converged = false;
    int iterations = 0;
    double log_partial_likelihood = 0.0;
    std::vector<std::string> variables;
    std::vector<double> beta;
    std::vector<double> exp_beta;
    std::vector<double> se;
    std::vector<double> p_value; // Wald
    std::vector<double> ci_lower, ci_upper;
    std::vector<bool> separation_flag; // |beta| > 20
};

// Breslow tie handling, Newton-Raphson; converges on max|score| < 1e-8.
CoxFitResult fit_cox(const SurvivalData& data, int max_iterations = 50);

// Log-partial-likelihood and its gradient at arbitrary beta (test hook).
double cox_log_likelihood(const SurvivalData& data, const std::vector<double>& beta,
                          std::vector<double>* gradient);

struct PearsonResult {
    bool defined = true; // false for a constant column
    double r = 0.0;
    double p_value = 1.0;
};

PearsonResult pearson_correlation(const std::vector<double>& x, const std::vector<double>& y);
std::vector<PearsonResult> pearson_univariate(const FeatureMatrix& features,
                                              const LabelVector& labels);

// p-value helpers (two-sided unless noted)
double normal_sf(double z);                       // P(Z > z)
double chi2_sf_1df(double x);                     // upper tail, 1 d.o.f.
double student_t_two_sided_p(double t, double df);

struct EvalReport {
    struct Cell {
        std::string experiment;
        std::string model;
        double train_auc = 0.0;
        double test_auc = 0.0;
    };
    struct Table3Row {
        std::string variable;
        double pearson_sig = 1.0;
        double pearson_r = 0.0;
        double cox_sig = 1.0;
        double exp_beta = 1.0;
        double ci_lower = 0.0;
        double ci_upper = 0.0;
    };
    std::vector<Cell> grid;
    std::vector<Table3Row> table3;
    std::vector<KmPoint> km_curve;
    std::string summary;
};

// Writes table2.csv, table3.csv, km_curve.csv, summary.txt plus a
// full-precision report.json sidecar.
void render_reports(const EvalReport& report, const std::string& output_dir);

} // namespace riskforge
