#include "riskforge/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace riskforge {

Split split_train_test(std::size_t n, const LabelVector& labels, const SplitSpec& spec) {
    if (n < 5) throw std::runtime_error("split_train_test: need at least 5 instances");
    if (labels.size() != n) throw std::runtime_error("split_train_test: label length mismatch");
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
        throw std::runtime_error("split_train_test: fraction must be in (0,1)");
    std::mt19937_64 rng(spec.seed);
    Split split;
    if (spec.stratified) {
        std::vector<std::size_t> pos, neg;
        for (std::size_t i = 0; i < n; ++i) (labels[i] ? pos : neg).push_back(i);
        std::shuffle(pos.begin(), pos.end(), rng);
        std::shuffle(neg.begin(), neg.end(), rng);
        auto take = [&](std::vector<std::size_t>& group) {
            std::size_t k = static_cast<std::size_t>(
                std::llround(spec.train_fraction * static_cast<double>(group.size())));
            for (std::size_t i = 0; i < group.size(); ++i)
                (i < k ? split.train : split.test).push_back(group[i]);
        };
        take(pos);
        take(neg);
    } else {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), 0);
        std::shuffle(all.begin(), all.end(), rng);
        std::size_t k = static_cast<std::size_t>(
            std::llround(spec.train_fraction * static_cast<double>(n)));
        split.train.assign(all.begin(), all.begin() + k);
        split.test.assign(all.begin() + k, all.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

double auc(const std::vector<double>& scores, const LabelVector& labels) {
    if (scores.size() != labels.size()) throw std::runtime_error("auc: length mismatch");
    std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int y : labels) n_pos += y ? 1 : 0;
    std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw std::runtime_error("auc: undefined with a single class present");

    // midranks; tie groups share the average rank
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        double midrank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = midrank;
        i = j + 1;
    }
    double rank_sum_pos = 0.0;
    for (std::size_t k = 0; k < n; ++k)
        if (labels[k]) rank_sum_pos += rank[k];
    double u = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<KmPoint> kaplan_meier(const SurvivalData& data) {
    if (data.n() == 0) throw std::runtime_error("kaplan_meier: empty data");
    std::map<int, std::pair<std::size_t, std::size_t>> by_time; // time -> (events, censored)
    for (std::size_t i = 0; i < data.n(); ++i) {
        auto& [d, c] = by_time[data.time_days[i]];
        if (data.event[i]) ++d;
        else ++c;
    }
    std::vector<KmPoint> curve;
    double survival = 1.0;
    std::size_t at_risk = data.n();
    for (const auto& [time, counts] : by_time) {
        const auto& [d, c] = counts;
        if (d > 0)
            survival *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
        curve.push_back({time, survival, at_risk});
        at_risk -= d + c;
    }
    return curve;
}

namespace {

// Gaussian elimination with partial pivoting; solves A x = b in place.
std::vector<double> solve_linear(std::vector<double> a, std::vector<double> b, std::size_t p) {
    for (std::size_t col = 0; col < p; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < p; ++r)
            if (std::abs(a[r * p + col]) > std::abs(a[pivot * p + col])) pivot = r;
        if (std::abs(a[pivot * p + col]) < 1e-14)
            throw std::runtime_error("singular information matrix");
        if (pivot != col) {
            for (std::size_t j = 0; j < p; ++j) std::swap(a[col * p + j], a[pivot * p + j]);
            std::swap(b[col], b[pivot]);
        }
        for (std::size_t r = col + 1; r < p; ++r) {
            double f = a[r * p + col] / a[col * p + col];
            for (std::size_t j = col; j < p; ++j) a[r * p + j] -= f * a[col * p + j];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(p);
    for (std::size_t r = p; r-- > 0;) {
        double s = b[r];
        for (std::size_t j = r + 1; j < p; ++j) s -= a[r * p + j] * x[j];
        x[r] = s / a[r * p + r];
    }
    return x;
}

std::vector<double> invert_matrix(const std::vector<double>& a, std::size_t p) {
    std::vector<double> inv(p * p);
    for (std::size_t col = 0; col < p; ++col) {
        std::vector<double> e(p, 0.0);
        e[col] = 1.0;
        std::vector<double> x = solve_linear(a, e, p);
        for (std::size_t r = 0; r < p; ++r) inv[r * p + col] = x[r];
    }
    return inv;
}

// Breslow log-partial-likelihood with optional gradient and information.
double cox_eval(const SurvivalData& data, const std::vector<double>& beta,
                std::vector<double>* gradient, std::vector<double>* information) {
    std::size_t n = data.n(), p = data.p();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return data.time_days[a] > data.time_days[b]; // descending: grow the risk set
    });

    double loglik = 0.0;
    if (gradient) gradient->assign(p, 0.0);
    if (information) information->assign(p * p, 0.0);
    double s0 = 0.0;
    std::vector<double> s1(p, 0.0), s2(p * p, 0.0);

    std::size_t idx = 0;
    while (idx < n) {
        int t = data.time_days[order[idx]];
        std::size_t start = idx;
        while (idx < n && data.time_days[order[idx]] == t) {
            std::size_t i = order[idx];
            const double* x = data.covariates.data() + i * p;
            double xb = 0.0;
            for (std::size_t j = 0; j < p; ++j) xb += beta[j] * x[j];
            double w = std::exp(xb);
            s0 += w;
            for (std::size_t j = 0; j < p; ++j) {
                s1[j] += w * x[j];
                for (std::size_t k = 0; k < p; ++k) s2[j * p + k] += w * x[j] * x[k];
            }
            ++idx;
        }
        std::size_t d = 0;
        for (std::size_t k = start; k < idx; ++k) {
            std::size_t i = order[k];
            if (!data.event[i]) continue;
            ++d;
            const double* x = data.covariates.data() + i * p;
            for (std::size_t j = 0; j < p; ++j) {
                double xb_j = beta[j] * x[j];
                loglik += xb_j;
                if (gradient) (*gradient)[j] += x[j];
            }
        }
        if (d > 0) {
            double dd = static_cast<double>(d);
            loglik -= dd * std::log(s0);
            for (std::size_t j = 0; j < p; ++j) {
                double mean_j = s1[j] / s0;
                if (gradient) (*gradient)[j] -= dd * mean_j;
                if (information)
                    for (std::size_t k = 0; k < p; ++k)
                        (*information)[j * p + k] += dd * (s2[j * p + k] / s0 - mean_j * s1[k] / s0);
            }
        }
    }
    return loglik;
}

} // namespace

double cox_log_likelihood(const SurvivalData& data, const std::vector<double>& beta,
                          std::vector<double>* gradient) {
    return cox_eval(data, beta, gradient, nullptr);
}

CoxFitResult fit_cox(const SurvivalData& data, int max_iterations) {
    std::size_t p = data.p();
    if (p == 0) throw std::runtime_error("fit_cox: no covariates");
    if (std::none_of(data.event.begin(), data.event.end(), [](bool e) { return e; }))
        throw std::runtime_error("fit_cox: no events");
    for (std::size_t j = 0; j < p; ++j) {
        double first = data.covariates[j];
        bool constant = true;
        for (std::size_t i = 1; i < data.n(); ++i)
            if (data.covariates[i * p + j] != first) { constant = false; break; }
        if (constant)
            throw std::runtime_error("fit_cox: constant covariate '" + data.covariate_names[j] + "'");
    }

    CoxFitResult result;
    result.variables = data.covariate_names;
    std::vector<double> beta(p, 0.0);
    std::vector<double> grad, info;
    std::string trace;
    for (int it = 1; it <= max_iterations; ++it) {
        double loglik = cox_eval(data, beta, &grad, &info);
        result.iterations = it;
        result.log_partial_likelihood = loglik;
        double max_score = 0.0;
        for (double g : grad) max_score = std::max(max_score, std::abs(g));
        trace += "iter " + std::to_string(it) + ": loglik=" + std::to_string(loglik) +
                 " max|score|=" + std::to_string(max_score) + "\n";
        if (max_score < 1e-8) {
            result.converged = true;
            break;
        }
        std::vector<double> step;
        try {
            step = solve_linear(info, grad, p);
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string("fit_cox: ") + e.what() + "\n" + trace);
        }
        // halve the step while it would overshoot to non-finite likelihood
        double scale = 1.0;
        for (int halves = 0; halves < 30; ++halves) {
            std::vector<double> trial = beta;
            for (std::size_t j = 0; j < p; ++j) trial[j] += scale * step[j];
            if (std::isfinite(cox_eval(data, trial, nullptr, nullptr))) {
                beta = trial;
                break;
            }
            scale *= 0.5;
        }
    }
    if (!result.converged)
        throw std::runtime_error("fit_cox: no convergence after " +
                                 std::to_string(max_iterations) + " iterations\n" + trace);

    cox_eval(data, beta, &grad, &info);
    std::vector<double> cov = invert_matrix(info, p);
    result.beta = beta;
    for (std::size_t j = 0; j < p; ++j) {
        double se = std::sqrt(cov[j * p + j]);
        result.exp_beta.push_back(std::exp(beta[j]));
        result.se.push_back(se);
        result.p_value.push_back(2.0 * normal_sf(std::abs(beta[j]) / se));
        result.ci_lower.push_back(std::exp(beta[j] - 1.96 * se));
        result.ci_upper.push_back(std::exp(beta[j] + 1.96 * se));
        result.separation_flag.push_back(std::abs(beta[j]) > 20.0);
    }
    return result;
}

PearsonResult pearson_correlation(const std::vector<double>& x, const std::vector<double>& y) {
    std::size_t n = x.size();
    if (n != y.size() || n < 3) throw std::runtime_error("pearson: need aligned n >= 3");
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    PearsonResult result;
    if (sxx == 0.0 || syy == 0.0) {
        result.defined = false;
        return result;
    }
    result.r = sxy / std::sqrt(sxx * syy);
    double df = static_cast<double>(n) - 2.0;
    if (std::abs(result.r) >= 1.0) {
        result.p_value = 0.0;
    } else {
        double t = result.r * std::sqrt(df / (1.0 - result.r * result.r));
        result.p_value = student_t_two_sided_p(t, df);
    }
    return result;
}

std::vector<PearsonResult> pearson_univariate(const FeatureMatrix& features,
                                              const LabelVector& labels) {
    std::vector<double> y(labels.begin(), labels.end());
    std::vector<PearsonResult> out;
    for (std::size_t j = 0; j < features.m; ++j)
        out.push_back(pearson_correlation(features.column(j), y));
    return out;
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double chi2_sf_1df(double x) {
    if (x <= 0.0) return 1.0;
    return std::erfc(std::sqrt(x / 2.0));
}

namespace {

// Regularized incomplete beta by Lentz's continued fraction.
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16, kFpMin = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

double incbeta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                      b * std::log(1.0 - x);
    if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(ln_front) * betacf(a, b, x) / a;
    return 1.0 - std::exp(ln_front) * betacf(b, a, 1.0 - x) / b;
}

} // namespace

double student_t_two_sided_p(double t, double df) {
    double x = df / (df + t * t);
    return incbeta(df / 2.0, 0.5, x);
}

namespace {

std::string fixed3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

std::string sig6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

} // namespace

void render_reports(const EvalReport& report, const std::string& output_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(output_dir);

    // table2: one row per model, train/test column pair per experiment
    std::vector<std::string> experiments, models;
    for (const auto& cell : report.grid) {
        if (std::find(experiments.begin(), experiments.end(), cell.experiment) == experiments.end())
            experiments.push_back(cell.experiment);
        if (std::find(models.begin(), models.end(), cell.model) == models.end())
            models.push_back(cell.model);
    }
    std::sort(experiments.begin(), experiments.end());
    {
        std::ofstream out(fs::path(output_dir) / "table2.csv", std::ios::binary);
        out << "model";
        for (const auto& ex : experiments) out << ',' << ex << "_train," << ex << "_test";
        out << '\n';
        for (const auto& model : models) {
            out << model;
            for (const auto& ex : experiments) {
                auto it = std::find_if(report.grid.begin(), report.grid.end(), [&](const auto& c) {
                    return c.experiment == ex && c.model == model;
                });
                if (it == report.grid.end()) out << ",,";
                else out << ',' << fixed3(it->train_auc) << ',' << fixed3(it->test_auc);
            }
            out << '\n';
        }
    }
    {
        std::ofstream out(fs::path(output_dir) / "table3.csv", std::ios::binary);
        out << "variable,sig,pearson,cox_sig,exp_beta,ci_lower,ci_upper\n";
        for (const auto& row : report.table3)
            out << row.variable << ',' << fixed3(row.pearson_sig) << ',' << fixed3(row.pearson_r)
                << ',' << fixed3(row.cox_sig) << ',' << fixed3(row.exp_beta) << ','
                << fixed3(row.ci_lower) << ',' << fixed3(row.ci_upper) << '\n';
    }
    {
        std::ofstream out(fs::path(output_dir) / "km_curve.csv", std::ios::binary);
        out << "time,survival,at_risk\n";
        for (const auto& pt : report.km_curve)
            out << pt.time << ',' << sig6(pt.survival) << ',' << pt.at_risk << '\n';
    }
    {
        std::ofstream out(fs::path(output_dir) / "summary.txt", std::ios::binary);
        out << report.summary;
    }
    {
        nlohmann::json j;
        j["grid"] = nlohmann::json::array();
        j["table3"] = nlohmann::json::array();
        j["km_curve"] = nlohmann::json::array();
        for (const auto& cell : report.grid)
            j["grid"].push_back({{"experiment", cell.experiment},
                                 {"model", cell.model},
                                 {"train_auc", cell.train_auc},
                                 {"test_auc", cell.test_auc}});
        for (const auto& row : report.table3)
            j["table3"].push_back({{"variable", row.variable},
                                   {"sig", row.pearson_sig},
                                   {"pearson", row.pearson_r},
                                   {"cox_sig", row.cox_sig},
                                   {"exp_beta", row.exp_beta},
                                   {"ci_lower", row.ci_lower},
                                   {"ci_upper", row.ci_upper}});
        for (const auto& pt : report.km_curve)
            j["km_curve"].push_back(
                {{"time", pt.time}, {"survival", pt.survival}, {"at_risk", pt.at_risk}});
        std::ofstream out(fs::path(output_dir) / "report.json", std::ios::binary);
        out << j.dump(2) << '\n';
    }
}

} // namespace riskforge
