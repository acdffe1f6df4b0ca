#include "riskforge/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "riskforge/synth.hpp"

namespace riskforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t fnv1a_bytes(const std::string& bytes) {
    std::uint64_t hash = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 1099511628211ull;
    }
    return hash;
}

json config_to_json(const PipelineConfig& c) {
    json j;
    j["tables"] = c.table_paths;
    j["dictionary"] = c.dictionary_path;
    j["pce_coefficients"] = c.pce_coefficients_path;
    j["chapter_map"] = c.chapter_map_path;
    j["window"] = {{"index_period_start", c.window.index_period_start.to_string()},
                   {"index_period_end", c.window.index_period_end.to_string()},
                   {"lookback_days", c.window.lookback_days},
                   {"observation_days", c.window.observation_days}};
    j["split"] = {{"train_fraction", c.split.train_fraction}, {"stratified", c.split.stratified}};
    j["mlp"] = {{"hidden_layers", c.mlp.hidden_layers},
                {"hidden_units", c.mlp.hidden_units},
                {"dropout_rate", c.mlp.dropout_rate},
                {"epochs", c.mlp.epochs},
                {"batch_size", c.mlp.batch_size},
                {"learning_rate", c.mlp.learning_rate},
                {"optimizer", c.mlp.optimizer == Optimizer::adam ? "adam" : "sgd"},
                {"lr_max_iterations", c.mlp.lr_max_iterations}};
    j["injection"] = {{"pi", c.injection.pi},
                      {"pi_teacher", c.injection.pi_teacher},
                      {"pi_student", c.injection.pi_student},
                      {"tsnn_outer_iterations", c.injection.tsnn_outer_iterations},
                      {"tsnn_inner_epochs", c.injection.tsnn_inner_epochs}};
    j["experiments"] = c.experiments;
    j["models"] = c.model_kinds;
    j["top_k"] = c.top_k;
    j["seed"] = c.master_seed;
    j["save_models"] = c.save_models;
    return j;
}

struct ExperimentOutcome {
    std::vector<EvalReport::Cell> cells;
    std::map<std::string, std::uint64_t> job_seeds;
    std::vector<std::pair<std::string, TrainedModel>> models; // name -> model
};

} // namespace

std::uint64_t derive_seed(std::uint64_t master_seed, const std::string& job_name) {
    return master_seed ^ fnv1a_bytes(job_name);
}

unsigned worker_threads() {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("RISKFORGE_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return std::min<unsigned>(static_cast<unsigned>(v), hw);
    }
    return hw;
}

PipelineConfig PipelineConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const std::exception& e) {
        throw ConfigError("config parse failure in " + path + ": " + e.what());
    }
    PipelineConfig c;
    try {
        if (j.contains("data_dir")) {
            std::string dir = j["data_dir"].get<std::string>();
            for (const char* t : {"patient", "encounter", "labtest", "followup", "medication",
                                  "organization"})
                c.table_paths[t] = (fs::path(dir) / (std::string(t) + ".csv")).string();
        }
        if (j.contains("tables"))
            for (auto& [name, p] : j["tables"].items()) c.table_paths[name] = p.get<std::string>();
        c.dictionary_path = j.value("dictionary", "");
        c.pce_coefficients_path = j.value("pce_coefficients", "");
        c.chapter_map_path = j.value("chapter_map", "");
        if (j.contains("window")) {
            const auto& w = j["window"];
            auto parse_date = [](const std::string& s) {
                auto d = Date::parse(s);
                if (!d) throw ConfigError("bad date in config window: " + s);
                return *d;
            };
            if (w.contains("index_period_start"))
                c.window.index_period_start = parse_date(w["index_period_start"]);
            if (w.contains("index_period_end"))
                c.window.index_period_end = parse_date(w["index_period_end"]);
            c.window.lookback_days = w.value("lookback_days", c.window.lookback_days);
            c.window.observation_days = w.value("observation_days", c.window.observation_days);
        }
        if (j.contains("split")) {
            c.split.train_fraction = j["split"].value("train_fraction", c.split.train_fraction);
            c.split.stratified = j["split"].value("stratified", c.split.stratified);
        }
        if (j.contains("mlp")) {
            const auto& m = j["mlp"];
            c.mlp.hidden_layers = m.value("hidden_layers", c.mlp.hidden_layers);
            c.mlp.hidden_units = m.value("hidden_units", c.mlp.hidden_units);
            c.mlp.dropout_rate = m.value("dropout_rate", c.mlp.dropout_rate);
            c.mlp.epochs = m.value("epochs", c.mlp.epochs);
            c.mlp.batch_size = m.value("batch_size", c.mlp.batch_size);
            c.mlp.learning_rate = m.value("learning_rate", c.mlp.learning_rate);
            c.mlp.lr_max_iterations = m.value("lr_max_iterations", c.mlp.lr_max_iterations);
            if (m.contains("optimizer"))
                c.mlp.optimizer = m["optimizer"].get<std::string>() == "sgd" ? Optimizer::sgd
                                                                             : Optimizer::adam;
        }
        if (j.contains("injection")) {
            const auto& i = j["injection"];
            c.injection.pi = i.value("pi", c.injection.pi);
            c.injection.pi_teacher = i.value("pi_teacher", c.injection.pi_teacher);
            c.injection.pi_student = i.value("pi_student", c.injection.pi_student);
            c.injection.tsnn_outer_iterations =
                i.value("tsnn_outer_iterations", c.injection.tsnn_outer_iterations);
            c.injection.tsnn_inner_epochs =
                i.value("tsnn_inner_epochs", c.injection.tsnn_inner_epochs);
        }
        if (j.contains("experiments"))
            c.experiments = j["experiments"].get<std::vector<std::string>>();
        if (j.contains("models")) c.model_kinds = j["models"].get<std::vector<std::string>>();
        c.top_k = j.value("top_k", c.top_k);
        c.master_seed = j.value("seed", c.master_seed);
        c.output_dir = j.value("output_dir", "");
        c.save_models = j.value("save_models", c.save_models);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError("invalid config value in " + path + ": " + e.what());
    }
    if (c.experiments.empty()) throw ConfigError("experiment set must be non-empty");
    if (c.model_kinds.empty()) throw ConfigError("model set must be non-empty");
    return c;
}

std::uint64_t PipelineConfig::config_hash() const { return fnv1a_bytes(config_to_json(*this).dump()); }

namespace {

FeatureMatrix rows_subset(const FeatureMatrix& fm, const std::vector<std::size_t>& rows) {
    FeatureMatrix out;
    out.m = fm.m;
    out.n = rows.size();
    out.feature_names = fm.feature_names;
    out.values.resize(out.n * out.m);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.instance_ids.push_back(fm.instance_ids[rows[i]]);
        for (std::size_t j = 0; j < fm.m; ++j) out.at(i, j) = fm.at(rows[i], j);
    }
    return out;
}

template <typename T>
std::vector<T> subset(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
    std::vector<T> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(v[i]);
    return out;
}

ExperimentOutcome run_experiment(const std::string& experiment, const FeatureMatrix& known_raw,
                                 const FeatureMatrix& chapters, const FeatureMatrix& threedigit,
                                 const LabelVector& labels, const std::vector<double>& knowledge,
                                 const Split& split, const PipelineConfig& config) {
    // assemble the raw design matrix for this experiment
    FeatureMatrix raw = known_raw;
    if (experiment == "EX-2") {
        raw.append_columns(chapters);
    } else if (experiment == "EX-3") {
        raw.append_columns(threedigit);
    } else if (experiment == "EX-4") {
        // selection is fit on the training split only, then applied everywhere
        FeatureMatrix train_codes = rows_subset(threedigit, split.train);
        LabelVector train_labels = subset(labels, split.train);
        auto cols = chi2_select_indices(train_codes, train_labels, config.top_k);
        std::sort(cols.begin(), cols.end()); // stable column order
        raw.append_columns(select_columns(threedigit, cols));
    } else if (experiment != "EX-1") {
        throw ConfigError("unknown experiment: " + experiment);
    }

    FeatureMatrix train = rows_subset(raw, split.train);
    FeatureMatrix test = rows_subset(raw, split.test);
    standardize(train, &test);
    LabelVector y_train = subset(labels, split.train);
    LabelVector y_test = subset(labels, split.test);
    std::vector<double> k_train = subset(knowledge, split.train);
    std::vector<double> k_test = subset(knowledge, split.test);

    ExperimentOutcome out;
    auto want = [&](ModelKind kind) {
        return std::find(config.model_kinds.begin(), config.model_kinds.end(),
                         std::string(to_string(kind))) != config.model_kinds.end();
    };
    auto record = [&](ModelKind kind, const std::vector<double>& train_scores,
                      const std::vector<double>& test_scores) {
        out.cells.push_back({experiment, to_string(kind), auc(train_scores, y_train),
                             auc(test_scores, y_test)});
    };
    auto seeded = [&](ModelKind kind) {
        MlpConfig mc = config.mlp;
        std::string job = experiment + "/" + to_string(kind);
        mc.seed = derive_seed(config.master_seed, job);
        out.job_seeds[job] = mc.seed;
        return mc;
    };
    auto keep = [&](ModelKind kind, TrainedModel model) {
        out.models.emplace_back(experiment + "_" + to_string(kind), std::move(model));
    };

    // LR / LR-K
    if (want(ModelKind::lr)) {
        TrainedModel lr = train_logistic(train, y_train, seeded(ModelKind::lr));
        record(ModelKind::lr, predict(lr, train), predict(lr, test));
        keep(ModelKind::lr, std::move(lr));
    }
    if (want(ModelKind::lr_k)) {
        TrainedModel lrk =
            train_logistic(train, y_train, seeded(ModelKind::lr_k), ModelKind::lr_k, &k_train);
        record(ModelKind::lr_k, predict(lrk, train, &k_train), predict(lrk, test, &k_test));
        keep(ModelKind::lr_k, std::move(lrk));
    }
    // NN / NN-K / KENN; DF-WA reuses the plain NN scores
    std::vector<double> nn_train_scores, nn_test_scores;
    if (want(ModelKind::nn) || want(ModelKind::df_wa)) {
        TrainedModel nn =
            train_mlp(train, y_train, seeded(ModelKind::nn), nullptr, nullptr, ModelKind::nn);
        nn_train_scores = predict(nn, train);
        nn_test_scores = predict(nn, test);
        if (want(ModelKind::nn)) record(ModelKind::nn, nn_train_scores, nn_test_scores);
        keep(ModelKind::nn, std::move(nn));
    }
    if (want(ModelKind::nn_k)) {
        TrainedModel nnk = train_mlp(train, y_train, seeded(ModelKind::nn_k), &k_train,
                                     &config.injection, ModelKind::nn_k);
        record(ModelKind::nn_k, predict(nnk, train, &k_train), predict(nnk, test, &k_test));
        keep(ModelKind::nn_k, std::move(nnk));
    }
    if (want(ModelKind::kenn)) {
        TrainedModel kenn = train_mlp(train, y_train, seeded(ModelKind::kenn), &k_train,
                                      &config.injection, ModelKind::kenn);
        record(ModelKind::kenn, predict(kenn, train), predict(kenn, test));
        keep(ModelKind::kenn, std::move(kenn));
    }
    // TSNN teacher + student come from one alternating run
    if (want(ModelKind::tsnn_teacher) || want(ModelKind::tsnn_student)) {
        auto [teacher, student] =
            train_tsnn(train, y_train, k_train, seeded(ModelKind::tsnn_student), config.injection);
        if (want(ModelKind::tsnn_teacher))
            record(ModelKind::tsnn_teacher, predict(teacher, train), predict(teacher, test));
        if (want(ModelKind::tsnn_student))
            record(ModelKind::tsnn_student, predict(student, train), predict(student, test));
        keep(ModelKind::tsnn_teacher, std::move(teacher));
        keep(ModelKind::tsnn_student, std::move(student));
    }
    // DF-WA: weight the data model and the knowledge score by training AUC
    if (want(ModelKind::df_wa)) {
        double auc0 = auc(nn_train_scores, y_train);
        double auc1 = auc(k_train, y_train);
        std::vector<double> weights = {auc0 / (auc0 + auc1), auc1 / (auc0 + auc1)};
        auto fused_train = fuse_weighted_average({nn_train_scores, k_train}, weights);
        auto fused_test = fuse_weighted_average({nn_test_scores, k_test}, weights);
        record(ModelKind::df_wa, fused_train, fused_test);
    }
    return out;
}

} // namespace

PipelineResult run_pipeline(const PipelineConfig& config) {
    if (config.output_dir.empty()) throw ConfigError("output_dir must be set");
    fs::create_directories(config.output_dir);
    json manifest;
    manifest["master_seed"] = config.master_seed;
    manifest["config_hash"] = config.config_hash();
    manifest["config"] = config_to_json(config);

    std::string stage = "init";
    auto fail = [&](const std::string& what) {
        manifest["failed_stage"] = stage;
        manifest["error"] = what;
        std::ofstream out(fs::path(config.output_dir) / "manifest.json");
        out << manifest.dump(2) << '\n';
    };

    try {
        stage = "load";
        LoadResult loaded = load_repository(config.table_paths);
        const EhrRepository& repo = loaded.repo;

        DiagnosisDictionary dict = config.dictionary_path.empty()
                                       ? DiagnosisDictionary::builtin_sample()
                                       : DiagnosisDictionary::load(config.dictionary_path);
        if (config.pce_coefficients_path.empty())
            throw ConfigError("pce_coefficients path must be set");
        PceCoefficientTable pce_table = PceCoefficientTable::load(config.pce_coefficients_path);
        std::vector<ChapterRange> chapter_map = config.chapter_map_path.empty()
                                                    ? default_chapter_map()
                                                    : load_chapter_map(config.chapter_map_path);

        stage = "cohort";
        InclusionResult inclusion = apply_inclusion(repo, dict, config.window);
        inclusion.funnel.write_csv((fs::path(config.output_dir) / "funnel.csv").string());
        Cohort cohort = finalize_cohort(repo, dict, inclusion.instances);
        if (cohort.instances.empty()) throw DataError("cohort is empty after inclusion criteria");

        stage = "factors";
        std::vector<KnownFactorProfile> profiles;
        profiles.reserve(cohort.instances.size());
        for (const auto& inst : cohort.instances)
            profiles.push_back(
                extract_known_factors(repo, inst, dict, config.window.observation_days));
        MissingnessReport missingness;
        std::vector<std::size_t> kept = complete_case_filter(profiles, &missingness);
        if (kept.empty()) throw DataError("no complete cases survive the missingness filter");
        std::vector<KnownFactorProfile> profiles_cc = subset(profiles, kept);
        std::vector<CohortInstance> instances_cc = subset(cohort.instances, kept);
        LabelVector labels;
        for (const auto& inst : instances_cc) labels.push_back(inst.label);
        std::size_t positives = 0;
        for (int y : labels) positives += y;
        if (positives == 0 || positives == labels.size())
            throw DataError("complete-case cohort has a single outcome class");

        stage = "pce";
        std::vector<double> knowledge;
        try {
            knowledge = score_cohort(profiles_cc, pce_table);
        } catch (const std::exception& e) {
            throw NumericalError(e.what());
        }

        stage = "features";
        FeatureMatrix known_raw = known_factor_matrix(profiles_cc);
        FeatureMatrix chapters = build_icd_features(repo, instances_cc, IcdFeatureMode::chapter22,
                                                    config.window.observation_days, chapter_map);
        FeatureMatrix threedigit = build_icd_features(repo, instances_cc, IcdFeatureMode::threedigit,
                                                      config.window.observation_days, chapter_map);

        stage = "split";
        SplitSpec split_spec = config.split;
        split_spec.seed = derive_seed(config.master_seed, "split");
        Split split = split_train_test(labels.size(), labels, split_spec);
        manifest["split_seed"] = split_spec.seed;

        stage = "train";
        std::vector<ExperimentOutcome> outcomes(config.experiments.size());
        {
            std::vector<std::thread> pool;
            std::atomic<std::size_t> next{0};
            std::vector<std::exception_ptr> errors(config.experiments.size());
            unsigned width =
                std::min<unsigned>(worker_threads(),
                                   static_cast<unsigned>(config.experiments.size()));
            auto work = [&] {
                for (std::size_t i = next.fetch_add(1); i < config.experiments.size();
                     i = next.fetch_add(1)) {
                    try {
                        outcomes[i] = run_experiment(config.experiments[i], known_raw, chapters,
                                                     threedigit, labels, knowledge, split, config);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            };
            for (unsigned t = 1; t < width; ++t) pool.emplace_back(work);
            work();
            for (auto& t : pool) t.join();
            for (auto& e : errors)
                if (e) std::rethrow_exception(e);
        }

        stage = "evaluate";
        PipelineResult result;
        result.cohort_size = cohort.instances.size();
        result.complete_cases = labels.size();
        result.positives = positives;
        result.pce_auc = auc(knowledge, labels);

        for (std::size_t i = 0; i < outcomes.size(); ++i) {
            for (const auto& cell : outcomes[i].cells) result.report.grid.push_back(cell);
            for (const auto& [job, seed] : outcomes[i].job_seeds)
                manifest["job_seeds"][job] = seed;
            if (config.save_models) {
                fs::create_directories(fs::path(config.output_dir) / "models");
                for (const auto& [name, model] : outcomes[i].models)
                    save_model(model,
                               (fs::path(config.output_dir) / "models" / (name + ".json")).string());
            }
        }

        // survival analysis over the complete-case cohort
        SurvivalData survival;
        for (const auto& inst : instances_cc) {
            survival.time_days.push_back(inst.event_or_censor_days);
            survival.event.push_back(!inst.censored);
        }
        result.report.km_curve = kaplan_meier(survival);

        // table3 from the 7 factors + chapter features (raw values)
        FeatureMatrix t3 = known_raw;
        t3.append_columns(chapters);
        std::vector<std::size_t> nonconstant;
        for (std::size_t j = 0; j < t3.m; ++j) {
            auto col = t3.column(j);
            if (std::any_of(col.begin(), col.end(), [&](double v) { return v != col[0]; }))
                nonconstant.push_back(j);
        }
        FeatureMatrix t3nc = select_columns(t3, nonconstant);
        auto pearson = pearson_univariate(t3nc, labels);
        survival.covariate_names = t3nc.feature_names;
        survival.covariates = t3nc.values;
        bool cox_ok = true;
        CoxFitResult cox;
        try {
            cox = fit_cox(survival);
        } catch (const std::exception& e) {
            cox_ok = false;
            manifest["cox_note"] = std::string("cox fit unavailable: ") + e.what();
        }
        for (std::size_t j = 0; j < t3nc.m; ++j) {
            EvalReport::Table3Row row;
            row.variable = t3nc.feature_names[j];
            row.pearson_sig = pearson[j].defined ? pearson[j].p_value
                                                 : std::numeric_limits<double>::quiet_NaN();
            row.pearson_r = pearson[j].defined ? pearson[j].r
                                               : std::numeric_limits<double>::quiet_NaN();
            if (cox_ok) {
                row.cox_sig = cox.p_value[j];
                row.exp_beta = cox.exp_beta[j];
                row.ci_lower = cox.ci_lower[j];
                row.ci_upper = cox.ci_upper[j];
            } else {
                row.cox_sig = row.exp_beta = row.ci_lower = row.ci_upper =
                    std::numeric_limits<double>::quiet_NaN();
            }
            result.report.table3.push_back(row);
        }

        std::ostringstream summary;
        summary << "cohort instances: " << result.cohort_size << "\n"
                << "complete cases: " << result.complete_cases << " (" << positives
                << " positive)\n"
                << "PCE baseline AUC: " << result.pce_auc << "\n"
                << "train/test: " << split.train.size() << "/" << split.test.size() << "\n"
                << loaded.report.to_string();
        result.report.summary = summary.str();

        stage = "report";
        render_reports(result.report, config.output_dir);

        stage = "manifest";
        for (const char* name : {"table2.csv", "table3.csv", "km_curve.csv", "summary.txt",
                                 "report.json", "funnel.csv"}) {
            fs::path p = fs::path(config.output_dir) / name;
            manifest["files"][name] = fnv1a_file(p.string());
        }
        std::ofstream out(fs::path(config.output_dir) / "manifest.json");
        out << manifest.dump(2) << '\n';
        return result;
    } catch (const ConfigError& e) {
        fail(e.what());
        throw;
    } catch (const DataError& e) {
        fail(e.what());
        throw;
    } catch (const NumericalError& e) {
        fail(e.what());
        throw;
    } catch (const std::exception& e) {
        fail(e.what());
        throw DataError("stage '" + stage + "' failed: " + e.what());
    }
}

} // namespace riskforge
