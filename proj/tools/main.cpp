// Command-line frontend for the risk-modeling pipeline.
//
// Subcommands mirror the pipeline stages: etl, cohort, features, score-pce,
// train, evaluate, run-all, plus the synthetic-data generator (synth) and a
// batch scorer for saved models (score).
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "riskforge/csv.hpp"
#include "riskforge/pipeline.hpp"
#include "riskforge/synth.hpp"

namespace fs = std::filesystem;
using namespace riskforge;

namespace {

// Flags shared by the pipeline-stage subcommands. Flag values override the
// JSON config when given.
struct CommonOpts {
    std::string config_path;
    std::string data_dir;
    std::string dictionary;
    std::string pce;
    std::string chapters;
    std::string out;
    std::vector<std::string> experiments;
    std::vector<std::string> models;
    std::uint64_t seed = 0;
    bool seed_given = false;
    long top_k = -1;
    long epochs = -1;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("-c,--config", o.config_path, "pipeline config (JSON)");
    cmd->add_option("--data-dir", o.data_dir, "directory with the six input tables");
    cmd->add_option("--dictionary", o.dictionary, "diagnosis dictionary JSON");
    cmd->add_option("--pce", o.pce, "risk-equation coefficient JSON");
    cmd->add_option("--chapters", o.chapters, "ICD chapter map CSV");
    cmd->add_option("-o,--out", o.out, "output directory");
    cmd->add_option("--experiments", o.experiments, "experiment subset (EX-1..EX-4)");
    cmd->add_option("--models", o.models, "model subset (LR, NN-K, ...)");
    cmd->add_option("--top-k", o.top_k, "chi-squared selection size for EX-4");
    cmd->add_option("--epochs", o.epochs, "training epochs");
    cmd->add_option("--seed", o.seed, "master seed")->each([&](const std::string&) {
        o.seed_given = true;
    });
}

PipelineConfig build_config(const CommonOpts& o) {
    PipelineConfig cfg;
    if (!o.config_path.empty()) cfg = PipelineConfig::from_json_file(o.config_path);
    if (!o.data_dir.empty())
        for (const char* t : {"patient", "encounter", "labtest", "followup", "medication",
                              "organization"})
            cfg.table_paths[t] = (fs::path(o.data_dir) / (std::string(t) + ".csv")).string();
    if (!o.dictionary.empty()) cfg.dictionary_path = o.dictionary;
    if (!o.pce.empty()) cfg.pce_coefficients_path = o.pce;
    if (!o.chapters.empty()) cfg.chapter_map_path = o.chapters;
    if (!o.out.empty()) cfg.output_dir = o.out;
    if (!o.experiments.empty()) cfg.experiments = o.experiments;
    if (!o.models.empty()) cfg.model_kinds = o.models;
    if (o.top_k >= 0) cfg.top_k = static_cast<std::size_t>(o.top_k);
    if (o.epochs >= 0) cfg.mlp.epochs = static_cast<std::size_t>(o.epochs);
    if (o.seed_given) cfg.master_seed = o.seed;
    if (cfg.table_paths.empty()) throw ConfigError("no input tables given (--data-dir or config)");
    return cfg;
}

// Shared front half of the pipeline, for the stage subcommands.
struct StageContext {
    LoadResult loaded;
    DiagnosisDictionary dict;
    Cohort cohort;
    std::vector<KnownFactorProfile> profiles_cc;
    std::vector<CohortInstance> instances_cc;
    FunnelReport funnel;
};

StageContext build_stage_context(const PipelineConfig& cfg) {
    StageContext ctx;
    ctx.loaded = load_repository(cfg.table_paths);
    ctx.dict = cfg.dictionary_path.empty() ? DiagnosisDictionary::builtin_sample()
                                           : DiagnosisDictionary::load(cfg.dictionary_path);
    InclusionResult inc = apply_inclusion(ctx.loaded.repo, ctx.dict, cfg.window);
    ctx.funnel = inc.funnel;
    ctx.cohort = finalize_cohort(ctx.loaded.repo, ctx.dict, inc.instances);
    std::vector<KnownFactorProfile> profiles;
    for (const auto& inst : ctx.cohort.instances)
        profiles.push_back(
            extract_known_factors(ctx.loaded.repo, inst, ctx.dict, cfg.window.observation_days));
    for (std::size_t i : complete_case_filter(profiles)) {
        ctx.profiles_cc.push_back(profiles[i]);
        ctx.instances_cc.push_back(ctx.cohort.instances[i]);
    }
    return ctx;
}

void write_cohort_csv(const Cohort& cohort, const std::string& path) {
    csv::Table t;
    t.header = {"patient_id", "index_date", "label", "event_or_censor_days", "censored", "group"};
    for (const auto& inst : cohort.instances) {
        const char* group = inst.group == CohortGroup::ascvd_after    ? "ascvd_after"
                            : inst.group == CohortGroup::ascvd_before ? "ascvd_before"
                                                                      : "ascvd_never";
        t.rows.push_back({inst.patient_id, inst.index_date.to_string(),
                          std::to_string(inst.label), std::to_string(inst.event_or_censor_days),
                          inst.censored ? "1" : "0", group});
    }
    csv::write_file(path, t);
}

int cmd_etl(const CommonOpts& o) {
    PipelineConfig cfg = build_config(o);
    if (cfg.output_dir.empty()) throw ConfigError("etl needs --out");
    LoadResult loaded = load_repository(cfg.table_paths);
    fs::create_directories(cfg.output_dir);
    export_repository(loaded.repo, cfg.output_dir);
    IcdAudit audit = audit_icd_validity(loaded.repo, {});
    std::cout << loaded.report.to_string();
    if (audit.defined)
        std::printf("icd_code: null rate %.4f, structurally valid among non-null %.4f\n",
                    audit.null_rate, audit.valid_rate_among_nonnull);
    return 0;
}

int cmd_cohort(const CommonOpts& o) {
    PipelineConfig cfg = build_config(o);
    if (cfg.output_dir.empty()) throw ConfigError("cohort needs --out");
    StageContext ctx = build_stage_context(cfg);
    fs::create_directories(cfg.output_dir);
    ctx.funnel.write_csv((fs::path(cfg.output_dir) / "funnel.csv").string());
    write_cohort_csv(ctx.cohort, (fs::path(cfg.output_dir) / "cohort.csv").string());
    std::cout << "cohort instances: " << ctx.cohort.instances.size()
              << " (complete cases: " << ctx.instances_cc.size() << ")\n";
    return 0;
}

int cmd_features(const CommonOpts& o) {
    PipelineConfig cfg = build_config(o);
    if (cfg.output_dir.empty()) throw ConfigError("features needs --out");
    StageContext ctx = build_stage_context(cfg);
    if (ctx.instances_cc.empty()) throw DataError("no complete cases");
    auto chapter_map =
        cfg.chapter_map_path.empty() ? default_chapter_map() : load_chapter_map(cfg.chapter_map_path);
    fs::create_directories(cfg.output_dir);
    known_factor_matrix(ctx.profiles_cc)
        .write_csv((fs::path(cfg.output_dir) / "known_factors.csv").string());
    build_icd_features(ctx.loaded.repo, ctx.instances_cc, IcdFeatureMode::chapter22,
                       cfg.window.observation_days, chapter_map)
        .write_csv((fs::path(cfg.output_dir) / "chapter_features.csv").string());
    build_icd_features(ctx.loaded.repo, ctx.instances_cc, IcdFeatureMode::threedigit,
                       cfg.window.observation_days, chapter_map)
        .write_csv((fs::path(cfg.output_dir) / "code_features.csv").string());
    std::cout << "feature matrices written for " << ctx.instances_cc.size() << " instances\n";
    return 0;
}

int cmd_score_pce(const CommonOpts& o) {
    PipelineConfig cfg = build_config(o);
    if (cfg.output_dir.empty()) throw ConfigError("score-pce needs --out");
    if (cfg.pce_coefficients_path.empty()) throw ConfigError("score-pce needs --pce");
    StageContext ctx = build_stage_context(cfg);
    PceCoefficientTable table = PceCoefficientTable::load(cfg.pce_coefficients_path);
    std::vector<double> scores = score_cohort(ctx.profiles_cc, table);
    fs::create_directories(cfg.output_dir);
    csv::Table out;
    out.header = {"instance_id", "pce_risk"};
    char buf[32];
    for (std::size_t i = 0; i < scores.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.10g", scores[i]);
        out.rows.push_back({ctx.instances_cc[i].patient_id, buf});
    }
    csv::write_file((fs::path(cfg.output_dir) / "pce_scores.csv").string(), out);
    std::cout << "scored " << scores.size() << " complete cases\n";
    return 0;
}

int cmd_run(const CommonOpts& o, bool require_seed, bool save_models) {
    if (require_seed && !o.seed_given)
        throw ConfigError("--seed is required for run-all");
    PipelineConfig cfg = build_config(o);
    cfg.save_models = save_models || cfg.save_models;
    if (cfg.output_dir.empty()) throw ConfigError("an output directory is required");
    if (require_seed) {
        // run directory named by timestamp + config hash
        auto now = std::chrono::system_clock::now();
        std::time_t tt = std::chrono::system_clock::to_time_t(now);
        char stamp[32];
        std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%S", std::gmtime(&tt));
        char name[64];
        std::snprintf(name, sizeof name, "run-%s-%016llx", stamp,
                      static_cast<unsigned long long>(cfg.config_hash()));
        cfg.output_dir = (fs::path(cfg.output_dir) / name).string();
    }
    PipelineResult result = run_pipeline(cfg);
    std::cout << result.report.summary << "artifacts: " << cfg.output_dir << "\n";
    return 0;
}

int cmd_synth(const SynthSpec& spec, const std::string& pce_path, const std::string& out) {
    if (out.empty()) throw ConfigError("synth needs --out");
    if (pce_path.empty()) throw ConfigError("synth needs --pce");
    if (spec.n_patients < 10) throw ConfigError("n_patients must be >= 10");
    PceCoefficientTable table = PceCoefficientTable::load(pce_path);
    SynthSummary s = generate_synthetic(spec, table, out);
    std::cout << "generated " << s.n_patients << " patients, " << s.n_events << " events -> "
              << out << "\n";
    return 0;
}

int cmd_score(const std::string& model_path, const std::string& input_path,
              const std::string& out_path) {
    TrainedModel model = load_model(model_path);
    csv::Table in = csv::read_file(input_path);
    if (in.header.empty() || in.header[0] != "instance_id")
        throw DataError("input must start with an instance_id column");
    FeatureMatrix fm;
    fm.feature_names.assign(in.header.begin() + 1, in.header.end());
    fm.m = fm.feature_names.size();
    fm.n = in.rows.size();
    for (const auto& row : in.rows) {
        if (row.size() != in.header.size()) throw DataError("ragged input row");
        fm.instance_ids.push_back(row[0]);
        for (std::size_t j = 1; j < row.size(); ++j) fm.values.push_back(std::stod(row[j]));
    }
    // knowledge-input models read their score column from the matrix itself
    std::vector<double> scores = predict(model, fm);
    csv::Table out;
    out.header = {"instance_id", "prediction"};
    char buf[32];
    for (std::size_t i = 0; i < scores.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.12g", scores[i]);
        out.rows.push_back({fm.instance_ids[i], buf});
    }
    csv::write_file(out_path, out);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"knowledge-enhanced chronic-disease risk modeling"};
    app.require_subcommand(1);

    CommonOpts etl_o, cohort_o, features_o, pce_o, train_o, eval_o, run_o;
    auto* etl = app.add_subcommand("etl", "load, validate, and re-export the six tables");
    add_common(etl, etl_o);
    auto* cohort = app.add_subcommand("cohort", "apply inclusion criteria; write funnel + cohort");
    add_common(cohort, cohort_o);
    auto* features = app.add_subcommand("features", "emit factor and ICD feature matrices");
    add_common(features, features_o);
    auto* scorepce = app.add_subcommand("score-pce", "risk-equation scores for complete cases");
    add_common(scorepce, pce_o);
    auto* train = app.add_subcommand("train", "run the grid and save model files");
    add_common(train, train_o);
    auto* evaluate = app.add_subcommand("evaluate", "run the grid and emit reports");
    add_common(evaluate, eval_o);
    auto* runall = app.add_subcommand("run-all", "full pipeline into a stamped run directory");
    add_common(runall, run_o);

    SynthSpec synth_spec;
    std::string synth_pce, synth_out;
    std::vector<std::string> synth_missing;
    auto* synth = app.add_subcommand("synth", "generate a planted-signal repository");
    synth->add_option("-n,--n-patients", synth_spec.n_patients, "patient count (>= 10)");
    synth->add_option("--event-rate", synth_spec.event_rate, "base event rate");
    synth->add_option("--knowledge-signal", synth_spec.knowledge_signal_strength,
                      "risk-score signal strength (>= 0)");
    synth->add_option("--data-signal", synth_spec.data_signal_strength,
                      "planted-code signal strength (>= 0)");
    synth->add_option("--noise-sd", synth_spec.noise_sd, "latent noise stddev");
    synth->add_option("--missing", synth_missing, "factor=rate, e.g. tc=0.1 (repeatable)");
    synth->add_option("--seed", synth_spec.seed, "generator seed");
    synth->add_option("--pce", synth_pce, "risk-equation coefficient JSON")->required();
    synth->add_option("-o,--out", synth_out, "output directory")->required();

    std::string score_model, score_input, score_out;
    auto* score = app.add_subcommand("score", "apply a saved model to a feature CSV");
    score->add_option("--model", score_model, "model JSON")->required();
    score->add_option("--input", score_input, "feature CSV (instance_id first)")->required();
    score->add_option("-o,--out", score_out, "predictions CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*etl) return cmd_etl(etl_o);
        if (*cohort) return cmd_cohort(cohort_o);
        if (*features) return cmd_features(features_o);
        if (*scorepce) return cmd_score_pce(pce_o);
        if (*train) return cmd_run(train_o, false, true);
        if (*evaluate) return cmd_run(eval_o, false, false);
        if (*runall) return cmd_run(run_o, true, false);
        if (*synth) {
            for (const auto& kv : synth_missing) {
                auto eq = kv.find('=');
                if (eq == std::string::npos) throw ConfigError("--missing expects factor=rate");
                double rate = std::stod(kv.substr(eq + 1));
                if (rate < 0.0 || rate > 1.0) throw ConfigError("missingness rate outside [0,1]");
                synth_spec.missingness[kv.substr(0, eq)] = rate;
            }
            return cmd_synth(synth_spec, synth_pce, synth_out);
        }
        if (*score) return cmd_score(score_model, score_input, score_out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
