#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "riskforge/cohort.hpp"
#include "riskforge/eval.hpp"
#include "riskforge/model.hpp"
#include "riskforge/pce.hpp"

namespace riskforge {

// CLI exit-code taxonomy: 2 config, 3 data, 4 numerical.
struct ConfigError : std::runtime_error { using std::runtime_error::runtime_error; };
struct DataError : std::runtime_error { using std::runtime_error::runtime_error; };
struct NumericalError : std::runtime_error { using std::runtime_error::runtime_error; };

struct PipelineConfig {
    std::map<std::string, std::string> table_paths; // patient, encounter, ...
    std::string dictionary_path;                    // empty -> builtin sample
    std::string pce_coefficients_path;
    std::string chapter_map_path;                   // empty -> builtin map
    StudyWindow window{Date(2012, 8, 1), Date(2016, 3, 31), 360, 365};
    SplitSpec split;
    MlpConfig mlp;
    InjectionWeights injection;
    std::vector<std::string> experiments = {"EX-1", "EX-2", "EX-3", "EX-4"};
    std::vector<std::string> model_kinds = {"LR",     "LR-K",   "NN",   "NN-K",
                                            "TSNN-T", "TSNN-S", "KENN", "DF-WA"};
    std::size_t top_k = 20;
    std::uint64_t master_seed = 0;
    std::string output_dir;
    bool save_models = false;

    static PipelineConfig from_json_file(const std::string& path);
    std::uint64_t config_hash() const;
};

struct PipelineResult {
    EvalReport report;
    std::size_t cohort_size = 0;
    std::size_t complete_cases = 0;
    std::size_t positives = 0;
    double pce_auc = 0.0; // over complete cases
};

// load -> cohort -> factors -> complete-case -> PCE scores -> experiment
// grid -> reports. Writes artifacts plus manifest.json into output_dir;
// on stage failure a partial manifest names the failed stage.
PipelineResult run_pipeline(const PipelineConfig& config);

// Per-job seed derivation (FNV-1a of the job name, xored with the master).
std::uint64_t derive_seed(std::uint64_t master_seed, const std::string& job_name);

// Worker-pool width: RISKFORGE_THREADS env var, clamped to [1, hw].
unsigned worker_threads();

} // namespace riskforge
