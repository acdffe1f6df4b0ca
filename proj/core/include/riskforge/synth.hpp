#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "riskforge/pce.hpp"

namespace riskforge {

// Planted-signal EHR generator. Event probability follows
// sigmoid(intercept + knowledge_signal * z_pce + data_signal * z_codes + noise)
// so knowledge injection has a truthful signal to exploit. A ground-truth
// sidecar (true probability per patient) is written for oracle tests.
struct SynthSpec {
    std::size_t n_patients = 1000;
    double event_rate = 0.35;
    double knowledge_signal_strength = 1.0;
    double data_signal_strength = 0.5;
    double noise_sd = 0.5;
    // per-factor probability that the source row is withheld
    std::map<std::string, double> missingness = {
        {"tc", 0.0}, {"hdl_c", 0.0}, {"sbp", 0.0}, {"smoker", 0.0}};
    std::uint64_t seed = 0;
};

struct SynthSummary {
    std::size_t n_patients = 0;
    std::size_t n_events = 0;
};

// Writes the six repository CSVs plus ground_truth.json into output_dir.
SynthSummary generate_synthetic(const SynthSpec& spec, const PceCoefficientTable& pce_table,
                                const std::string& output_dir);

} // namespace riskforge
