#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "riskforge/features.hpp"

namespace riskforge {

enum class Optimizer { sgd, adam };

struct MlpConfig {
    int hidden_layers = 3;
    int hidden_units = 8;
    double dropout_rate = 0.5; // inverted scaling at train time
    int epochs = 50;
    int batch_size = 8;
    double learning_rate = 1e-3;
    Optimizer optimizer = Optimizer::adam;
    std::uint64_t seed = 0;
    // full-batch gradient descent settings for the logistic kinds
    int lr_max_iterations = 2000;
    double lr_gradient_tol = 1e-6;
};

struct InjectionWeights {
    double pi = 0.653;         // KENN label/knowledge mix
    double pi_teacher = 0.653; // TSNN teacher knowledge weight
    double pi_student = 1.0;   // TSNN student label weight
    int tsnn_outer_iterations = 5;
    int tsnn_inner_epochs = 10;
};

enum class ModelKind { lr, lr_k, nn, nn_k, tsnn_teacher, tsnn_student, kenn, df_wa, meta_fusion };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

struct TrainedModel {
    ModelKind kind = ModelKind::lr;
    std::vector<std::string> input_schema;
    std::vector<int> layer_sizes; // {input, hidden..., 1}; {input, 1} for logistic
    std::vector<double> params;   // flat, layer-major: W then b per layer
    std::vector<double> loss_trace;
    std::uint64_t seed = 0;
    bool uses_knowledge_input = false; // lr_k / nn_k append knowledge columns
    MlpConfig config;
};

// Clamps the prediction to [1e-7, 1 - 1e-7]; accepts soft targets.
double cross_entropy(double target, double prediction);

TrainedModel train_logistic(const FeatureMatrix& features, const LabelVector& labels,
                            const MlpConfig& config, ModelKind kind = ModelKind::lr,
                            const std::vector<double>* knowledge = nullptr);

// kind = nn | nn_k | kenn. nn_k appends the knowledge column to the input;
// kenn mixes the label loss with a soft-target loss toward the knowledge
// score: (1-pi) l(y, p) + pi l(s, p).
TrainedModel train_mlp(const FeatureMatrix& features, const LabelVector& labels,
                       const MlpConfig& config, const std::vector<double>* knowledge,
                       const InjectionWeights* injection, ModelKind kind);

// Alternating optimization: teacher fits (student mimicry + pi_T * knowledge),
// student fits (teacher mimicry + pi_S * labels). With zero outer iterations
// the student trains on labels alone.
std::pair<TrainedModel, TrainedModel> train_tsnn(const FeatureMatrix& features,
                                                 const LabelVector& labels,
                                                 const std::vector<double>& knowledge,
                                                 const MlpConfig& config,
                                                 const InjectionWeights& injection);

std::vector<double> fuse_weighted_average(const std::vector<std::vector<double>>& scores,
                                          const std::vector<double>& weights);

// Logistic meta-learner over the k+1 component scores.
TrainedModel train_meta_fusion(const std::vector<std::vector<double>>& scores,
                               const LabelVector& labels, const MlpConfig& config);

std::vector<double> predict(const TrainedModel& model, const FeatureMatrix& features,
                            const std::vector<double>* knowledge = nullptr);

void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

namespace detail {

// Full-batch two-target-stream loss and analytic gradient at arbitrary
// parameters, dropout off. Used by training and by finite-difference checks.
// Per example: w1 * ce(t1[i], p) + w2 * ce(t2[i], p), averaged over n.
double mlp_loss_and_gradient(const std::vector<int>& layer_sizes, const std::vector<double>& params,
                             const std::vector<double>& inputs, std::size_t n,
                             const std::vector<double>& targets1, double w1,
                             const std::vector<double>& targets2, double w2,
                             std::vector<double>* gradient);

std::size_t param_count(const std::vector<int>& layer_sizes);
double forward_mlp(const std::vector<int>& layer_sizes, const std::vector<double>& params,
                   const double* x);

} // namespace detail

} // namespace riskforge
