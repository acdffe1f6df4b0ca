#include "riskforge/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace riskforge {

namespace {

constexpr double kClamp = 1e-7;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct AdamState {
    std::vector<double> m, v;
    long step = 0;
};

// Weights then biases per layer, layer-major.
std::size_t layer_weight_offset(const std::vector<int>& sizes, std::size_t layer) {
    std::size_t off = 0;
    for (std::size_t l = 0; l < layer; ++l)
        off += static_cast<std::size_t>(sizes[l]) * sizes[l + 1] + sizes[l + 1];
    return off;
}

void glorot_init(const std::vector<int>& sizes, std::vector<double>& params,
                 std::mt19937_64& rng) {
    params.assign(detail::param_count(sizes), 0.0);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        int fan_in = sizes[l], fan_out = sizes[l + 1];
        double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        std::size_t off = layer_weight_offset(sizes, l);
        for (int i = 0; i < fan_in * fan_out; ++i) params[off + i] = dist(rng);
        // biases start at zero
    }
}

// Single-example forward pass; activations[l] holds the post-activation
// values of layer l (activations[0] = input). Dropout masks, when given,
// are the inverted-scaling multipliers for each hidden layer.
double forward_example(const std::vector<int>& sizes, const std::vector<double>& params,
                       const double* x, std::vector<std::vector<double>>& activations,
                       const std::vector<std::vector<double>>* dropout) {
    std::size_t layers = sizes.size() - 1;
    activations.resize(sizes.size());
    activations[0].assign(x, x + sizes[0]);
    for (std::size_t l = 0; l < layers; ++l) {
        int in = sizes[l], out = sizes[l + 1];
        std::size_t off = layer_weight_offset(sizes, l);
        const double* W = params.data() + off;
        const double* b = params.data() + off + static_cast<std::size_t>(in) * out;
        activations[l + 1].resize(out);
        for (int o = 0; o < out; ++o) {
            double z = b[o];
            for (int i = 0; i < in; ++i) z += W[o * in + i] * activations[l][i];
            if (l + 1 < layers) {
                double a = std::tanh(z);
                if (dropout) a *= (*dropout)[l][o];
                activations[l + 1][o] = a;
            } else {
                activations[l + 1][o] = sigmoid(z);
            }
        }
    }
    return activations.back()[0];
}

// Backprop from dL/dz_out into the accumulated gradient.
void backward_example(const std::vector<int>& sizes, const std::vector<double>& params,
                      const std::vector<std::vector<double>>& activations, double dz_out,
                      const std::vector<std::vector<double>>* dropout,
                      std::vector<double>& grad) {
    std::size_t layers = sizes.size() - 1;
    std::vector<double> delta{dz_out}; // dL/dz of current layer
    for (std::size_t l = layers; l-- > 0;) {
        int in = sizes[l], out = sizes[l + 1];
        std::size_t off = layer_weight_offset(sizes, l);
        const double* W = params.data() + off;
        double* gW = grad.data() + off;
        double* gb = grad.data() + off + static_cast<std::size_t>(in) * out;
        for (int o = 0; o < out; ++o) {
            gb[o] += delta[o];
            for (int i = 0; i < in; ++i) gW[o * in + i] += delta[o] * activations[l][i];
        }
        if (l == 0) break;
        std::vector<double> prev(in, 0.0);
        for (int i = 0; i < in; ++i) {
            double s = 0;
            for (int o = 0; o < out; ++o) s += W[o * in + i] * delta[o];
            double a = activations[l][i]; // post-dropout activation
            double mask = dropout ? (*dropout)[l - 1][i] : 1.0;
            // d tanh(z) = 1 - tanh(z)^2; recover pre-dropout tanh value
            double t = mask == 0.0 ? 0.0 : a / mask;
            prev[i] = s * mask * (1.0 - t * t);
        }
        delta = std::move(prev);
    }
}

struct TwoStream {
    const std::vector<double>* t1 = nullptr;
    double w1 = 0.0;
    const std::vector<double>* t2 = nullptr;
    double w2 = 0.0;
};

// Minibatch training loop shared by every MLP kind. The two target
// streams keep the code path identical across nn / nn_k / kenn / tsnn
// phases so reduction identities hold bitwise.
std::vector<double> train_minibatch(const std::vector<int>& sizes, std::vector<double>& params,
                                    const std::vector<double>& inputs, std::size_t n,
                                    const TwoStream& streams, const MlpConfig& config, int epochs,
                                    std::mt19937_64& rng, AdamState& adam) {
    std::size_t np = params.size();
    if (adam.m.empty()) {
        adam.m.assign(np, 0.0);
        adam.v.assign(np, 0.0);
    }
    std::size_t d = sizes[0];
    std::size_t hidden = sizes.size() - 2;
    double keep = 1.0 - config.dropout_rate;
    std::vector<double> epoch_losses;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> grad(np);
    std::vector<std::vector<double>> activations;
    std::vector<std::vector<double>> masks(hidden);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            std::size_t stop = std::min(n, start + static_cast<std::size_t>(config.batch_size));
            double bsz = static_cast<double>(stop - start);
            std::fill(grad.begin(), grad.end(), 0.0);
            double batch_loss = 0.0;
            for (std::size_t k = start; k < stop; ++k) {
                std::size_t i = order[k];
                for (std::size_t l = 0; l < hidden; ++l) {
                    masks[l].resize(sizes[l + 1]);
                    for (int u = 0; u < sizes[l + 1]; ++u)
                        masks[l][u] = (config.dropout_rate > 0.0 && unit(rng) < config.dropout_rate)
                                          ? 0.0
                                          : (config.dropout_rate > 0.0 ? 1.0 / keep : 1.0);
                }
                const std::vector<std::vector<double>>* mask_ptr =
                    config.dropout_rate > 0.0 ? &masks : nullptr;
                double p = forward_example(sizes, params, inputs.data() + i * d, activations,
                                           mask_ptr);
                double t1 = (*streams.t1)[i];
                double t2 = (*streams.t2)[i];
                batch_loss += streams.w1 * cross_entropy(t1, p) + streams.w2 * cross_entropy(t2, p);
                double dz = streams.w1 * (p - t1) + streams.w2 * (p - t2);
                backward_example(sizes, params, activations, dz, mask_ptr, grad);
            }
            for (auto& g : grad) g /= bsz;
            epoch_loss += batch_loss;

            if (config.optimizer == Optimizer::adam) {
                ++adam.step;
                constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
                double c1 = 1.0 - std::pow(b1, static_cast<double>(adam.step));
                double c2 = 1.0 - std::pow(b2, static_cast<double>(adam.step));
                for (std::size_t pidx = 0; pidx < np; ++pidx) {
                    adam.m[pidx] = b1 * adam.m[pidx] + (1.0 - b1) * grad[pidx];
                    adam.v[pidx] = b2 * adam.v[pidx] + (1.0 - b2) * grad[pidx] * grad[pidx];
                    params[pidx] -= config.learning_rate * (adam.m[pidx] / c1) /
                                    (std::sqrt(adam.v[pidx] / c2) + eps);
                }
            } else {
                for (std::size_t pidx = 0; pidx < np; ++pidx)
                    params[pidx] -= config.learning_rate * grad[pidx];
            }
        }
        epoch_losses.push_back(epoch_loss / static_cast<double>(n));
        if (!std::isfinite(epoch_losses.back()))
            throw std::runtime_error("non-finite training loss at epoch " +
                                     std::to_string(epoch));
    }
    return epoch_losses;
}

std::vector<double> flatten_inputs(const FeatureMatrix& features,
                                   const std::vector<double>* knowledge) {
    std::size_t extra = knowledge ? 1 : 0;
    std::vector<double> inputs(features.n * (features.m + extra));
    for (std::size_t i = 0; i < features.n; ++i) {
        for (std::size_t j = 0; j < features.m; ++j)
            inputs[i * (features.m + extra) + j] = features.at(i, j);
        if (knowledge) inputs[i * (features.m + extra) + features.m] = (*knowledge)[i];
    }
    return inputs;
}

std::vector<double> to_soft(const LabelVector& labels) {
    std::vector<double> t(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) t[i] = static_cast<double>(labels[i]);
    return t;
}

std::vector<double> predict_all(const std::vector<int>& sizes, const std::vector<double>& params,
                                const std::vector<double>& inputs, std::size_t n) {
    std::vector<double> out(n);
    std::size_t d = sizes[0];
    for (std::size_t i = 0; i < n; ++i)
        out[i] = detail::forward_mlp(sizes, params, inputs.data() + i * d);
    return out;
}

} // namespace

namespace detail {

std::size_t param_count(const std::vector<int>& layer_sizes) {
    return layer_weight_offset(layer_sizes, layer_sizes.size() - 1);
}

double forward_mlp(const std::vector<int>& layer_sizes, const std::vector<double>& params,
                   const double* x) {
    std::vector<std::vector<double>> activations;
    return forward_example(layer_sizes, params, x, activations, nullptr);
}

double mlp_loss_and_gradient(const std::vector<int>& layer_sizes, const std::vector<double>& params,
                             const std::vector<double>& inputs, std::size_t n,
                             const std::vector<double>& targets1, double w1,
                             const std::vector<double>& targets2, double w2,
                             std::vector<double>* gradient) {
    std::size_t d = layer_sizes[0];
    if (gradient) gradient->assign(params.size(), 0.0);
    double loss = 0.0;
    std::vector<std::vector<double>> activations;
    for (std::size_t i = 0; i < n; ++i) {
        double p = forward_example(layer_sizes, params, inputs.data() + i * d, activations,
                                   nullptr);
        loss += w1 * cross_entropy(targets1[i], p) + w2 * cross_entropy(targets2[i], p);
        if (gradient) {
            double dz = w1 * (p - targets1[i]) + w2 * (p - targets2[i]);
            backward_example(layer_sizes, params, activations, dz, nullptr, *gradient);
        }
    }
    loss /= static_cast<double>(n);
    if (gradient)
        for (auto& g : *gradient) g /= static_cast<double>(n);
    return loss;
}

} // namespace detail

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::lr: return "LR";
        case ModelKind::lr_k: return "LR-K";
        case ModelKind::nn: return "NN";
        case ModelKind::nn_k: return "NN-K";
        case ModelKind::tsnn_teacher: return "TSNN-T";
        case ModelKind::tsnn_student: return "TSNN-S";
        case ModelKind::kenn: return "KENN";
        case ModelKind::df_wa: return "DF-WA";
        case ModelKind::meta_fusion: return "DF-META";
    }
    return "?";
}

ModelKind parse_model_kind(const std::string& name) {
    for (ModelKind k : {ModelKind::lr, ModelKind::lr_k, ModelKind::nn, ModelKind::nn_k,
                        ModelKind::tsnn_teacher, ModelKind::tsnn_student, ModelKind::kenn,
                        ModelKind::df_wa, ModelKind::meta_fusion})
        if (to_string(k) == name) return k;
    throw std::runtime_error("unknown model kind: " + name);
}

double cross_entropy(double target, double prediction) {
    double p = std::clamp(prediction, kClamp, 1.0 - kClamp);
    return -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
}

TrainedModel train_logistic(const FeatureMatrix& features, const LabelVector& labels,
                            const MlpConfig& config, ModelKind kind,
                            const std::vector<double>* knowledge) {
    bool with_k = kind == ModelKind::lr_k;
    if (with_k && !knowledge)
        throw std::runtime_error("train_logistic: LR-K requires a knowledge vector");
    std::vector<double> inputs = flatten_inputs(features, with_k ? knowledge : nullptr);
    std::size_t d = features.m + (with_k ? 1 : 0);
    std::vector<int> sizes = {static_cast<int>(d), 1};
    std::vector<double> targets = to_soft(labels);
    std::vector<double> zeros(features.n, 0.0);

    TrainedModel model;
    model.kind = kind;
    model.layer_sizes = sizes;
    model.params.assign(detail::param_count(sizes), 0.0); // zero init
    model.seed = config.seed;
    model.config = config;
    model.uses_knowledge_input = with_k;
    model.input_schema = features.feature_names;
    if (with_k) model.input_schema.push_back("s1");

    // full-batch gradient descent with Armijo backtracking
    std::vector<double> grad, trial;
    double loss = detail::mlp_loss_and_gradient(sizes, model.params, inputs, features.n, targets,
                                                1.0, zeros, 0.0, &grad);
    double step = 1.0;
    for (int it = 0; it < config.lr_max_iterations; ++it) {
        double gnorm2 = 0.0;
        for (double g : grad) gnorm2 += g * g;
        model.loss_trace.push_back(loss);
        if (std::sqrt(gnorm2) < config.lr_gradient_tol) break;
        step = std::min(step * 2.0, 1e6);
        while (true) {
            trial = model.params;
            for (std::size_t j = 0; j < trial.size(); ++j) trial[j] -= step * grad[j];
            double trial_loss = detail::mlp_loss_and_gradient(sizes, trial, inputs, features.n,
                                                              targets, 1.0, zeros, 0.0, nullptr);
            if (trial_loss <= loss - 1e-4 * step * gnorm2 || step < 1e-12) {
                model.params = trial;
                loss = trial_loss;
                break;
            }
            step *= 0.5;
        }
        loss = detail::mlp_loss_and_gradient(sizes, model.params, inputs, features.n, targets, 1.0,
                                             zeros, 0.0, &grad);
        if (!std::isfinite(loss)) throw std::runtime_error("train_logistic: non-finite loss");
    }
    return model;
}

TrainedModel train_mlp(const FeatureMatrix& features, const LabelVector& labels,
                       const MlpConfig& config, const std::vector<double>* knowledge,
                       const InjectionWeights* injection, ModelKind kind) {
    if ((kind == ModelKind::nn_k || kind == ModelKind::kenn) && !knowledge)
        throw std::runtime_error("train_mlp: knowledge vector required for " + to_string(kind));
    bool with_k = kind == ModelKind::nn_k;
    std::vector<double> inputs = flatten_inputs(features, with_k ? knowledge : nullptr);
    std::size_t d = features.m + (with_k ? 1 : 0);

    std::vector<int> sizes{static_cast<int>(d)};
    for (int l = 0; l < config.hidden_layers; ++l) sizes.push_back(config.hidden_units);
    sizes.push_back(1);

    std::mt19937_64 rng(config.seed);
    TrainedModel model;
    model.kind = kind;
    model.layer_sizes = sizes;
    model.seed = config.seed;
    model.config = config;
    model.uses_knowledge_input = with_k;
    model.input_schema = features.feature_names;
    if (with_k) model.input_schema.push_back("s1");
    glorot_init(sizes, model.params, rng);

    std::vector<double> targets = to_soft(labels);
    std::vector<double> zeros(features.n, 0.0);
    TwoStream streams;
    if (kind == ModelKind::kenn) {
        double pi = injection ? injection->pi : InjectionWeights{}.pi;
        streams = {&targets, 1.0 - pi, knowledge, pi};
    } else {
        streams = {&targets, 1.0, &zeros, 0.0};
    }
    AdamState adam;
    model.loss_trace = train_minibatch(sizes, model.params, inputs, features.n, streams, config,
                                       config.epochs, rng, adam);
    return model;
}

std::pair<TrainedModel, TrainedModel> train_tsnn(const FeatureMatrix& features,
                                                 const LabelVector& labels,
                                                 const std::vector<double>& knowledge,
                                                 const MlpConfig& config,
                                                 const InjectionWeights& injection) {
    std::vector<double> inputs = flatten_inputs(features, nullptr);
    std::vector<int> sizes{static_cast<int>(features.m)};
    for (int l = 0; l < config.hidden_layers; ++l) sizes.push_back(config.hidden_units);
    sizes.push_back(1);

    std::mt19937_64 rng(config.seed);
    auto make = [&](ModelKind kind) {
        TrainedModel m;
        m.kind = kind;
        m.layer_sizes = sizes;
        m.seed = config.seed;
        m.config = config;
        m.input_schema = features.feature_names;
        return m;
    };
    TrainedModel student = make(ModelKind::tsnn_student);
    TrainedModel teacher = make(ModelKind::tsnn_teacher);
    glorot_init(sizes, student.params, rng);

    std::vector<double> targets = to_soft(labels);
    std::vector<double> zeros(features.n, 0.0);
    AdamState student_adam, teacher_adam;

    if (injection.tsnn_outer_iterations == 0) {
        // degenerate case: no teacher phases, student fits labels alone
        teacher.params = student.params;
        TwoStream streams{&zeros, 0.0, &targets, injection.pi_student};
        student.loss_trace = train_minibatch(sizes, student.params, inputs, features.n, streams,
                                             config, config.epochs, rng, student_adam);
        return {teacher, student};
    }

    glorot_init(sizes, teacher.params, rng);
    for (int round = 0; round < injection.tsnn_outer_iterations; ++round) {
        // teacher: mimic the frozen student, pulled toward the knowledge score
        std::vector<double> student_out = predict_all(sizes, student.params, inputs, features.n);
        TwoStream t_streams{&student_out, 1.0, &knowledge, injection.pi_teacher};
        auto t_trace = train_minibatch(sizes, teacher.params, inputs, features.n, t_streams,
                                       config, injection.tsnn_inner_epochs, rng, teacher_adam);
        teacher.loss_trace.insert(teacher.loss_trace.end(), t_trace.begin(), t_trace.end());

        // student: mimic the frozen teacher, pulled toward the labels
        std::vector<double> teacher_out = predict_all(sizes, teacher.params, inputs, features.n);
        TwoStream s_streams{&teacher_out, 1.0, &targets, injection.pi_student};
        auto s_trace = train_minibatch(sizes, student.params, inputs, features.n, s_streams,
                                       config, injection.tsnn_inner_epochs, rng, student_adam);
        student.loss_trace.insert(student.loss_trace.end(), s_trace.begin(), s_trace.end());
    }
    return {teacher, student};
}

std::vector<double> fuse_weighted_average(const std::vector<std::vector<double>>& scores,
                                          const std::vector<double>& weights) {
    if (scores.empty() || scores.size() != weights.size())
        throw std::runtime_error("fuse_weighted_average: component/weight count mismatch");
    std::size_t n = scores.front().size();
    for (const auto& s : scores)
        if (s.size() != n) throw std::runtime_error("fuse_weighted_average: length mismatch");
    double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (std::abs(wsum - 1.0) > 1e-9)
        throw std::runtime_error("fuse_weighted_average: weights must sum to 1");
    for (double w : weights)
        if (w < 0.0 || w > 1.0)
            throw std::runtime_error("fuse_weighted_average: weights must lie in [0,1]");
    std::vector<double> fused(n, 0.0);
    for (std::size_t c = 0; c < scores.size(); ++c)
        for (std::size_t i = 0; i < n; ++i) fused[i] += weights[c] * scores[c][i];
    return fused;
}

TrainedModel train_meta_fusion(const std::vector<std::vector<double>>& scores,
                               const LabelVector& labels, const MlpConfig& config) {
    if (scores.empty()) throw std::runtime_error("train_meta_fusion: no component scores");
    FeatureMatrix fm;
    fm.n = scores.front().size();
    fm.m = scores.size();
    fm.values.resize(fm.n * fm.m);
    for (std::size_t c = 0; c < scores.size(); ++c) {
        fm.feature_names.push_back("s" + std::to_string(c));
        for (std::size_t i = 0; i < fm.n; ++i) fm.at(i, c) = scores[c][i];
    }
    for (std::size_t i = 0; i < fm.n; ++i) fm.instance_ids.push_back(std::to_string(i));
    TrainedModel model = train_logistic(fm, labels, config);
    model.kind = ModelKind::meta_fusion;
    return model;
}

std::vector<double> predict(const TrainedModel& model, const FeatureMatrix& features,
                            const std::vector<double>* knowledge) {
    std::vector<std::string> schema = features.feature_names;
    if (model.uses_knowledge_input) {
        if (!knowledge)
            throw std::runtime_error("predict: model expects a knowledge input");
        schema.push_back("s1");
    }
    if (schema != model.input_schema) {
        std::string diff;
        for (std::size_t i = 0; i < std::max(schema.size(), model.input_schema.size()); ++i) {
            std::string got = i < schema.size() ? schema[i] : "<none>";
            std::string want = i < model.input_schema.size() ? model.input_schema[i] : "<none>";
            if (got != want) diff += " [" + std::to_string(i) + ": got '" + got + "', want '" +
                                      want + "']";
        }
        throw std::runtime_error("predict: input schema mismatch:" + diff);
    }
    std::vector<double> inputs =
        flatten_inputs(features, model.uses_knowledge_input ? knowledge : nullptr);
    return predict_all(model.layer_sizes, model.params, inputs, features.n);
}

void save_model(const TrainedModel& model, const std::string& path) {
    nlohmann::json j;
    j["kind"] = to_string(model.kind);
    j["input_schema"] = model.input_schema;
    j["layer_sizes"] = model.layer_sizes;
    j["params"] = model.params;
    j["loss_trace"] = model.loss_trace;
    j["seed"] = model.seed;
    j["uses_knowledge_input"] = model.uses_knowledge_input;
    j["config"] = {{"hidden_layers", model.config.hidden_layers},
                   {"hidden_units", model.config.hidden_units},
                   {"dropout_rate", model.config.dropout_rate},
                   {"epochs", model.config.epochs},
                   {"batch_size", model.config.batch_size},
                   {"learning_rate", model.config.learning_rate},
                   {"optimizer", model.config.optimizer == Optimizer::adam ? "adam" : "sgd"},
                   {"lr_max_iterations", model.config.lr_max_iterations},
                   {"lr_gradient_tol", model.config.lr_gradient_tol}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model file: " + path);
    out << j.dump(2) << '\n';
}

TrainedModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    TrainedModel model;
    model.kind = parse_model_kind(j.at("kind").get<std::string>());
    model.input_schema = j.at("input_schema").get<std::vector<std::string>>();
    model.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
    model.params = j.at("params").get<std::vector<double>>();
    model.loss_trace = j.at("loss_trace").get<std::vector<double>>();
    model.seed = j.at("seed").get<std::uint64_t>();
    model.uses_knowledge_input = j.at("uses_knowledge_input").get<bool>();
    const auto& c = j.at("config");
    model.config.hidden_layers = c.at("hidden_layers").get<int>();
    model.config.hidden_units = c.at("hidden_units").get<int>();
    model.config.dropout_rate = c.at("dropout_rate").get<double>();
    model.config.epochs = c.at("epochs").get<int>();
    model.config.batch_size = c.at("batch_size").get<int>();
    model.config.learning_rate = c.at("learning_rate").get<double>();
    model.config.optimizer =
        c.at("optimizer").get<std::string>() == "adam" ? Optimizer::adam : Optimizer::sgd;
    model.config.lr_max_iterations = c.at("lr_max_iterations").get<int>();
    model.config.lr_gradient_tol = c.at("lr_gradient_tol").get<double>();
    return model;
}

} // namespace riskforge
