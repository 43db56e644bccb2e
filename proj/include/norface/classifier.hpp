#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "norface/moe.hpp"
#include "norface/nn.hpp"
#include "norface/task.hpp"

namespace norface {

struct ClaLossWeights {
    double imp = 0.001;
    double gl = 0.001;
};

struct ClassifierConfig {
    std::size_t sample_dim = 64;
    std::size_t feature_hidden = 48;
    std::size_t feature_dim = 24;
    MoEConfig moe{.num_experts = 4, .top_k = 2, .expert_hidden = 24, .noise_enabled = true};
    bool use_input_moe = true;
    bool use_output_moe = true;
    bool freeze_feature_extractor = false;
};

inline double base_learning_rate(const TaskSpec& task) {
    switch (task.kind) {
        case TaskKind::AuDetect: return 1e-4;
        case TaskKind::AuIntensity: return 1e-3;
        case TaskKind::Fer: return 2e-5;
    }
    return 1e-4;
}

/// Either a MoE block or a plain MLP of matched parameter count (the ablation
/// baselines replace routing, not capacity).
struct Refiner {
    bool is_moe = true;
    MoEBlock moe;
    Mlp plain;

    static std::size_t matched_hidden(std::size_t dim, const MoEConfig& cfg) {
        // MoE params: two router matrices [d x m] plus m experts (d->h->d).
        std::size_t moe_params =
            2 * dim * cfg.num_experts +
            cfg.num_experts * (dim * cfg.expert_hidden + cfg.expert_hidden +
                               cfg.expert_hidden * dim + dim);
        // Plain MLP params: H(2d + 1) + d.
        std::size_t h = (moe_params - dim + (2 * dim + 1) / 2) / (2 * dim + 1);
        return std::max<std::size_t>(1, h);
    }

    static Refiner make_moe(std::size_t dim, const MoEConfig& cfg, Rng& rng) {
        Refiner r;
        r.is_moe = true;
        r.moe = MoEBlock(dim, cfg, rng);
        return r;
    }

    static Refiner make_plain(std::size_t dim, const MoEConfig& reference, Rng& rng) {
        Refiner r;
        r.is_moe = false;
        r.plain = Mlp(dim, matched_hidden(dim, reference), dim, rng);
        return r;
    }

    std::pair<Value, std::optional<GateDecision>> forward(const Value& x, Rng* rng) const {
        if (is_moe) {
            auto [y, d] = moe.forward(x, rng);
            return {std::move(y), std::move(d)};
        }
        return {plain(x), std::nullopt};
    }

    ParamList params(const std::string& prefix) const {
        return is_moe ? moe.params(prefix) : plain.params(prefix);
    }
};

/// Stage-2 network: shared feature extractor E_f, one identity-specific input
/// block per stream (parameters never shared), an output block over the
/// concatenated representation, and a linear task head.
struct ClassifierModel {
    TaskSpec task;
    ClassifierConfig cfg;
    Mlp feature; // E_f, shared by both streams
    Refiner input_normalized;
    Refiner input_original;
    Refiner output_block;
    Linear head;

    ClassifierModel() = default;
    ClassifierModel(const TaskSpec& task_spec, const ClassifierConfig& config, Rng& rng)
        : task(task_spec), cfg(config) {
        feature = Mlp(cfg.sample_dim, cfg.feature_hidden, cfg.feature_dim, rng);
        MoEConfig out_cfg = cfg.moe;
        if (cfg.use_input_moe) {
            input_normalized = Refiner::make_moe(cfg.feature_dim, cfg.moe, rng);
            input_original = Refiner::make_moe(cfg.feature_dim, cfg.moe, rng);
        } else {
            input_normalized = Refiner::make_plain(cfg.feature_dim, cfg.moe, rng);
            input_original = Refiner::make_plain(cfg.feature_dim, cfg.moe, rng);
        }
        const std::size_t concat_dim = 2 * cfg.feature_dim;
        if (cfg.use_output_moe) {
            output_block = Refiner::make_moe(concat_dim, out_cfg, rng);
        } else {
            output_block = Refiner::make_plain(concat_dim, out_cfg, rng);
        }
        head = Linear(concat_dim, task.n_labels, rng);
    }

    ParamList params(const std::string& prefix) const {
        ParamList out = feature.params(prefix + ".feature");
        append_params(out, prefix, input_normalized.params("input_normalized"));
        append_params(out, prefix, input_original.params("input_original"));
        append_params(out, prefix, output_block.params("output_block"));
        append_params(out, prefix, head.params("head"));
        return out;
    }

    ParamList trainable_params(const std::string& prefix) const {
        if (!cfg.freeze_feature_extractor) return params(prefix);
        ParamList out;
        append_params(out, prefix, input_normalized.params("input_normalized"));
        append_params(out, prefix, input_original.params("input_original"));
        append_params(out, prefix, output_block.params("output_block"));
        append_params(out, prefix, head.params("head"));
        return out;
    }
};

struct ClassifyResult {
    Value output; // [n_labels] logits (AU detect / FER) or values (intensity)
    std::vector<std::pair<std::string, GateDecision>> decisions;
};

/// Forward pass over both streams. Pass an rng in training mode to activate
/// router noise; a null rng runs the deterministic inference path.
inline ClassifyResult classify(const Value& normalized, const Value& original,
                               const ClassifierModel& model, Rng* rng) {
    if (normalized.rank() != 1 || original.rank() != 1 ||
        normalized.shape()[0] != model.cfg.sample_dim ||
        original.shape()[0] != model.cfg.sample_dim)
        throw DimensionError("classify: streams must be [" +
                             std::to_string(model.cfg.sample_dim) + "], got " +
                             shape_str(normalized.shape()) + " and " +
                             shape_str(original.shape()));
    ClassifyResult result;
    Value e_f_n = model.feature(normalized);
    Value e_f_o = model.feature(original);
    auto [e_h_n, d_n] = model.input_normalized.forward(e_f_n, rng);
    auto [e_h_o, d_o] = model.input_original.forward(e_f_o, rng);
    if (d_n) result.decisions.emplace_back("input_normalized", *d_n);
    if (d_o) result.decisions.emplace_back("input_original", *d_o);
    Value e_c = concat({e_h_n, e_h_o});
    auto [e_r, d_r] = model.output_block.forward(e_c, rng);
    if (d_r) result.decisions.emplace_back("output_block", *d_r);
    result.output = model.head(e_r);
    return result;
}

namespace detail {

inline void validate_target(const Label& label, const TaskSpec& task) {
    if (label.kind != task.kind || label.values.empty())
        throw ConfigurationError("cla_loss: label does not match the task");
    switch (task.kind) {
        case TaskKind::AuDetect:
            if (label.values.size() != task.n_labels)
                throw DimensionError("cla_loss: expected " + std::to_string(task.n_labels) +
                                     " AU bits");
            for (double v : label.values)
                if (v != 0.0 && v != 1.0)
                    throw NumericDomainError("cla_loss: AU bit out of range: " +
                                             std::to_string(v));
            break;
        case TaskKind::AuIntensity:
            if (label.values.size() != task.n_labels)
                throw DimensionError("cla_loss: expected " + std::to_string(task.n_labels) +
                                     " intensity levels");
            for (double v : label.values)
                if (v < 0.0 || v > task.intensity_scale_max)
                    throw NumericDomainError("cla_loss: intensity out of range: " +
                                             std::to_string(v));
            break;
        case TaskKind::Fer: {
            double c = label.values[0];
            if (c < 0.0 || c >= double(task.n_labels) || c != std::floor(c))
                throw NumericDomainError("cla_loss: class index out of range: " +
                                         std::to_string(c));
            break;
        }
    }
}

// Per-sample task loss: per-label BCE (mean over labels) for AU detection,
// MSE for AU intensity, softmax cross-entropy for FER.
inline Value task_loss(const Value& output, const Label& label, const TaskSpec& task) {
    validate_target(label, task);
    switch (task.kind) {
        case TaskKind::AuDetect: {
            Value y = Value::constant({task.n_labels}, label.values);
            return mean(sub(softplus(output), mul(output, y)));
        }
        case TaskKind::AuIntensity: {
            Value y = Value::constant({task.n_labels}, label.values);
            Value d = sub(output, y);
            return mean(mul(d, d));
        }
        case TaskKind::Fer:
            return sub(logsumexp(output), pick(output, label.fer_class()));
    }
    throw ConfigurationError("cla_loss: unknown task");
}

} // namespace detail

struct ClaLossResult {
    Value total;
    std::map<std::string, double> raw;           // cla, imp, global, local
    std::map<std::string, double> contributions; // weighted; sums to total
};

/// L^cla = task loss + lambda_imp * L_imp + lambda_gl * (L_global + L_local),
/// the balancing terms summed over every MoE block's batch of decisions.
inline ClaLossResult cla_loss(const std::vector<Value>& outputs, const std::vector<Label>& targets,
                              const std::map<std::string, std::vector<GateDecision>>& decisions,
                              const TaskSpec& task, const ClaLossWeights& weights) {
    if (outputs.empty() || outputs.size() != targets.size())
        throw DimensionError("cla_loss: " + std::to_string(outputs.size()) + " outputs vs " +
                             std::to_string(targets.size()) + " targets");
    Value cla;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        Value l = detail::task_loss(outputs[i], targets[i], task);
        cla = cla.defined() ? add(cla, l) : l;
    }
    cla = mul_scalar(cla, 1.0 / static_cast<double>(outputs.size()));

    ClaLossResult result;
    Value total = cla;
    double imp_raw = 0.0, global_raw = 0.0, local_raw = 0.0;
    for (const auto& [block, batch] : decisions) {
        if (batch.empty()) continue;
        Value imp = importance_loss(batch);
        auto [g, l] = global_local_losses(batch);
        imp_raw += imp.item();
        global_raw += g.item();
        local_raw += l.item();
        total = add(total, mul_scalar(imp, weights.imp));
        total = add(total, mul_scalar(add(g, l), weights.gl));
    }
    result.raw["cla"] = cla.item();
    result.raw["imp"] = imp_raw;
    result.raw["global"] = global_raw;
    result.raw["local"] = local_raw;
    result.contributions["cla"] = cla.item();
    result.contributions["imp"] = weights.imp * imp_raw;
    result.contributions["global"] = weights.gl * global_raw;
    result.contributions["local"] = weights.gl * local_raw;
    result.total = total;
    return result;
}

/// One (normalized, original, label) training triple.
struct StreamSample {
    std::vector<double> normalized;
    std::vector<double> original;
    Label label;
};

struct ClassifierTrainConfig {
    std::size_t epochs = 40;
    std::size_t batch_size = 16;
    double lr = -1.0; // negative: use the task's base learning rate
    double beta1 = 0.9;
    double beta2 = 0.999;
};

/// Called after each backward pass, before the optimizer step.
using StepObserver = std::function<void(std::size_t step,
                                        const std::map<std::string, std::vector<GateDecision>>&)>;

struct ClassifierCurvePoint {
    std::size_t step;
    std::string term;
    double value;
};

/// Minibatch training with router noise enabled; deterministic under seed.
/// The observer, when set, sees every step's per-block decisions after the
/// backward pass and before the optimizer step.
inline std::vector<ClassifierCurvePoint> train_classifier(const std::vector<StreamSample>& data,
                                                          ClassifierModel& model,
                                                          const ClaLossWeights& weights,
                                                          const ClassifierTrainConfig& tc, Rng& rng,
                                                          const StepObserver& observer = nullptr) {
    if (data.empty()) throw EmptyInputError("train_classifier: empty dataset");
    const double lr = tc.lr >= 0.0 ? tc.lr : base_learning_rate(model.task);
    Adam opt(model.trainable_params("model"), {.lr = lr, .beta1 = tc.beta1, .beta2 = tc.beta2});

    std::vector<ClassifierCurvePoint> curves;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        // Fisher-Yates driven by the run rng keeps epochs reproducible.
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_index(i)]);
        for (std::size_t start = 0; start < data.size(); start += tc.batch_size, ++step) {
            const std::size_t stop = std::min(start + tc.batch_size, data.size());
            std::vector<Value> outputs;
            std::vector<Label> targets;
            std::map<std::string, std::vector<GateDecision>> decisions;
            for (std::size_t i = start; i < stop; ++i) {
                const StreamSample& s = data[order[i]];
                ClassifyResult r = classify(Value::constant({s.normalized.size()}, s.normalized),
                                            Value::constant({s.original.size()}, s.original),
                                            model, &rng);
                outputs.push_back(std::move(r.output));
                targets.push_back(s.label);
                for (auto& [name, d] : r.decisions) decisions[name].push_back(std::move(d));
            }
            ClaLossResult loss = cla_loss(outputs, targets, decisions, model.task, weights);
            if (!std::isfinite(loss.total.item()))
                throw EvaluationError("train_classifier: non-finite loss at step " +
                                      std::to_string(step));
            opt.zero_grad();
            loss.total.backward();
            if (observer) observer(step, decisions);
            opt.step();
            curves.push_back({step, "total", loss.total.item()});
            curves.push_back({step, "cla", loss.raw.at("cla")});
        }
    }
    return curves;
}

/// Deterministic inference outputs for one sample pair.
inline std::vector<double> predict(const ClassifierModel& model,
                                   const std::vector<double>& normalized,
                                   const std::vector<double>& original) {
    ClassifyResult r = classify(Value::constant({normalized.size()}, normalized),
                                Value::constant({original.size()}, original),
                                model, nullptr);
    return r.output.data();
}

inline std::size_t argmax_index(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i; // ties: lowest index wins
    return best;
}

/// Ablation variants: `full`, `no_mi`, `no_mo`, `no_both`, and `m<N>` for
/// N in {0,1,2,4,8} (m0 is the matched plain-MLP baseline, k = min(2, m)).
inline ClassifierModel build_variant(const std::string& variant, const TaskSpec& task,
                                     ClassifierConfig cfg, Rng& rng) {
    if (variant == "full") {
        // as configured
    } else if (variant == "no_mi") {
        cfg.use_input_moe = false;
    } else if (variant == "no_mo") {
        cfg.use_output_moe = false;
    } else if (variant == "no_both" || variant == "m0") {
        cfg.use_input_moe = false;
        cfg.use_output_moe = false;
    } else if (variant.size() > 1 && variant[0] == 'm') {
        std::size_t m = 0;
        for (std::size_t i = 1; i < variant.size(); ++i) {
            if (variant[i] < '0' || variant[i] > '9')
                throw ConfigurationError("unknown ablation variant '" + variant + "'");
            m = 10 * m + std::size_t(variant[i] - '0');
        }
        cfg.moe.num_experts = m;
        cfg.moe.top_k = std::min<std::size_t>(2, m);
    } else {
        throw ConfigurationError("unknown ablation variant '" + variant + "'");
    }
    return ClassifierModel(task, cfg, rng);
}

} // namespace norface
