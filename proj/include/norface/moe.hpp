#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "norface/nn.hpp"
#include "norface/ops.hpp"

namespace norface {

struct MoEConfig {
    std::size_t num_experts = 4;   // m
    std::size_t top_k = 2;         // k
    std::size_t expert_hidden = 32;
    bool noise_enabled = false;    // training-time exploration noise

    void validate() const {
        if (top_k < 1 || top_k > num_experts)
            throw ConfigurationError("moe: need 1 <= k <= m, got k=" + std::to_string(top_k) +
                                     ", m=" + std::to_string(num_experts));
    }
};

struct RouterParams {
    Value w_gate;  // [d x m]
    Value w_noise; // [d x m]

    RouterParams() = default;
    RouterParams(std::size_t dim, std::size_t num_experts, Rng& rng) {
        double scale = 1.0 / std::sqrt(static_cast<double>(dim));
        w_gate = Value::randn({dim, num_experts}, rng, scale);
        w_noise = Value::randn({dim, num_experts}, rng, scale);
    }

    ParamList params(const std::string& prefix) const {
        return {{prefix + ".w_gate", w_gate}, {prefix + ".w_noise", w_noise}};
    }
};

/// Router output for one sample: the full softmax distribution, the chosen
/// expert indices (ascending), and the gate vector, which keeps the selected
/// probabilities unmodified and zeros the rest (no renormalization).
struct GateDecision {
    Value probs;
    std::vector<std::size_t> selected;
    Value gates;
};

/// Noisy Top-k routing: logits = x W_g + eps * softplus(x W_noise) with
/// eps ~ N(0,1) per expert iff noise is enabled and an rng is supplied.
/// Ties break toward the lowest expert index. Gradients flow through the
/// softmax probabilities; the Top-k mask itself is non-differentiable.
inline GateDecision route(const Value& x, const RouterParams& params, const MoEConfig& cfg,
                          Rng* rng) {
    cfg.validate();
    Value logits = matmul(x, params.w_gate);
    if (cfg.noise_enabled && rng) {
        Value eps = Value::constant({cfg.num_experts}, rng->normal_vector(cfg.num_experts));
        logits = add(logits, mul(eps, softplus(matmul(x, params.w_noise))));
    }
    Value probs = softmax(logits);

    std::vector<std::size_t> order(cfg.num_experts);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return probs.data()[a] > probs.data()[b];
    });
    std::vector<std::size_t> selected(order.begin(), order.begin() + cfg.top_k);
    std::sort(selected.begin(), selected.end());

    std::vector<double> mask(cfg.num_experts, 0.0);
    for (std::size_t j : selected) mask[j] = 1.0;
    Value gates = mul(probs, Value::constant({cfg.num_experts}, mask));
    return GateDecision{std::move(probs), std::move(selected), std::move(gates)};
}

/// Gate-weighted combination of the selected experts only; unselected experts
/// are never evaluated, so no gradient can reach them.
template <typename ExpertSeq>
Value moe_combine(const Value& x, const ExpertSeq& experts, const GateDecision& decision) {
    Value y;
    for (std::size_t j : decision.selected) {
        Value term = scale_by(experts[j](x), pick(decision.gates, j));
        y = y.defined() ? add(y, term) : term;
    }
    return y;
}

template <typename ExpertSeq>
std::pair<Value, GateDecision> moe_forward(const Value& x, const ExpertSeq& experts,
                                           const RouterParams& router, const MoEConfig& cfg,
                                           Rng* rng) {
    if (experts.size() != cfg.num_experts)
        throw ConfigurationError("moe: " + std::to_string(experts.size()) + " experts for m=" +
                                 std::to_string(cfg.num_experts));
    GateDecision decision = route(x, router, cfg, rng);
    Value y = moe_combine(x, experts, decision);
    return {std::move(y), std::move(decision)};
}

/// Squared coefficient of variation of the per-expert gate mass over a batch
/// (population std). Zero iff every expert carries the same importance.
inline Value importance_loss(const std::vector<GateDecision>& decisions) {
    if (decisions.empty()) throw EmptyInputError("importance_loss: empty batch");
    Value importance = decisions.front().gates;
    for (std::size_t i = 1; i < decisions.size(); ++i)
        importance = add(importance, decisions[i].gates);
    bool all_zero = true;
    for (double v : importance.data()) all_zero &= (v == 0.0);
    if (all_zero) throw DegenerateInputError("importance_loss: all-zero importance");
    Value mu = mean(importance);
    return div(variance(importance), mul(mu, mu));
}

/// Batch-level entropy losses on the full (pre-truncation) router softmax:
/// L_global = -H(mean over batch of probs), L_local = mean of per-sample H.
inline std::pair<Value, Value> global_local_losses(const std::vector<GateDecision>& decisions) {
    if (decisions.empty()) throw EmptyInputError("global_local_losses: empty batch");
    const double inv_b = 1.0 / static_cast<double>(decisions.size());
    Value prob_sum = decisions.front().probs;
    Value local_sum = entropy(decisions.front().probs);
    for (std::size_t i = 1; i < decisions.size(); ++i) {
        prob_sum = add(prob_sum, decisions[i].probs);
        local_sum = add(local_sum, entropy(decisions[i].probs));
    }
    Value global_loss = neg(entropy(mul_scalar(prob_sum, inv_b)));
    Value local_loss = mul_scalar(local_sum, inv_b);
    return {std::move(global_loss), std::move(local_loss)};
}

/// One MoE block: m expert MLPs (d -> hidden -> d) behind a noisy Top-k router.
struct MoEBlock {
    MoEConfig cfg;
    RouterParams router;
    std::vector<Mlp> experts;

    MoEBlock() = default;
    MoEBlock(std::size_t dim, MoEConfig config, Rng& rng) : cfg(config) {
        cfg.validate();
        router = RouterParams(dim, cfg.num_experts, rng);
        for (std::size_t j = 0; j < cfg.num_experts; ++j)
            experts.emplace_back(dim, cfg.expert_hidden, dim, rng);
    }

    std::pair<Value, GateDecision> forward(const Value& x, Rng* rng) const {
        return moe_forward(x, experts, router, cfg, rng);
    }

    ParamList params(const std::string& prefix) const {
        ParamList out = router.params(prefix + ".router");
        for (std::size_t j = 0; j < experts.size(); ++j)
            append_params(out, prefix, experts[j].params("expert" + std::to_string(j)));
        return out;
    }
};

/// Selection statistics per (label, expert), exportable as CSV. Mirrors the
/// router-decision heatmap: how often and how strongly each expert is picked
/// for samples carrying a given label.
class GateTelemetry {
public:
    explicit GateTelemetry(std::size_t num_experts) : num_experts_(num_experts) {}

    void record(const std::string& label, const GateDecision& decision) {
        auto& row = rows_[label];
        if (row.selections.empty()) {
            row.selections.assign(num_experts_, 0);
            row.gate_mass.assign(num_experts_, 0.0);
        }
        for (std::size_t j : decision.selected) {
            row.selections[j] += 1;
            row.gate_mass[j] += decision.gates.data()[j];
        }
        row.samples += 1;
    }

    std::string to_csv() const {
        std::ostringstream os;
        os << "format_version,1\n";
        os << "label,expert,samples,selections,selection_frequency,mean_gate\n";
        for (const auto& [label, row] : rows_) {
            for (std::size_t j = 0; j < num_experts_; ++j) {
                double freq = row.samples ? double(row.selections[j]) / double(row.samples) : 0.0;
                double mean_gate =
                    row.selections[j] ? row.gate_mass[j] / double(row.selections[j]) : 0.0;
                os << label << "," << j << "," << row.samples << "," << row.selections[j] << ","
                   << freq << "," << mean_gate << "\n";
            }
        }
        return os.str();
    }

    bool empty() const { return rows_.empty(); }

private:
    struct Row {
        std::size_t samples = 0;
        std::vector<std::size_t> selections;
        std::vector<double> gate_mass;
    };
    std::size_t num_experts_;
    std::map<std::string, Row> rows_;
};

} // namespace norface
