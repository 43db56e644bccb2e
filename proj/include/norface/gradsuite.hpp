#pragma once

#include <functional>
#include <string>
#include <vector>

#include "norface/attention.hpp"
#include "norface/classifier.hpp"
#include "norface/gradcheck.hpp"
#include "norface/normalizer.hpp"

namespace norface {

struct GradSuiteEntry {
    std::string name;
    double max_rel_err = 0.0;
    bool passed = false;
};

struct GradSuiteResult {
    std::vector<GradSuiteEntry> entries;
    bool passed = true;
};

/// The full differentiability suite: every primitive plus the composite
/// blocks (EMM, MoE with noise off, full classifier, full normalizer loss),
/// each verified against central finite differences on `n_seeds` random
/// draws at the given tolerance.
inline GradSuiteResult run_gradient_suite(std::size_t n_seeds = 5, double tolerance = 1e-4,
                                          const std::function<void(const GradSuiteEntry&)>& emit =
                                              nullptr) {
    GradSuiteResult result;
    auto run = [&](const std::string& name, const std::function<Value()>& builder,
                   const ParamList& params) {
        auto report = check_gradients(builder, params, tolerance);
        GradSuiteEntry entry{name, report.max_rel_err, report.passed};
        result.passed &= entry.passed;
        if (emit) emit(entry);
        result.entries.push_back(std::move(entry));
    };

    for (std::uint64_t seed = 1; seed <= n_seeds; ++seed) {
        Rng rng(seed * 7919);
        const std::size_t n = 2 + rng.uniform_index(3);
        const std::size_t m = 2 + rng.uniform_index(3);
        const std::size_t q = 2 + rng.uniform_index(3);
        const std::string tag = "[seed " + std::to_string(seed) + "] ";

        auto weight = [&rng](Shape shape) {
            return Value::constant(shape, Rng(rng.next_u64()).normal_vector(shape_numel(shape)));
        };

        {
            Value a = Value::randn({n, m}, rng), b = Value::randn({n, m}, rng);
            Value w = weight({n, m});
            run(tag + "add", [&] { return sum(mul(add(a, b), w)); }, {{"a", a}, {"b", b}});
            run(tag + "sub", [&] { return sum(mul(sub(a, b), w)); }, {{"a", a}, {"b", b}});
            run(tag + "mul", [&] { return sum(mul(mul(a, b), w)); }, {{"a", a}, {"b", b}});
        }
        {
            Value a = Value::randn({n, m}, rng);
            std::vector<double> bd = rng.normal_vector(n * m);
            for (auto& v : bd) v = 1.5 + std::abs(v);
            Value b = Value::param({n, m}, bd);
            Value w = weight({n, m});
            run(tag + "div", [&] { return sum(mul(div(a, b), w)); }, {{"a", a}, {"b", b}});
        }
        {
            Value a = Value::randn({n, m}, rng), b = Value::randn({m, q}, rng);
            Value w = weight({n, q});
            run(tag + "matmul", [&] { return sum(mul(matmul(a, b), w)); }, {{"a", a}, {"b", b}});
        }
        {
            Value a = Value::randn({n}, rng), b = Value::randn({m}, rng);
            Value w = weight({n + m});
            run(tag + "concat", [&] { return sum(mul(concat({a, b}), w)); }, {{"a", a}, {"b", b}});
        }
        {
            Value a = Value::randn({n * m + 1}, rng);
            run(tag + "mean", [&] { return mean(a); }, {{"a", a}});
            run(tag + "stddev", [&] { return stddev(a); }, {{"a", a}});
            run(tag + "l2_norm", [&] { return l2_norm(a); }, {{"a", a}});
        }
        {
            Value a = Value::randn({n, m}, rng);
            Value w = weight({n, m});
            run(tag + "relu", [&] { return sum(mul(relu(a), w)); }, {{"a", a}});
            run(tag + "gelu", [&] { return sum(mul(gelu(a), w)); }, {{"a", a}});
            run(tag + "softplus", [&] { return sum(mul(softplus(a), w)); }, {{"a", a}});
            run(tag + "softmax", [&] { return sum(mul(softmax(a), w)); }, {{"a", a}});
        }
        {
            Value x = Value::randn({n, m}, rng);
            LayerNormParams ln(m);
            Value w = weight({n, m});
            run(tag + "layer_norm", [&] { return sum(mul(layer_norm(x, ln.gain, ln.bias), w)); },
                {{"x", x}, {"gain", ln.gain}, {"bias", ln.bias}});
        }
        {
            Value a = Value::randn({m + 1}, rng), b = Value::randn({m + 1}, rng);
            run(tag + "cosine_similarity", [&] { return cosine_similarity(a, b); },
                {{"a", a}, {"b", b}});
        }
        {
            Value z = Value::randn({m + 2}, rng);
            run(tag + "entropy", [&] { return entropy(softmax(z)); }, {{"z", z}});
        }

        // Composite: Expression Merging Module on 4 random patches.
        {
            AttentionConfig cfg(8, 2);
            EmmParams p(cfg, rng);
            Value e_t = Value::randn({4, 8}, rng);
            Value e_o = Value::randn({4, 8}, rng);
            Value w = weight({4, 8});
            ParamList params = p.params("emm");
            params.emplace_back("e_t", e_t);
            params.emplace_back("e_o", e_o);
            run(tag + "emm_block",
                [&] { return sum(mul(emm_forward(e_t, e_o, p, cfg), w)); }, params);
        }

        // Composite: MoE block with noise disabled.
        {
            MoEConfig mcfg{.num_experts = 4, .top_k = 2, .expert_hidden = 6,
                           .noise_enabled = false};
            MoEBlock block(5, mcfg, rng);
            Value x = Value::randn({5}, rng);
            ParamList params = block.params("moe");
            params.emplace_back("x", x);
            run(tag + "moe_block", [&] { return sum(block.forward(x, nullptr).first); }, params);
        }

        // Composite: full classifier loss with noise disabled.
        {
            ClassifierConfig ccfg;
            ccfg.sample_dim = 10;
            ccfg.feature_hidden = 8;
            ccfg.feature_dim = 6;
            ccfg.moe = MoEConfig{.num_experts = 4, .top_k = 2, .expert_hidden = 6,
                                 .noise_enabled = false};
            ClassifierModel model(TaskSpec::fer(), ccfg, rng);
            Value i_n = Value::randn({10}, rng, 1.0, false);
            Value i_o = Value::randn({10}, rng, 1.0, false);
            Label target{TaskKind::Fer, {double(rng.uniform_index(7))}};
            run(tag + "classifier",
                [&] {
                    ClassifyResult r = classify(i_n, i_o, model, nullptr);
                    std::map<std::string, std::vector<GateDecision>> decisions;
                    for (auto& [name, d] : r.decisions) decisions[name].push_back(d);
                    return cla_loss({r.output}, {target}, decisions, model.task, {}).total;
                },
                model.params("model"));
        }

        // Composite: full normalizer loss (all seven terms) on a tiny model.
        {
            FactorConfig fc;
            fc.dim_identity = 2;
            fc.dim_expression = 3;
            fc.dim_pose = 1;
            fc.dim_background = 1;
            fc.sample_dim = 8;
            fc.observation_noise_std = 0.0;
            fc.n_identities = 6;
            fc.expression_scale = 3.0; // keep samples O(1) for FD conditioning
            fc.expression_jitter = 0.5;
            auto ds = generate(fc, TaskSpec::fer(), 6, IdentitySplit{3, 2}, Rng(seed * 131));
            EmbedderSuite suite = make_embedder_suite(ds.world, Rng(seed * 137), 8);
            NormalizerConfig ncfg;
            ncfg.sample_dim = 8;
            ncfg.n_patches = 2;
            ncfg.model_dim = 4;
            ncfg.num_heads = 2;
            ncfg.encoder_hidden = 8;
            ncfg.decoder_hidden = 8;
            NormalizerModel model(ncfg, rng);
            Value i_o = Value::constant({8}, ds.train[0].observed);
            Value i_t = Value::constant({8}, ds.train[1].observed);
            // Moderate weights keep the finite-difference conditioning sane.
            NormLossWeights weights{.rec = 2.0, .perc = 1.5, .id = 2.0,
                                    .lm = 1.2, .exp = 1.7, .eye = 2.0};
            ParamList params = model.params("model");
            append_params(params, "suite", suite.discriminator_params());
            run(tag + "normalizer_loss",
                [&] {
                    Value i_n = normalize(i_o, i_t, model);
                    return norm_loss(i_o, i_t, i_n, suite, weights, true).total;
                },
                params);
        }
    }
    return result;
}

} // namespace norface
