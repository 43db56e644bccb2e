#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "norface/gradcheck.hpp"
#include "norface/moe.hpp"

using namespace norface;

namespace {

// Decision with prescribed gate values, for loss-shape tests.
GateDecision fixed_decision(std::vector<double> probs, std::vector<double> gates) {
    GateDecision d;
    std::size_t m = gates.size();
    for (std::size_t j = 0; j < m; ++j)
        if (gates[j] != 0.0) d.selected.push_back(j);
    d.probs = Value::constant({m}, std::move(probs));
    d.gates = Value::constant({m}, std::move(gates));
    return d;
}

RouterParams router_from_logits(const std::vector<double>& logits) {
    // With x = [1], logits equal the single row of w_gate.
    RouterParams p;
    p.w_gate = Value::param({1, logits.size()}, logits);
    p.w_noise = Value::zeros({1, logits.size()}, true);
    return p;
}

} // namespace

TEST_CASE("route on equal logits is uniform with lowest-index tie-break") {
    MoEConfig cfg{.num_experts = 4, .top_k = 2, .noise_enabled = false};
    RouterParams p = router_from_logits({0, 0, 0, 0});
    GateDecision d = route(Value::constant({1}, {1.0}), p, cfg, nullptr);
    for (double v : d.probs.data()) REQUIRE(v == Catch::Approx(0.25).margin(1e-15));
    REQUIRE(d.selected == std::vector<std::size_t>{0, 1});
    REQUIRE(d.gates.data()[0] == Catch::Approx(0.25).margin(1e-15));
    REQUIRE(d.gates.data()[1] == Catch::Approx(0.25).margin(1e-15));
    REQUIRE(d.gates.data()[2] == 0.0);
    REQUIRE(d.gates.data()[3] == 0.0);
}

TEST_CASE("route keeps closed-form softmax values on the top-2") {
    MoEConfig cfg{.num_experts = 4, .top_k = 2, .noise_enabled = false};
    RouterParams p = router_from_logits({2, 1, 0, -1});
    GateDecision d = route(Value::constant({1}, {1.0}), p, cfg, nullptr);
    REQUIRE(d.selected == std::vector<std::size_t>{0, 1});
    double z = std::exp(2.0) + std::exp(1.0) + std::exp(0.0) + std::exp(-1.0);
    REQUIRE(d.gates.data()[0] == Catch::Approx(std::exp(2.0) / z).epsilon(1e-12));
    REQUIRE(d.gates.data()[1] == Catch::Approx(std::exp(1.0) / z).epsilon(1e-12));
    REQUIRE(d.gates.data()[2] == 0.0);
    REQUIRE(d.gates.data()[3] == 0.0);
}

TEST_CASE("route with noise is reproducible under a fixed seed") {
    Rng init(3);
    MoEConfig cfg{.num_experts = 4, .top_k = 2, .noise_enabled = true};
    RouterParams p(6, 4, init);
    Value x = Value::randn({6}, init, 1.0, false);
    Rng r1(1234), r2(1234);
    GateDecision d1 = route(x, p, cfg, &r1);
    GateDecision d2 = route(x, p, cfg, &r2);
    REQUIRE(d1.selected == d2.selected);
    REQUIRE(d1.probs.data() == d2.probs.data());
    REQUIRE(d1.gates.data() == d2.gates.data());
}

TEST_CASE("route rejects k > m") {
    MoEConfig cfg{.num_experts = 2, .top_k = 3};
    RouterParams p = router_from_logits({0, 0});
    REQUIRE_THROWS_AS(route(Value::constant({1}, {1.0}), p, cfg, nullptr), ConfigurationError);
}

TEST_CASE("route is shift-invariant in selection and gate values") {
    MoEConfig cfg{.num_experts = 4, .top_k = 2, .noise_enabled = false};
    std::vector<double> logits = {0.3, -0.7, 1.1, 0.2};
    std::vector<double> shifted = logits;
    for (auto& v : shifted) v += 123.0;
    GateDecision a = route(Value::constant({1}, {1.0}), router_from_logits(logits), cfg, nullptr);
    GateDecision b = route(Value::constant({1}, {1.0}), router_from_logits(shifted), cfg, nullptr);
    REQUIRE(a.selected == b.selected);
    for (std::size_t j = 0; j < 4; ++j)
        REQUIRE(std::abs(a.gates.data()[j] - b.gates.data()[j]) < 1e-12);
}

TEST_CASE("route always emits exactly k nonzero gates in [0,1] summing below 1") {
    Rng rng(5);
    MoEConfig cfg{.num_experts = 4, .top_k = 2, .noise_enabled = true};
    RouterParams p(8, 4, rng);
    for (int i = 0; i < 500; ++i) {
        Value x = Value::randn({8}, rng, 2.0, false);
        GateDecision d = route(x, p, cfg, &rng);
        std::size_t nonzero = 0;
        double total = 0.0;
        for (double g : d.gates.data()) {
            if (g != 0.0) ++nonzero;
            REQUIRE(g >= 0.0);
            REQUIRE(g <= 1.0);
            total += g;
        }
        REQUIRE(nonzero == cfg.top_k);
        REQUIRE(total <= 1.0 + 1e-12);
    }
}

TEST_CASE("moe_forward with k = m matches a dense-evaluation oracle") {
    Rng rng(7);
    MoEConfig cfg{.num_experts = 4, .top_k = 4, .expert_hidden = 8, .noise_enabled = false};
    MoEBlock block(6, cfg, rng);
    Value x = Value::constant({6}, std::vector<double>(6, 0.0)); // zero input -> equal gates
    auto [y, d] = block.forward(x, nullptr);
    REQUIRE(d.selected.size() == 4);

    // Dense oracle: combine every expert explicitly with its gate.
    std::vector<double> expected(6, 0.0);
    for (std::size_t j = 0; j < 4; ++j) {
        Value out = block.experts[j](x);
        for (std::size_t i = 0; i < 6; ++i) expected[i] += d.gates.data()[j] * out.data()[i];
    }
    for (std::size_t i = 0; i < 6; ++i)
        REQUIRE(y.data()[i] == Catch::Approx(expected[i]).margin(1e-12));
}

TEST_CASE("an identity expert under an injected one-hot gate is a pass-through") {
    Rng rng(9);
    Value x = Value::randn({5}, rng, 1.0, false);
    std::vector<std::function<Value(const Value&)>> experts = {
        [](const Value& v) { return v; },
        [](const Value& v) { return mul_scalar(v, 2.0); },
    };
    GateDecision d = fixed_decision({1, 0}, {1, 0});
    Value y = moe_combine(x, experts, d);
    REQUIRE(y.data() == x.data());
}

TEST_CASE("selected experts pass gradcheck, unselected get exactly zero grads") {
    Rng rng(11);
    MoEConfig cfg{.num_experts = 4, .top_k = 2, .expert_hidden = 6, .noise_enabled = false};
    MoEBlock block(5, cfg, rng);
    Value x = Value::randn({5}, rng, 1.0, false);

    auto [y, d] = block.forward(x, nullptr);
    sum(y).backward();

    std::vector<bool> is_selected(4, false);
    for (std::size_t j : d.selected) is_selected[j] = true;
    for (std::size_t j = 0; j < 4; ++j) {
        bool any_nonzero = false;
        for (const auto& [name, p] : block.experts[j].params("e"))
            for (double g : p.grad()) any_nonzero |= (g != 0.0);
        if (is_selected[j]) {
            REQUIRE(any_nonzero);
        } else {
            REQUIRE_FALSE(any_nonzero);
        }
    }

    // Finite differences on the selected experts' parameters.
    ParamList params;
    for (std::size_t j : d.selected)
        append_params(params, "expert" + std::to_string(j),
                      block.experts[j].params("p"));
    auto report = check_gradients([&] { return sum(block.forward(x, nullptr).first); },
                                  params, 1e-4);
    CAPTURE(report.max_rel_err);
    REQUIRE(report.passed);
}

TEST_CASE("full moe block (noise disabled) passes a gradient check") {
    Rng rng(13);
    MoEConfig cfg{.num_experts = 4, .top_k = 2, .expert_hidden = 6, .noise_enabled = false};
    MoEBlock block(5, cfg, rng);
    Value x = Value::randn({5}, rng, 1.0, true);
    ParamList params = block.params("moe");
    params.emplace_back("x", x);
    // Router + experts + input; the Top-k mask is fixed by the data, and the
    // perturbations are far too small to flip the selection here.
    auto report = check_gradients([&] { return sum(block.forward(x, nullptr).first); },
                                  params, 1e-4);
    CAPTURE(report.max_rel_err);
    REQUIRE(report.passed);
}

TEST_CASE("moe forward is deterministic with noise disabled") {
    Rng rng(15);
    MoEConfig cfg{.num_experts = 4, .top_k = 2, .expert_hidden = 6, .noise_enabled = false};
    MoEBlock block(5, cfg, rng);
    Value x = Value::randn({5}, rng, 1.0, false);
    auto [y1, d1] = block.forward(x, nullptr);
    auto [y2, d2] = block.forward(x, nullptr);
    REQUIRE(y1.data() == y2.data());
    REQUIRE(d1.selected == d2.selected);
}

TEST_CASE("importance loss on balanced and hand-computed batches") {
    // Per-expert importance (1,1,1,1): perfectly balanced.
    std::vector<GateDecision> balanced = {
        fixed_decision({0.25, 0.25, 0.25, 0.25}, {0.5, 0.5, 0, 0}),
        fixed_decision({0.25, 0.25, 0.25, 0.25}, {0.5, 0.5, 0, 0}),
        fixed_decision({0.25, 0.25, 0.25, 0.25}, {0, 0, 1.0, 1.0}),
    };
    REQUIRE(importance_loss(balanced).item() == Catch::Approx(0.0).margin(1e-15));

    // Importance (3,1,0,0): mean 1, population variance 1.5 -> loss 1.5.
    std::vector<GateDecision> skewed = {
        fixed_decision({0.5, 0.5, 0, 0}, {2, 1, 0, 0}),
        fixed_decision({0.5, 0.5, 0, 0}, {1, 0, 0, 0}),
    };
    REQUIRE(importance_loss(skewed).item() == Catch::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("importance loss is invariant to positive gate scaling") {
    Rng rng(17);
    std::vector<GateDecision> batch, scaled;
    for (int i = 0; i < 6; ++i) {
        std::vector<double> g(4, 0.0);
        g[rng.uniform_index(4)] = rng.uniform(0.1, 1.0);
        g[rng.uniform_index(4)] = rng.uniform(0.1, 1.0);
        std::vector<double> g2 = g;
        for (auto& v : g2) v *= 7.5;
        batch.push_back(fixed_decision({0.25, 0.25, 0.25, 0.25}, g));
        scaled.push_back(fixed_decision({0.25, 0.25, 0.25, 0.25}, g2));
    }
    REQUIRE(importance_loss(batch).item() ==
            Catch::Approx(importance_loss(scaled).item()).epsilon(1e-12));
}

TEST_CASE("importance loss error cases") {
    REQUIRE_THROWS_AS(importance_loss({}), EmptyInputError);
    std::vector<GateDecision> zero = {fixed_decision({0.25, 0.25, 0.25, 0.25}, {0, 0, 0, 0})};
    REQUIRE_THROWS_AS(importance_loss(zero), DegenerateInputError);
}

TEST_CASE("global and local entropy losses on constructed batches") {
    const double ln4 = std::log(4.0), ln2 = std::log(2.0);

    std::vector<GateDecision> uniform(3, fixed_decision({0.25, 0.25, 0.25, 0.25}, {0.25, 0.25, 0, 0}));
    auto [g_u, l_u] = global_local_losses(uniform);
    REQUIRE(g_u.item() == Catch::Approx(-ln4).epsilon(1e-12));
    REQUIRE(l_u.item() == Catch::Approx(ln4).epsilon(1e-12));

    std::vector<GateDecision> onehot(4, fixed_decision({1, 0, 0, 0}, {1, 0, 0, 0}));
    auto [g_o, l_o] = global_local_losses(onehot);
    REQUIRE(g_o.item() == 0.0);
    REQUIRE(l_o.item() == 0.0);

    std::vector<GateDecision> two = {fixed_decision({1, 0, 0, 0}, {1, 0, 0, 0}),
                                     fixed_decision({0, 1, 0, 0}, {0, 1, 0, 0})};
    auto [g_t, l_t] = global_local_losses(two);
    REQUIRE(g_t.item() == Catch::Approx(-ln2).epsilon(1e-12));
    REQUIRE(l_t.item() == 0.0);
}

TEST_CASE("gate telemetry accumulates selection frequencies") {
    GateTelemetry tel(4);
    tel.record("au1", fixed_decision({0.5, 0.5, 0, 0}, {0.5, 0.5, 0, 0}));
    tel.record("au1", fixed_decision({0.5, 0.5, 0, 0}, {0.5, 0, 0.4, 0}));
    tel.record("happy", fixed_decision({0, 0, 0.5, 0.5}, {0, 0, 0.5, 0.5}));
    std::string csv = tel.to_csv();
    REQUIRE(csv.find("format_version,1") != std::string::npos);
    REQUIRE(csv.find("au1,0,2,2,1,0.5") != std::string::npos);
    REQUIRE(csv.find("happy,3,1,1,1,0.5") != std::string::npos);
}
