#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "norface/classifier.hpp"
#include "norface/gradcheck.hpp"
#include "norface/synthdata.hpp"

using namespace norface;

namespace {

ClassifierConfig tiny_config() {
    ClassifierConfig cfg;
    cfg.sample_dim = 10;
    cfg.feature_hidden = 8;
    cfg.feature_dim = 6;
    cfg.moe = MoEConfig{.num_experts = 4, .top_k = 2, .expert_hidden = 6, .noise_enabled = true};
    return cfg;
}

GateDecision fixed_decision(std::vector<double> probs, std::vector<double> gates) {
    GateDecision d;
    for (std::size_t j = 0; j < gates.size(); ++j)
        if (gates[j] != 0.0) d.selected.push_back(j);
    std::size_t m = gates.size();
    d.probs = Value::constant({m}, std::move(probs));
    d.gates = Value::constant({m}, std::move(gates));
    return d;
}

// FER-like toy stream set: class = sign pattern of the first coordinates.
std::vector<StreamSample> toy_fer_batch(std::size_t n, std::size_t sample_dim,
                                        std::size_t n_classes, Rng& rng) {
    std::vector<StreamSample> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t cls = i % n_classes;
        std::vector<double> base = rng.normal_vector(sample_dim, 0.3);
        base[cls] += 3.0;
        StreamSample s;
        s.normalized = base;
        s.original = base;
        s.label = Label{TaskKind::Fer, {double(cls)}};
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace

TEST_CASE("untrained classifier emits finite outputs of the task width") {
    Rng rng(101);
    for (TaskSpec task : {TaskSpec::au_detect(), TaskSpec::au_intensity(), TaskSpec::fer()}) {
        ClassifierModel model(task, tiny_config(), rng);
        Value i_n = Value::randn({10}, rng, 1.0, false);
        Value i_o = Value::randn({10}, rng, 1.0, false);
        ClassifyResult r = classify(i_n, i_o, model, nullptr);
        REQUIRE(r.output.shape() == Shape{task.n_labels});
        for (double v : r.output.data()) REQUIRE(std::isfinite(v));
        REQUIRE(r.decisions.size() == 3); // both input blocks plus the output block
    }
}

TEST_CASE("swapping the physical streams changes the output") {
    Rng rng(103);
    ClassifierModel model(TaskSpec::fer(), tiny_config(), rng);
    Value a = Value::randn({10}, rng, 1.0, false);
    Value b = Value::randn({10}, rng, 1.0, false);
    auto y_ab = classify(a, b, model, nullptr).output;
    auto y_ba = classify(b, a, model, nullptr).output;
    bool differs = false;
    for (std::size_t i = 0; i < y_ab.size(); ++i)
        differs |= std::abs(y_ab.data()[i] - y_ba.data()[i]) > 1e-12;
    REQUIRE(differs);
}

TEST_CASE("inference with noise off is deterministic") {
    Rng rng(105);
    ClassifierModel model(TaskSpec::fer(), tiny_config(), rng);
    Value a = Value::randn({10}, rng, 1.0, false);
    Value b = Value::randn({10}, rng, 1.0, false);
    auto y1 = classify(a, b, model, nullptr).output;
    auto y2 = classify(a, b, model, nullptr).output;
    REQUIRE(y1.data() == y2.data());
}

TEST_CASE("confident correct predictions drive the task loss below 1e-6") {
    TaskSpec au = TaskSpec::au_detect();
    Label bits{TaskKind::AuDetect, {1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0}};
    std::vector<double> logits(12);
    for (std::size_t j = 0; j < 12; ++j) logits[j] = bits.values[j] > 0.5 ? 20.0 : -20.0;
    ClaLossResult r = cla_loss({Value::constant({12}, logits)}, {bits}, {}, au, {});
    REQUIRE(r.raw.at("cla") < 1e-6);

    TaskSpec fer = TaskSpec::fer();
    std::vector<double> fer_logits(7, 0.0);
    fer_logits[3] = 20.0;
    ClaLossResult rf =
        cla_loss({Value::constant({7}, fer_logits)}, {Label{TaskKind::Fer, {3.0}}}, {}, fer, {});
    REQUIRE(rf.raw.at("cla") < 1e-6);
}

TEST_CASE("intensity loss is exactly zero when prediction equals target") {
    TaskSpec task = TaskSpec::au_intensity();
    Label target{TaskKind::AuIntensity, {0, 1, 2.5, 5, 3}};
    ClaLossResult r =
        cla_loss({Value::constant({5}, target.values)}, {target}, {}, task, {});
    REQUIRE(r.raw.at("cla") == 0.0);
}

TEST_CASE("cla_loss rejects out-of-range targets") {
    TaskSpec task = TaskSpec::au_intensity();
    REQUIRE_THROWS_AS(cla_loss({Value::constant({5}, {0, 0, 0, 0, 0})},
                               {Label{TaskKind::AuIntensity, {0, 1, 2, 3, 7}}}, {}, task, {}),
                      NumericDomainError);
    TaskSpec fer = TaskSpec::fer();
    REQUIRE_THROWS_AS(cla_loss({Value::constant({7}, std::vector<double>(7, 0.0))},
                               {Label{TaskKind::Fer, {9.0}}}, {}, fer, {}),
                      NumericDomainError);
}

TEST_CASE("cla_loss matches a hand-summed oracle on a 2-sample batch") {
    TaskSpec fer = TaskSpec::fer();
    ClaLossWeights w; // 0.001 / 0.001
    std::vector<double> z1 = {1, 0, -1, 0.5, 0, 0, 0};
    std::vector<double> z2 = {0, 2, 0, 0, -0.5, 0, 1};
    std::vector<Value> outputs = {Value::constant({7}, z1), Value::constant({7}, z2)};
    std::vector<Label> targets = {Label{TaskKind::Fer, {0.0}}, Label{TaskKind::Fer, {1.0}}};
    std::map<std::string, std::vector<GateDecision>> decisions;
    decisions["block"] = {fixed_decision({0.5, 0.5, 0, 0}, {0.5, 0.5, 0, 0}),
                          fixed_decision({0.25, 0.25, 0.25, 0.25}, {0.25, 0.25, 0, 0})};

    ClaLossResult r = cla_loss(outputs, targets, decisions, fer, w);

    auto ce = [](const std::vector<double>& z, std::size_t cls) {
        double mx = z[0];
        for (double v : z) mx = std::max(mx, v);
        double acc = 0.0;
        for (double v : z) acc += std::exp(v - mx);
        return mx + std::log(acc) - z[cls];
    };
    double cla = 0.5 * (ce(z1, 0) + ce(z2, 1));

    // Importance = (0.75, 0.75, 0, 0): mean 0.375, var 0.140625 -> loss 1.0.
    double imp = 0.140625 / (0.375 * 0.375);
    // Mean probs = (0.375, 0.375, 0.125, 0.125).
    auto H = [](const std::vector<double>& p) {
        double h = 0.0;
        for (double v : p)
            if (v > 0) h -= v * std::log(v);
        return h;
    };
    double global = -H({0.375, 0.375, 0.125, 0.125});
    double local = 0.5 * (H({0.5, 0.5, 0, 0}) + H({0.25, 0.25, 0.25, 0.25}));

    double expected = cla + w.imp * imp + w.gl * (global + local);
    REQUIRE(r.total.item() == Catch::Approx(expected).margin(1e-10));
    double contrib_sum = 0.0;
    for (const auto& [k, v] : r.contributions) contrib_sum += v;
    REQUIRE(r.total.item() == Catch::Approx(contrib_sum).margin(1e-10));
}

TEST_CASE("full classifier with noise off passes a gradient check") {
    Rng rng(107);
    ClassifierConfig cfg = tiny_config();
    cfg.moe.noise_enabled = false;
    ClassifierModel model(TaskSpec::fer(), cfg, rng);
    Value i_n = Value::randn({10}, rng, 1.0, false);
    Value i_o = Value::randn({10}, rng, 1.0, false);
    Label target{TaskKind::Fer, {2.0}};

    auto report = check_gradients(
        [&] {
            ClassifyResult r = classify(i_n, i_o, model, nullptr);
            std::map<std::string, std::vector<GateDecision>> decisions;
            for (auto& [name, d] : r.decisions) decisions[name].push_back(d);
            return cla_loss({r.output}, {target}, decisions, model.task, {}).total;
        },
        model.params("model"), 1e-4);
    CAPTURE(report.max_rel_err);
    REQUIRE(report.passed);
}

TEST_CASE("training with zero learning rate leaves parameters bit-unchanged") {
    Rng rng(109);
    ClassifierModel model(TaskSpec::fer(), tiny_config(), rng);
    std::vector<std::vector<double>> before;
    for (const auto& [name, p] : model.params("m")) before.push_back(p.data());
    Rng data_rng(110);
    auto data = toy_fer_batch(8, 10, 7, data_rng);
    ClassifierTrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 4;
    tc.lr = 0.0;
    Rng train_rng(111);
    train_classifier(data, model, {}, tc, train_rng);
    std::size_t i = 0;
    for (const auto& [name, p] : model.params("m")) REQUIRE(p.data() == before[i++]);
}

TEST_CASE("single-batch overfit reaches full training accuracy") {
    Rng rng(113);
    ClassifierConfig cfg = tiny_config();
    ClassifierModel model(TaskSpec::fer(), cfg, rng);
    Rng data_rng(114);
    auto data = toy_fer_batch(32, 10, 7, data_rng);
    ClassifierTrainConfig tc;
    tc.epochs = 500; // one batch per epoch
    tc.batch_size = 32;
    tc.lr = 3e-3;
    Rng train_rng(115);
    train_classifier(data, model, {}, tc, train_rng);

    std::size_t correct = 0;
    for (const auto& s : data) {
        auto out = predict(model, s.normalized, s.original);
        if (argmax_index(out) == s.label.fer_class()) ++correct;
    }
    REQUIRE(correct == data.size());
}

TEST_CASE("training metrics are bit-reproducible under a fixed seed") {
    auto run = [] {
        Rng rng(117);
        ClassifierModel model(TaskSpec::fer(), tiny_config(), rng);
        Rng data_rng(118);
        auto data = toy_fer_batch(12, 10, 7, data_rng);
        ClassifierTrainConfig tc;
        tc.epochs = 3;
        tc.batch_size = 4;
        tc.lr = 1e-3;
        Rng train_rng(119);
        auto curves = train_classifier(data, model, {}, tc, train_rng);
        std::vector<double> fingerprint;
        for (const auto& c : curves) fingerprint.push_back(c.value);
        for (const auto& s : data)
            for (double v : predict(model, s.normalized, s.original)) fingerprint.push_back(v);
        return fingerprint;
    };
    REQUIRE(run() == run());
}

TEST_CASE("argmax of FER logits is shift-invariant") {
    Rng rng(121);
    for (int i = 0; i < 50; ++i) {
        std::vector<double> z = rng.normal_vector(7, 2.0);
        std::vector<double> shifted = z;
        for (auto& v : shifted) v += 42.0;
        REQUIRE(argmax_index(z) == argmax_index(shifted));
    }
}

TEST_CASE("unselected experts receive exactly zero gradient end to end") {
    Rng rng(123);
    ClassifierConfig cfg = tiny_config();
    ClassifierModel model(TaskSpec::fer(), cfg, rng);
    Rng data_rng(124);
    auto data = toy_fer_batch(2, 10, 7, data_rng);
    ClassifierTrainConfig tc;
    tc.epochs = 10;
    tc.batch_size = 1;
    tc.lr = 1e-3;

    std::size_t steps_with_unselected = 0;
    auto observer = [&](std::size_t, const std::map<std::string, std::vector<GateDecision>>& dec) {
        auto check_block = [&](const MoEBlock& block, const std::vector<GateDecision>& batch) {
            std::vector<bool> used(block.cfg.num_experts, false);
            for (const auto& d : batch)
                for (std::size_t j : d.selected) used[j] = true;
            for (std::size_t j = 0; j < block.cfg.num_experts; ++j) {
                if (used[j]) continue;
                ++steps_with_unselected;
                for (const auto& [name, p] : block.experts[j].params("e"))
                    for (double g : p.grad()) REQUIRE(g == 0.0);
            }
        };
        check_block(model.input_normalized.moe, dec.at("input_normalized"));
        check_block(model.input_original.moe, dec.at("input_original"));
        check_block(model.output_block.moe, dec.at("output_block"));
    };
    Rng train_rng(125);
    train_classifier(data, model, {}, tc, train_rng, observer);
    REQUIRE(steps_with_unselected > 0);
}

TEST_CASE("ablation variants construct the advertised architectures") {
    Rng rng(127);
    ClassifierConfig cfg = tiny_config();
    ClassifierModel full = build_variant("full", TaskSpec::fer(), cfg, rng);
    REQUIRE(full.input_normalized.is_moe);
    REQUIRE(full.output_block.is_moe);

    ClassifierModel no_mi = build_variant("no_mi", TaskSpec::fer(), cfg, rng);
    REQUIRE_FALSE(no_mi.input_normalized.is_moe);
    REQUIRE(no_mi.output_block.is_moe);

    ClassifierModel no_mo = build_variant("no_mo", TaskSpec::fer(), cfg, rng);
    REQUIRE(no_mo.input_normalized.is_moe);
    REQUIRE_FALSE(no_mo.output_block.is_moe);

    ClassifierModel no_both = build_variant("no_both", TaskSpec::fer(), cfg, rng);
    REQUIRE_FALSE(no_both.input_normalized.is_moe);
    REQUIRE_FALSE(no_both.output_block.is_moe);

    ClassifierModel m8 = build_variant("m8", TaskSpec::fer(), cfg, rng);
    REQUIRE(m8.input_normalized.moe.cfg.num_experts == 8);
    REQUIRE(m8.input_normalized.moe.cfg.top_k == 2);

    ClassifierModel m1 = build_variant("m1", TaskSpec::fer(), cfg, rng);
    REQUIRE(m1.input_normalized.moe.cfg.num_experts == 1);
    REQUIRE(m1.input_normalized.moe.cfg.top_k == 1);
    // Forced routing: the single expert always carries gate 1.
    Value x = Value::randn({10}, rng, 1.0, false);
    auto r = classify(x, x, m1, nullptr);
    for (const auto& [name, d] : r.decisions) {
        REQUIRE(d.selected == std::vector<std::size_t>{0});
        REQUIRE(d.gates.data()[0] == 1.0);
    }

    REQUIRE_THROWS_AS(build_variant("bogus", TaskSpec::fer(), cfg, rng), ConfigurationError);
}

TEST_CASE("matched plain baseline has comparable parameter count") {
    Rng rng(129);
    ClassifierConfig cfg = tiny_config();
    auto count = [](const ParamList& ps) {
        std::size_t n = 0;
        for (const auto& [name, p] : ps) n += p.size();
        return n;
    };
    Refiner moe = Refiner::make_moe(cfg.feature_dim, cfg.moe, rng);
    Refiner plain = Refiner::make_plain(cfg.feature_dim, cfg.moe, rng);
    double a = double(count(moe.params("a")));
    double b = double(count(plain.params("b")));
    REQUIRE(std::abs(a - b) / a < 0.1);
}
