#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "norface/harness.hpp"

using namespace norface;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Small enough to train in well under a second.
ExperimentConfig micro_config(const std::string& out_dir) {
    ExperimentConfig cfg;
    cfg.task = TaskSpec::fer();
    cfg.factors.dim_identity = 4;
    cfg.factors.dim_expression = 6;
    cfg.factors.dim_pose = 2;
    cfg.factors.dim_background = 2;
    cfg.factors.sample_dim = 16;
    cfg.factors.n_identities = 8;
    cfg.split.n_train_identities = 5;
    cfg.split.n_test_identities = 3;
    cfg.n_samples = 80;
    cfg.seeds = {1, 2};
    cfg.pipeline_variant = "oracle-idn";
    cfg.normalizer.sample_dim = 16;
    cfg.normalizer.n_patches = 2;
    cfg.normalizer.model_dim = 8;
    cfg.normalizer.num_heads = 2;
    cfg.normalizer.encoder_hidden = 16;
    cfg.normalizer.decoder_hidden = 16;
    cfg.norm_train.steps = 4;
    cfg.norm_train.batch_size = 2;
    cfg.classifier.sample_dim = 16;
    cfg.classifier.feature_hidden = 8;
    cfg.classifier.feature_dim = 6;
    cfg.classifier.moe.expert_hidden = 6;
    cfg.cla_train.epochs = 2;
    cfg.cla_train.batch_size = 8;
    cfg.cla_train.lr = 1e-3;
    cfg.out_dir = out_dir;
    return cfg;
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name)
        : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string str() const { return path.string(); }
};

} // namespace

TEST_CASE("config map parses, serializes and hashes canonically") {
    ConfigMap a = ConfigMap::parse("# comment\nbeta = 0.5\nalpha = 7\nflag = true\nseeds = 1,2,3\n");
    REQUIRE(a.get_double("beta", 0) == 0.5);
    REQUIRE(a.get_u64("alpha", 0) == 7);
    REQUIRE(a.get_bool("flag", false));
    REQUIRE(a.get_u64_list("seeds", {}) == std::vector<std::uint64_t>{1, 2, 3});
    REQUIRE(a.get_string("missing", "dflt") == "dflt");

    // Canonical serialization sorts keys, so declaration order cannot change the hash.
    ConfigMap b = ConfigMap::parse("alpha = 7\nflag = true\nseeds = 1,2,3\nbeta = 0.5\n");
    REQUIRE(a.hash() == b.hash());
    b.set("alpha", std::uint64_t(8));
    REQUIRE(a.hash() != b.hash());

    REQUIRE_THROWS_AS(ConfigMap::parse("not a pair\n"), FormatError);
    REQUIRE_THROWS_AS(a.get_u64("flag", 0), FormatError);
    REQUIRE_THROWS_AS(a.get_double("seeds", 0), FormatError);
}

TEST_CASE("experiment config round-trips through the flat key-value form") {
    ExperimentConfig cfg = micro_config("x");
    cfg.cla_weights.imp = 0.002;
    cfg.norm_weights.lm = 1234.0;
    ConfigMap m = cfg.to_config_map();
    ExperimentConfig back = ExperimentConfig::from_config_map(m);
    REQUIRE(back.to_config_map().serialize() == m.serialize());
    REQUIRE(back.config_hash() == cfg.config_hash());
    REQUIRE(back.cla_weights.imp == 0.002);
    REQUIRE(back.norm_weights.lm == 1234.0);
}

TEST_CASE("default loss weights carry the published values") {
    ExperimentConfig cfg;
    ConfigMap m = cfg.to_config_map();
    REQUIRE(m.get_double("norm_weights.rec", 0) == 10.0);
    REQUIRE(m.get_double("norm_weights.perc", 0) == 5.0);
    REQUIRE(m.get_double("norm_weights.id", 0) == 10.0);
    REQUIRE(m.get_double("norm_weights.lm", 0) == 5000.0);
    REQUIRE(m.get_double("norm_weights.exp", 0) == 5000.0);
    REQUIRE(m.get_double("norm_weights.eye", 0) == 10.0);
    REQUIRE(m.get_double("cla_weights.imp", 0) == 0.001);
    REQUIRE(m.get_double("cla_weights.gl", 0) == 0.001);
    REQUIRE(m.get_u64("classifier.num_experts", 0) == 4);
    REQUIRE(m.get_u64("classifier.top_k", 0) == 2);
}

TEST_CASE("checkpoints round-trip parameter tensors exactly") {
    TempDir dir("norface_ckpt_test");
    Rng rng(301);
    NormalizerConfig ncfg;
    ncfg.sample_dim = 12;
    ncfg.n_patches = 2;
    ncfg.model_dim = 4;
    ncfg.num_heads = 2;
    ncfg.encoder_hidden = 6;
    ncfg.decoder_hidden = 6;
    NormalizerModel model(ncfg, rng);
    std::vector<std::vector<double>> original;
    for (const auto& [name, p] : model.params("m")) original.push_back(p.data());

    std::string path = dir.str() + "/normalizer.json";
    save_checkpoint(path, "normalizer", model.params("m"), {{"note", "test"}});

    for (auto& [name, p] : model.params("m"))
        for (auto& v : p.data()) v = 0.0;
    load_checkpoint(path, "normalizer", model.params("m"));
    std::size_t i = 0;
    for (const auto& [name, p] : model.params("m")) REQUIRE(p.data() == original[i++]);
    REQUIRE(checkpoint_meta(path).at("note") == "test");

    REQUIRE_THROWS_AS(load_checkpoint(path, "classifier", model.params("m")), FormatError);
}

TEST_CASE("dataset files round-trip the whole world") {
    TempDir dir("norface_ds_test");
    FactorConfig fc;
    fc.dim_identity = 4;
    fc.dim_expression = 6;
    fc.dim_pose = 2;
    fc.dim_background = 2;
    fc.sample_dim = 16;
    fc.n_identities = 8;
    auto ds = generate(fc, TaskSpec::au_detect(), 40, IdentitySplit{5, 3}, Rng(303));
    std::string path = dir.str() + "/data.jsonl";
    save_dataset(path, ds);
    SynthDataset back = load_dataset(path);

    REQUIRE(back.train.size() == ds.train.size());
    REQUIRE(back.test.size() == ds.test.size());
    for (std::size_t i = 0; i < ds.train.size(); ++i) {
        REQUIRE(back.train[i].observed == ds.train[i].observed);
        REQUIRE(back.train[i].label.values == ds.train[i].label.values);
        REQUIRE(back.train[i].identity_id == ds.train[i].identity_id);
    }
    // The reloaded world must reproduce the read-out exactly.
    Factors f = back.world.factor_readout(ds.train[0].observed);
    Factors g = ds.world.factor_readout(ds.train[0].observed);
    REQUIRE(f.expression == g.expression);

    REQUIRE_THROWS_AS(load_dataset(dir.str() + "/nope.jsonl"), FormatError);
}

TEST_CASE("stream construction honors the pipeline variants") {
    FactorConfig fc;
    fc.dim_identity = 4;
    fc.dim_expression = 6;
    fc.dim_pose = 2;
    fc.dim_background = 2;
    fc.sample_dim = 16;
    fc.n_identities = 8;
    fc.observation_noise_std = 0.0;
    auto ds = generate(fc, TaskSpec::fer(), 30, IdentitySplit{5, 3}, Rng(305));
    Factors target = fixed_target_factors(ds.world, Rng(306));

    auto plain = make_streams(ds.train, ds.world, "no-idn", target, nullptr);
    for (std::size_t i = 0; i < plain.size(); ++i) {
        REQUIRE(plain[i].normalized == ds.train[i].observed); // twin original streams
        REQUIRE(plain[i].original == ds.train[i].observed);
    }

    auto oracle = make_streams(ds.train, ds.world, "oracle-idn", target, nullptr);
    for (std::size_t i = 0; i < oracle.size(); ++i) {
        Factors f = ds.world.factor_readout(oracle[i].normalized);
        double err = 0.0;
        for (std::size_t j = 0; j < f.identity.size(); ++j)
            err += std::abs(f.identity[j] - target.identity[j]);
        REQUIRE(err < 1e-6);
    }

    REQUIRE_THROWS_AS(make_streams(ds.train, ds.world, "trained-idn", target, nullptr),
                      ConfigurationError);
    REQUIRE_THROWS_AS(make_streams(ds.train, ds.world, "bogus", target, nullptr),
                      ConfigurationError);
}

TEST_CASE("a micro experiment writes versioned, reproducible reports") {
    TempDir dir("norface_exp_test");
    ExperimentConfig cfg = micro_config(dir.str() + "/runs");
    cfg.seeds = {7};
    MetricsReport r1 = run_single_seed(cfg, 7, dir.str() + "/a");
    MetricsReport r2 = run_single_seed(cfg, 7, dir.str() + "/b");
    REQUIRE(r1.aggregate == r2.aggregate);

    std::string csv1 = slurp(dir.str() + "/a/metrics.csv");
    std::string csv2 = slurp(dir.str() + "/b/metrics.csv");
    REQUIRE(csv1 == csv2); // byte-identical reports under identical config+seed
    REQUIRE(csv1.find("format_version,1") == 0);
    REQUIRE(csv1.find("config_hash," + cfg.config_hash()) != std::string::npos);
    REQUIRE(std::filesystem::exists(dir.str() + "/a/classifier.json"));
    REQUIRE(std::filesystem::exists(dir.str() + "/a/telemetry_output_block.csv"));
}

TEST_CASE("trained-idn pipeline runs end to end at micro scale") {
    TempDir dir("norface_trained_test");
    ExperimentConfig cfg = micro_config(dir.str() + "/runs");
    cfg.pipeline_variant = "trained-idn";
    cfg.seeds = {3};
    MetricsReport r = run_single_seed(cfg, 3, dir.str() + "/run");
    REQUIRE(r.aggregate >= 0.0);
    REQUIRE(std::filesystem::exists(dir.str() + "/run/normalizer.json"));
    REQUIRE(std::filesystem::exists(dir.str() + "/run/normalizer_curves.csv"));
}

TEST_CASE("run_experiment aggregates seeds into a median summary") {
    TempDir dir("norface_summary_test");
    ExperimentConfig cfg = micro_config(dir.str() + "/runs");
    ExperimentSummary s = run_experiment(cfg);
    REQUIRE(s.per_seed.size() == 2);
    // Hand-sorted oracle for the even-count median.
    std::vector<double> agg = {s.per_seed[0].aggregate, s.per_seed[1].aggregate};
    std::sort(agg.begin(), agg.end());
    REQUIRE(s.median_aggregate == Catch::Approx(0.5 * (agg[0] + agg[1])).margin(1e-15));
    REQUIRE(s.min_aggregate == agg[0]);
    REQUIRE(s.max_aggregate == agg[1]);

    std::string summary_dir = resolve_out_dir(cfg.out_dir) + "/oracle-idn_full";
    SummaryRow row = load_summary(summary_dir);
    REQUIRE(row.task == "fer");
    REQUIRE(row.seeds.size() == 2);
    REQUIRE(row.median == s.median_aggregate);

    // Single run -> single row; comparison table renders it.
    std::string csv;
    std::string txt = report_comparison({summary_dir}, &csv);
    REQUIRE(txt.find("oracle-idn/full") != std::string::npos);
    REQUIRE(csv.find("format_version,1") == 0);
}

TEST_CASE("median matches a hand-sorted oracle on odd counts") {
    REQUIRE(detail::median({3, 1, 2}) == 2.0);
    REQUIRE(detail::median({5, 1, 4, 2, 3}) == 3.0);
    REQUIRE(detail::median({2, 1}) == 1.5);
}

TEST_CASE("report refuses mixed tasks") {
    TempDir dir("norface_mixed_test");
    ExperimentConfig fer = micro_config(dir.str() + "/fer_runs");
    fer.seeds = {1};
    run_experiment(fer);
    ExperimentConfig au = micro_config(dir.str() + "/au_runs");
    au.task = TaskSpec::au_detect();
    au.seeds = {1};
    run_experiment(au);
    REQUIRE_THROWS_AS(
        report_comparison({dir.str() + "/fer_runs/oracle-idn_full",
                           dir.str() + "/au_runs/oracle-idn_full"}),
        ConfigurationError);
}

TEST_CASE("output root env var reroutes relative directories") {
    setenv("NORFACE_OUT_ROOT", "/tmp/norface_root_test", 1);
    REQUIRE(resolve_out_dir("runs") == "/tmp/norface_root_test/runs");
    REQUIRE(resolve_out_dir("/abs/runs") == "/abs/runs");
    unsetenv("NORFACE_OUT_ROOT");
    REQUIRE(resolve_out_dir("runs") == "runs");
}

TEST_CASE("au-intensity evaluation emits icc aggregate with mse/mae extras") {
    TempDir dir("norface_intensity_test");
    ExperimentConfig cfg = micro_config(dir.str() + "/runs");
    cfg.task = TaskSpec::au_intensity();
    cfg.cla_train.lr = 1e-3;
    cfg.seeds = {11};
    MetricsReport r = run_single_seed(cfg, 11, dir.str() + "/run");
    REQUIRE(r.task == "au-intensity");
    REQUIRE(r.extra.count("mse") == 1);
    REQUIRE(r.extra.count("mae") == 1);
    REQUIRE(r.per_label.size() == 5);
    r.validate();
}
