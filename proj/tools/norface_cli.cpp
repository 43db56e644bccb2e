// Command-line front end: data generation, two-stage training, evaluation,
// ablations, gradient verification and report rendering.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "norface/gradsuite.hpp"
#include "norface/harness.hpp"

using namespace norface;

namespace {

ExperimentConfig load_experiment_config(const std::string& config_path, const std::string& task,
                                        std::uint64_t seed_override, bool has_seed) {
    ExperimentConfig cfg;
    if (!config_path.empty()) cfg = ExperimentConfig::from_config_map(ConfigMap::load(config_path));
    if (!task.empty()) cfg.task = TaskSpec::from_name(task);
    if (has_seed) cfg.seeds = {seed_override};
    return cfg;
}

SynthDataset dataset_for(const ExperimentConfig& cfg, const std::string& data_path,
                         std::uint64_t seed) {
    if (!data_path.empty()) return load_dataset(data_path);
    return generate(cfg.factors, cfg.task, cfg.n_samples, cfg.split, Rng(seed));
}

int cmd_gradcheck(std::size_t seeds, double tolerance) {
    GradSuiteResult result = run_gradient_suite(seeds, tolerance, [](const GradSuiteEntry& e) {
        std::printf("%-32s max_rel_err %.3e  %s\n", e.name.c_str(), e.max_rel_err,
                    e.passed ? "ok" : "FAIL");
    });
    std::printf("gradient suite: %zu checks, %s\n", result.entries.size(),
                result.passed ? "all passed" : "FAILURES");
    return result.passed ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"norface: identity-normalized expression analysis at vector scale"};
    app.require_subcommand(1);

    std::string config_path, task, out, data_path, variant, normalizer_ckpt, classifier_ckpt;
    std::uint64_t seed = 0;
    bool has_seed = false;
    std::size_t gc_seeds = 5;
    double gc_tolerance = 1e-4;

    auto add_common = [&](CLI::App* cmd, bool with_seed = true) {
        cmd->add_option("--config", config_path, "experiment config file");
        cmd->add_option("--task", task, "task: au-detect, au-intensity or fer");
        if (with_seed)
            cmd->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
                has_seed = true;
            });
    };

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "run the full gradient suite");
    gradcheck->add_option("--seeds", gc_seeds, "random seeds per check");
    gradcheck->add_option("--tolerance", gc_tolerance, "max relative error");

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    add_common(gen);
    gen->add_option("--out", out, "output dataset file (JSON lines)")->required();

    CLI::App* train_norm = app.add_subcommand("train-normalizer", "stage-1 training");
    add_common(train_norm);
    train_norm->add_option("--data", data_path, "dataset file (generated if omitted)");
    train_norm->add_option("--out", out, "output directory")->required();

    CLI::App* train_cla = app.add_subcommand("train-classifier", "stage-2 training");
    add_common(train_cla);
    train_cla->add_option("--data", data_path, "dataset file (generated if omitted)");
    train_cla->add_option("--variant", variant, "pipeline variant or model variant");
    train_cla->add_option("--normalizer", normalizer_ckpt, "stage-1 checkpoint (trained-idn)");
    train_cla->add_option("--out", out, "output directory")->required();

    CLI::App* eval = app.add_subcommand("eval", "evaluate a trained classifier");
    add_common(eval);
    eval->add_option("--data", data_path, "dataset file (generated if omitted)");
    eval->add_option("--variant", variant, "pipeline variant or model variant");
    eval->add_option("--normalizer", normalizer_ckpt, "stage-1 checkpoint (trained-idn)");
    eval->add_option("--classifier", classifier_ckpt, "stage-2 checkpoint")->required();
    eval->add_option("--out", out, "output directory")->required();

    CLI::App* ablate_cmd = app.add_subcommand("ablate", "run one experiment variant over seeds");
    add_common(ablate_cmd, false);
    ablate_cmd->add_option("--variant", variant, "model or pipeline variant")->required();
    ablate_cmd->add_option("--out", out, "output root (overrides config out_dir)");

    CLI::App* report_cmd = app.add_subcommand("report", "comparison table from run directories");
    std::vector<std::string> run_dirs;
    report_cmd->add_option("dirs", run_dirs, "completed run directories")->required();
    report_cmd->add_option("--out", out, "write comparison.csv here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gradcheck->parsed()) return cmd_gradcheck(gc_seeds, gc_tolerance);

        if (gen->parsed()) {
            ExperimentConfig cfg = load_experiment_config(config_path, task, seed, has_seed);
            std::uint64_t s = has_seed ? seed : cfg.seeds.front();
            SynthDataset ds = generate(cfg.factors, cfg.task, cfg.n_samples, cfg.split, Rng(s));
            save_dataset(out, ds);
            std::printf("wrote %zu train / %zu test samples to %s\n", ds.train.size(),
                        ds.test.size(), out.c_str());
            return 0;
        }

        if (train_norm->parsed()) {
            ExperimentConfig cfg = load_experiment_config(config_path, task, seed, has_seed);
            std::uint64_t s = has_seed ? seed : cfg.seeds.front();
            Rng root(s);
            SynthDataset ds = dataset_for(cfg, data_path, s);
            EmbedderSuite suite = make_embedder_suite(ds.world, root.split(41));
            Rng model_rng = root.split(42);
            NormalizerConfig ncfg = cfg.normalizer;
            ncfg.sample_dim = cfg.factors.sample_dim;
            NormalizerModel model(ncfg, model_rng);
            Rng train_rng = root.split(43);
            auto curves = train_normalizer(ds.train, model, suite, cfg.norm_weights,
                                           cfg.norm_train, train_rng);
            std::string dir = resolve_out_dir(out);
            std::filesystem::create_directories(dir);
            detail::write_text_file(dir + "/normalizer_curves.csv", detail::curves_csv(curves));
            save_checkpoint(dir + "/normalizer.json", "normalizer", model.params("model"),
                            {{"config_hash", cfg.config_hash()}, {"seed", std::to_string(s)}});
            std::printf("normalizer trained for %zu steps; checkpoint in %s\n",
                        cfg.norm_train.steps, dir.c_str());
            return 0;
        }

        if (train_cla->parsed() || eval->parsed()) {
            ExperimentConfig cfg = load_experiment_config(config_path, task, seed, has_seed);
            if (!variant.empty()) {
                bool pipeline = std::find(kPipelineVariants.begin(), kPipelineVariants.end(),
                                          variant) != kPipelineVariants.end();
                (pipeline ? cfg.pipeline_variant : cfg.model_variant) = variant;
            }
            std::uint64_t s = has_seed ? seed : cfg.seeds.front();
            Rng root(s);
            SynthDataset ds = dataset_for(cfg, data_path, s);
            Factors target = fixed_target_factors(ds.world, root);

            NormalizerModel norm_model;
            const NormalizerModel* trained = nullptr;
            if (cfg.pipeline_variant == "trained-idn") {
                NormalizerConfig ncfg = cfg.normalizer;
                ncfg.sample_dim = cfg.factors.sample_dim;
                Rng model_rng = root.split(42);
                norm_model = NormalizerModel(ncfg, model_rng);
                if (!normalizer_ckpt.empty()) {
                    load_checkpoint(normalizer_ckpt, "normalizer", norm_model.params("model"));
                } else {
                    EmbedderSuite suite = make_embedder_suite(ds.world, root.split(41));
                    Rng train_rng = root.split(43);
                    train_normalizer(ds.train, norm_model, suite, cfg.norm_weights,
                                     cfg.norm_train, train_rng);
                }
                trained = &norm_model;
            }

            ClassifierConfig ccfg = cfg.classifier;
            ccfg.sample_dim = cfg.factors.sample_dim;
            Rng cla_model_rng = root.split(44);
            ClassifierModel model = build_variant(cfg.model_variant, cfg.task, ccfg,
                                                  cla_model_rng);
            std::string dir = resolve_out_dir(out);
            std::filesystem::create_directories(dir);

            if (train_cla->parsed()) {
                auto streams = make_streams(ds.train, ds.world, cfg.pipeline_variant, target,
                                            trained);
                Rng train_rng = root.split(45);
                auto curves = train_classifier(streams, model, cfg.cla_weights, cfg.cla_train,
                                               train_rng);
                detail::write_text_file(dir + "/classifier_curves.csv",
                                        detail::curves_csv(curves));
                save_checkpoint(dir + "/classifier.json", "classifier", model.params("model"),
                                {{"config_hash", cfg.config_hash()},
                                 {"seed", std::to_string(s)}});
                std::printf("classifier trained for %zu epochs; checkpoint in %s\n",
                            cfg.cla_train.epochs, dir.c_str());
            } else {
                load_checkpoint(classifier_ckpt, "classifier", model.params("model"));
                auto streams = make_streams(ds.test, ds.world, cfg.pipeline_variant, target,
                                            trained);
                std::map<std::string, GateTelemetry> telemetry;
                MetricsReport report = evaluate_classifier(model, streams, &telemetry);
                report.seed = s;
                report.variant = cfg.pipeline_variant + "/" + cfg.model_variant;
                report.config_hash = cfg.config_hash();
                detail::write_text_file(dir + "/metrics.csv", detail::metrics_csv(report));
                detail::write_text_file(dir + "/metrics.txt", detail::metrics_text(report));
                for (const auto& [block, tel] : telemetry)
                    detail::write_text_file(dir + "/telemetry_" + block + ".csv", tel.to_csv());
                std::printf("%s", detail::metrics_text(report).c_str());
            }
            return 0;
        }

        if (ablate_cmd->parsed()) {
            ExperimentConfig cfg = load_experiment_config(config_path, task, 0, false);
            if (!out.empty()) cfg.out_dir = out;
            bool pipeline = std::find(kPipelineVariants.begin(), kPipelineVariants.end(),
                                      variant) != kPipelineVariants.end();
            if (pipeline) cfg.pipeline_variant = variant;
            else cfg.model_variant = variant;
            ExperimentSummary s = run_experiment(cfg);
            std::printf("%s %s: median %.4f (min %.4f, max %.4f) over %zu seeds\n",
                        s.task.c_str(), s.variant.c_str(), s.median_aggregate, s.min_aggregate,
                        s.max_aggregate, s.per_seed.size());
            return 0;
        }

        if (report_cmd->parsed()) {
            std::string csv;
            std::string txt = report_comparison(run_dirs, &csv);
            std::printf("%s", txt.c_str());
            if (!out.empty()) {
                std::filesystem::create_directories(resolve_out_dir(out));
                detail::write_text_file(resolve_out_dir(out) + "/comparison.csv", csv);
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
