#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "norface/classifier.hpp"
#include "norface/config.hpp"
#include "norface/metrics.hpp"
#include "norface/normalizer.hpp"
#include "norface/serialize.hpp"
#include "norface/synthdata.hpp"

namespace norface {

/// Pipeline variants: how the normalized stream is produced.
/// `no-idn` feeds the original stream into both input blocks.
inline const std::vector<std::string> kPipelineVariants = {"no-idn", "oracle-idn", "trained-idn"};

struct ExperimentConfig {
    TaskSpec task = TaskSpec::fer();
    FactorConfig factors;
    IdentitySplit split;
    std::size_t n_samples = 10000;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::string pipeline_variant = "oracle-idn";
    std::string model_variant = "full";
    NormalizerConfig normalizer;
    NormalizerTrainConfig norm_train;
    NormLossWeights norm_weights;
    ClassifierConfig classifier;
    ClassifierTrainConfig cla_train;
    ClaLossWeights cla_weights;
    std::string out_dir = "runs";

    ConfigMap to_config_map() const {
        ConfigMap m;
        m.set("format_version", std::uint64_t(1));
        m.set("task", task.name());
        m.set("n_samples", n_samples);
        m.set("seeds", seeds);
        m.set("pipeline_variant", pipeline_variant);
        m.set("model_variant", model_variant);
        m.set("out_dir", out_dir);

        m.set("factors.n_identities", factors.n_identities);
        m.set("factors.dim_identity", factors.dim_identity);
        m.set("factors.dim_expression", factors.dim_expression);
        m.set("factors.dim_pose", factors.dim_pose);
        m.set("factors.dim_background", factors.dim_background);
        m.set("factors.sample_dim", factors.sample_dim);
        m.set("factors.observation_noise_std", factors.observation_noise_std);
        m.set("factors.identity_scale", factors.identity_scale);
        m.set("factors.pose_scale", factors.pose_scale);
        m.set("factors.background_scale", factors.background_scale);
        m.set("factors.expression_scale", factors.expression_scale);
        m.set("factors.expression_jitter", factors.expression_jitter);
        m.set("factors.au_cooccurrence", factors.au_cooccurrence);
        m.set("factors.nonlinear_mixing", factors.nonlinear_mixing);
        m.set("factors.nonlinear_strength", factors.nonlinear_strength);

        m.set("split.n_train_identities", split.n_train_identities);
        m.set("split.n_test_identities", split.n_test_identities);
        m.set("split.train_fraction", split.train_fraction);

        m.set("normalizer.n_patches", normalizer.n_patches);
        m.set("normalizer.model_dim", normalizer.model_dim);
        m.set("normalizer.num_heads", normalizer.num_heads);
        m.set("normalizer.encoder_hidden", normalizer.encoder_hidden);
        m.set("normalizer.decoder_hidden", normalizer.decoder_hidden);

        m.set("norm_train.steps", norm_train.steps);
        m.set("norm_train.batch_size", norm_train.batch_size);
        m.set("norm_train.lr", norm_train.lr);
        m.set("norm_train.beta1", norm_train.beta1);
        m.set("norm_train.beta2", norm_train.beta2);
        m.set("norm_train.p_reconstruction", norm_train.p_reconstruction);

        m.set("norm_weights.rec", norm_weights.rec);
        m.set("norm_weights.perc", norm_weights.perc);
        m.set("norm_weights.id", norm_weights.id);
        m.set("norm_weights.lm", norm_weights.lm);
        m.set("norm_weights.exp", norm_weights.exp);
        m.set("norm_weights.eye", norm_weights.eye);

        m.set("classifier.feature_hidden", classifier.feature_hidden);
        m.set("classifier.feature_dim", classifier.feature_dim);
        m.set("classifier.num_experts", classifier.moe.num_experts);
        m.set("classifier.top_k", classifier.moe.top_k);
        m.set("classifier.expert_hidden", classifier.moe.expert_hidden);
        m.set("classifier.noise_enabled", classifier.moe.noise_enabled);
        m.set("classifier.freeze_feature_extractor", classifier.freeze_feature_extractor);

        m.set("cla_train.epochs", cla_train.epochs);
        m.set("cla_train.batch_size", cla_train.batch_size);
        m.set("cla_train.lr", cla_train.lr);
        m.set("cla_train.beta1", cla_train.beta1);
        m.set("cla_train.beta2", cla_train.beta2);

        m.set("cla_weights.imp", cla_weights.imp);
        m.set("cla_weights.gl", cla_weights.gl);
        return m;
    }

    static ExperimentConfig from_config_map(const ConfigMap& m) {
        ExperimentConfig c;
        if (m.get_u64("format_version", 1) != 1)
            throw FormatError("experiment config: unsupported format_version");
        c.task = TaskSpec::from_name(m.get_string("task", "fer"));
        c.n_samples = m.get_u64("n_samples", c.n_samples);
        c.seeds = m.get_u64_list("seeds", c.seeds);
        c.pipeline_variant = m.get_string("pipeline_variant", c.pipeline_variant);
        c.model_variant = m.get_string("model_variant", c.model_variant);
        c.out_dir = m.get_string("out_dir", c.out_dir);

        c.factors.n_identities = m.get_u64("factors.n_identities", c.factors.n_identities);
        c.factors.dim_identity = m.get_u64("factors.dim_identity", c.factors.dim_identity);
        c.factors.dim_expression = m.get_u64("factors.dim_expression", c.factors.dim_expression);
        c.factors.dim_pose = m.get_u64("factors.dim_pose", c.factors.dim_pose);
        c.factors.dim_background = m.get_u64("factors.dim_background", c.factors.dim_background);
        c.factors.sample_dim = m.get_u64("factors.sample_dim", c.factors.sample_dim);
        c.factors.observation_noise_std =
            m.get_double("factors.observation_noise_std", c.factors.observation_noise_std);
        c.factors.identity_scale = m.get_double("factors.identity_scale", c.factors.identity_scale);
        c.factors.pose_scale = m.get_double("factors.pose_scale", c.factors.pose_scale);
        c.factors.background_scale =
            m.get_double("factors.background_scale", c.factors.background_scale);
        c.factors.expression_scale =
            m.get_double("factors.expression_scale", c.factors.expression_scale);
        c.factors.expression_jitter =
            m.get_double("factors.expression_jitter", c.factors.expression_jitter);
        c.factors.au_cooccurrence =
            m.get_double("factors.au_cooccurrence", c.factors.au_cooccurrence);
        c.factors.nonlinear_mixing =
            m.get_bool("factors.nonlinear_mixing", c.factors.nonlinear_mixing);
        c.factors.nonlinear_strength =
            m.get_double("factors.nonlinear_strength", c.factors.nonlinear_strength);

        c.split.n_train_identities =
            m.get_u64("split.n_train_identities", c.split.n_train_identities);
        c.split.n_test_identities = m.get_u64("split.n_test_identities", c.split.n_test_identities);
        c.split.train_fraction = m.get_double("split.train_fraction", c.split.train_fraction);

        c.normalizer.sample_dim = c.factors.sample_dim;
        c.normalizer.n_patches = m.get_u64("normalizer.n_patches", c.normalizer.n_patches);
        c.normalizer.model_dim = m.get_u64("normalizer.model_dim", c.normalizer.model_dim);
        c.normalizer.num_heads = m.get_u64("normalizer.num_heads", c.normalizer.num_heads);
        c.normalizer.encoder_hidden =
            m.get_u64("normalizer.encoder_hidden", c.normalizer.encoder_hidden);
        c.normalizer.decoder_hidden =
            m.get_u64("normalizer.decoder_hidden", c.normalizer.decoder_hidden);

        c.norm_train.steps = m.get_u64("norm_train.steps", c.norm_train.steps);
        c.norm_train.batch_size = m.get_u64("norm_train.batch_size", c.norm_train.batch_size);
        c.norm_train.lr = m.get_double("norm_train.lr", c.norm_train.lr);
        c.norm_train.beta1 = m.get_double("norm_train.beta1", c.norm_train.beta1);
        c.norm_train.beta2 = m.get_double("norm_train.beta2", c.norm_train.beta2);
        c.norm_train.p_reconstruction =
            m.get_double("norm_train.p_reconstruction", c.norm_train.p_reconstruction);

        c.norm_weights.rec = m.get_double("norm_weights.rec", c.norm_weights.rec);
        c.norm_weights.perc = m.get_double("norm_weights.perc", c.norm_weights.perc);
        c.norm_weights.id = m.get_double("norm_weights.id", c.norm_weights.id);
        c.norm_weights.lm = m.get_double("norm_weights.lm", c.norm_weights.lm);
        c.norm_weights.exp = m.get_double("norm_weights.exp", c.norm_weights.exp);
        c.norm_weights.eye = m.get_double("norm_weights.eye", c.norm_weights.eye);

        c.classifier.sample_dim = c.factors.sample_dim;
        c.classifier.feature_hidden =
            m.get_u64("classifier.feature_hidden", c.classifier.feature_hidden);
        c.classifier.feature_dim = m.get_u64("classifier.feature_dim", c.classifier.feature_dim);
        c.classifier.moe.num_experts =
            m.get_u64("classifier.num_experts", c.classifier.moe.num_experts);
        c.classifier.moe.top_k = m.get_u64("classifier.top_k", c.classifier.moe.top_k);
        c.classifier.moe.expert_hidden =
            m.get_u64("classifier.expert_hidden", c.classifier.moe.expert_hidden);
        c.classifier.moe.noise_enabled =
            m.get_bool("classifier.noise_enabled", c.classifier.moe.noise_enabled);
        c.classifier.freeze_feature_extractor = m.get_bool(
            "classifier.freeze_feature_extractor", c.classifier.freeze_feature_extractor);

        c.cla_train.epochs = m.get_u64("cla_train.epochs", c.cla_train.epochs);
        c.cla_train.batch_size = m.get_u64("cla_train.batch_size", c.cla_train.batch_size);
        c.cla_train.lr = m.get_double("cla_train.lr", c.cla_train.lr);
        c.cla_train.beta1 = m.get_double("cla_train.beta1", c.cla_train.beta1);
        c.cla_train.beta2 = m.get_double("cla_train.beta2", c.cla_train.beta2);

        c.cla_weights.imp = m.get_double("cla_weights.imp", c.cla_weights.imp);
        c.cla_weights.gl = m.get_double("cla_weights.gl", c.cla_weights.gl);
        return c;
    }

    std::string config_hash() const { return to_config_map().hash(); }
};

/// Output root override: when NORFACE_OUT_ROOT is set, relative output
/// directories land underneath it.
inline std::string resolve_out_dir(const std::string& dir) {
    const char* root = std::getenv("NORFACE_OUT_ROOT");
    if (!root || *root == '\0' || std::filesystem::path(dir).is_absolute()) return dir;
    return (std::filesystem::path(root) / dir).string();
}

/// The fixed target face: identity 0 with a fixed pose/background draw and a
/// neutral (zero) expression.
inline Factors fixed_target_factors(const FactorWorld& world, const Rng& rng) {
    Rng r = rng.split(40);
    Factors t;
    t.identity = world.identity_table().at(0);
    t.expression.assign(world.config().dim_expression, 0.0);
    t.pose = r.normal_vector(world.config().dim_pose, world.config().pose_scale);
    t.background = r.normal_vector(world.config().dim_background, world.config().background_scale);
    return t;
}

/// Builds the (normalized, original) stream pairs for one pipeline variant.
/// A trained normalizer, when given, maps each sample against the fixed
/// target; the oracle variant swaps nuisance factors exactly; `no-idn`
/// duplicates the original stream.
inline std::vector<StreamSample> make_streams(const std::vector<FactorSample>& samples,
                                              const FactorWorld& world,
                                              const std::string& variant,
                                              const Factors& target,
                                              const NormalizerModel* trained) {
    std::vector<StreamSample> out;
    out.reserve(samples.size());
    const std::vector<double> target_observed =
        world.mix(target, nullptr); // noise-free fixed target face
    for (const auto& s : samples) {
        StreamSample ss;
        ss.original = s.observed;
        ss.label = s.label;
        if (variant == "no-idn") {
            ss.normalized = s.observed;
        } else if (variant == "oracle-idn") {
            ss.normalized = world.oracle_normalize(s, target, 0, nullptr).observed;
        } else if (variant == "trained-idn") {
            if (!trained)
                throw ConfigurationError("make_streams: trained-idn needs a trained normalizer");
            Value i_n = normalize(Value::constant({s.observed.size()}, s.observed),
                                  Value::constant({target_observed.size()}, target_observed),
                                  *trained);
            ss.normalized = i_n.data();
        } else {
            throw ConfigurationError("unknown pipeline variant '" + variant + "'");
        }
        out.push_back(std::move(ss));
    }
    return out;
}

/// Evaluates a trained classifier on test streams; fills per-label scores,
/// the task aggregate, and per-block router telemetry.
inline MetricsReport evaluate_classifier(const ClassifierModel& model,
                                         const std::vector<StreamSample>& test,
                                         std::map<std::string, GateTelemetry>* telemetry) {
    if (test.empty()) throw EmptyInputError("evaluate_classifier: empty test set");
    const TaskSpec& task = model.task;
    MetricsReport report;
    report.task = task.name();

    std::vector<std::vector<double>> outputs;
    outputs.reserve(test.size());
    for (const auto& s : test) {
        ClassifyResult r = classify(Value::constant({s.normalized.size()}, s.normalized),
                                    Value::constant({s.original.size()}, s.original),
                                    model, nullptr);
        outputs.push_back(r.output.data());
        if (telemetry) {
            for (const auto& [block, decision] : r.decisions) {
                auto it = telemetry->find(block);
                if (it == telemetry->end())
                    it = telemetry->emplace(block, GateTelemetry(decision.gates.size())).first;
                switch (task.kind) {
                    case TaskKind::Fer:
                        it->second.record("class" + std::to_string(s.label.fer_class()), decision);
                        break;
                    case TaskKind::AuDetect:
                        for (std::size_t j = 0; j < s.label.values.size(); ++j)
                            if (s.label.values[j] != 0.0)
                                it->second.record("au" + std::to_string(j), decision);
                        break;
                    case TaskKind::AuIntensity:
                        for (std::size_t j = 0; j < s.label.values.size(); ++j)
                            if (s.label.values[j] >= 1.0)
                                it->second.record("au" + std::to_string(j), decision);
                        break;
                }
            }
        }
    }

    switch (task.kind) {
        case TaskKind::AuDetect: {
            double macro = 0.0;
            for (std::size_t j = 0; j < task.n_labels; ++j) {
                std::vector<int> pred(test.size()), target(test.size());
                for (std::size_t i = 0; i < test.size(); ++i) {
                    pred[i] = outputs[i][j] > 0.0 ? 1 : 0; // sigmoid threshold 0.5
                    target[i] = test[i].label.values[j] != 0.0 ? 1 : 0;
                }
                double f1 = f1_score(pred, target);
                report.per_label["au" + std::to_string(j)] = f1;
                macro += f1;
            }
            report.aggregate = macro / double(task.n_labels);
            break;
        }
        case TaskKind::AuIntensity: {
            double icc_sum = 0.0, mse_sum = 0.0, mae_sum = 0.0;
            for (std::size_t j = 0; j < task.n_labels; ++j) {
                std::vector<double> pred(test.size()), target(test.size());
                for (std::size_t i = 0; i < test.size(); ++i) {
                    pred[i] = std::clamp(outputs[i][j], 0.0, task.intensity_scale_max);
                    target[i] = test[i].label.values[j];
                }
                double score = icc(pred, target);
                auto [mse, mae] = mse_mae(pred, target);
                report.per_label["au" + std::to_string(j)] = score;
                icc_sum += score;
                mse_sum += mse;
                mae_sum += mae;
            }
            report.aggregate = icc_sum / double(task.n_labels);
            report.extra["mse"] = mse_sum / double(task.n_labels);
            report.extra["mae"] = mae_sum / double(task.n_labels);
            break;
        }
        case TaskKind::Fer: {
            std::vector<std::size_t> pred(test.size()), target(test.size());
            for (std::size_t i = 0; i < test.size(); ++i) {
                pred[i] = argmax_index(outputs[i]);
                target[i] = test[i].label.fer_class();
            }
            report.aggregate = accuracy(pred, target);
            for (std::size_t c = 0; c < task.n_labels; ++c) {
                double hit = 0.0, total = 0.0;
                for (std::size_t i = 0; i < test.size(); ++i)
                    if (target[i] == c) {
                        total += 1.0;
                        hit += (pred[i] == c) ? 1.0 : 0.0;
                    }
                report.per_label["class" + std::to_string(c)] = total > 0 ? hit / total : 0.0;
            }
            break;
        }
    }
    report.validate();
    return report;
}

namespace detail {

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << content;
}

inline std::string curves_csv(const std::vector<LossCurvePoint>& curves) {
    std::ostringstream os;
    os << "format_version,1\nstep,term,value\n";
    os.precision(17);
    for (const auto& p : curves) os << p.step << "," << p.term << "," << p.value << "\n";
    return os.str();
}

inline std::string curves_csv(const std::vector<ClassifierCurvePoint>& curves) {
    std::ostringstream os;
    os << "format_version,1\nstep,term,value\n";
    os.precision(17);
    for (const auto& p : curves) os << p.step << "," << p.term << "," << p.value << "\n";
    return os.str();
}

// Deterministic report body: wall-clock stays out so identical (config, seed)
// reruns are byte-identical. Timing lands in runinfo.txt instead.
inline std::string metrics_csv(const MetricsReport& r) {
    std::ostringstream os;
    os.precision(17);
    os << "format_version,1\n";
    os << "config_hash," << r.config_hash << "\n";
    os << "seed," << r.seed << "\n";
    os << "task," << r.task << "\n";
    os << "variant," << r.variant << "\n";
    os << "aggregate," << r.aggregate << "\n";
    for (const auto& [k, v] : r.extra) os << k << "," << v << "\n";
    os << "label,score\n";
    for (const auto& [k, v] : r.per_label) os << k << "," << v << "\n";
    return os.str();
}

inline std::string metrics_text(const MetricsReport& r) {
    std::ostringstream os;
    os.precision(6);
    os << "task: " << r.task << "  variant: " << r.variant << "  seed: " << r.seed << "\n";
    os << "config_hash: " << r.config_hash << "\n";
    os << "aggregate: " << r.aggregate << "\n";
    for (const auto& [k, v] : r.extra) os << k << ": " << v << "\n";
    for (const auto& [k, v] : r.per_label) os << "  " << k << ": " << v << "\n";
    return os.str();
}

inline double median(std::vector<double> values) {
    if (values.empty()) throw EmptyInputError("median: no values");
    std::sort(values.begin(), values.end());
    std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

} // namespace detail

/// One full (seed, variant) run: data generation, optional stage-1 training,
/// stage-2 training, evaluation on the unseen-identity test split, and report
/// files under run_dir.
inline MetricsReport run_single_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                                     const std::string& run_dir) {
    auto t0 = std::chrono::steady_clock::now();
    std::filesystem::create_directories(run_dir);
    Rng root(seed);

    SynthDataset ds = generate(cfg.factors, cfg.task, cfg.n_samples, cfg.split, root);
    Factors target = fixed_target_factors(ds.world, root);

    NormalizerModel normalizer_model;
    const NormalizerModel* trained = nullptr;
    if (cfg.pipeline_variant == "trained-idn") {
        EmbedderSuite suite = make_embedder_suite(ds.world, root.split(41));
        Rng model_rng = root.split(42);
        NormalizerConfig ncfg = cfg.normalizer;
        ncfg.sample_dim = cfg.factors.sample_dim;
        normalizer_model = NormalizerModel(ncfg, model_rng);
        Rng train_rng = root.split(43);
        auto curves =
            train_normalizer(ds.train, normalizer_model, suite, cfg.norm_weights,
                             cfg.norm_train, train_rng);
        detail::write_text_file(run_dir + "/normalizer_curves.csv", detail::curves_csv(curves));
        save_checkpoint(run_dir + "/normalizer.json", "normalizer",
                        normalizer_model.params("model"),
                        {{"config_hash", cfg.config_hash()}, {"seed", std::to_string(seed)}});
        trained = &normalizer_model;
    }

    std::vector<StreamSample> train_streams =
        make_streams(ds.train, ds.world, cfg.pipeline_variant, target, trained);
    std::vector<StreamSample> test_streams =
        make_streams(ds.test, ds.world, cfg.pipeline_variant, target, trained);

    ClassifierConfig ccfg = cfg.classifier;
    ccfg.sample_dim = cfg.factors.sample_dim;
    Rng cla_model_rng = root.split(44);
    ClassifierModel model = build_variant(cfg.model_variant, cfg.task, ccfg, cla_model_rng);
    Rng cla_train_rng = root.split(45);
    auto curves = train_classifier(train_streams, model, cfg.cla_weights, cfg.cla_train,
                                   cla_train_rng);
    detail::write_text_file(run_dir + "/classifier_curves.csv", detail::curves_csv(curves));
    save_checkpoint(run_dir + "/classifier.json", "classifier", model.params("model"),
                    {{"config_hash", cfg.config_hash()}, {"seed", std::to_string(seed)}});

    std::map<std::string, GateTelemetry> telemetry;
    MetricsReport report = evaluate_classifier(model, test_streams, &telemetry);
    report.seed = seed;
    report.variant = cfg.pipeline_variant + "/" + cfg.model_variant;
    report.config_hash = cfg.config_hash();
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    detail::write_text_file(run_dir + "/metrics.csv", detail::metrics_csv(report));
    detail::write_text_file(run_dir + "/metrics.txt", detail::metrics_text(report));
    for (const auto& [block, tel] : telemetry)
        detail::write_text_file(run_dir + "/telemetry_" + block + ".csv", tel.to_csv());
    detail::write_text_file(run_dir + "/runinfo.txt",
                            "wall_seconds = " + std::to_string(report.wall_seconds) + "\n");
    return report;
}

struct ExperimentSummary {
    std::string task;
    std::string variant;
    std::string config_hash;
    std::vector<MetricsReport> per_seed;
    double median_aggregate = 0.0;
    double min_aggregate = 0.0;
    double max_aggregate = 0.0;
};

/// Runs every seed of the configured experiment (seeds execute on a small
/// thread pool; each run is independently seeded and writes its own
/// directory) and reduces them to a median summary.
inline ExperimentSummary run_experiment(const ExperimentConfig& cfg,
                                        std::size_t max_parallel = 2) {
    if (cfg.seeds.empty()) throw ConfigurationError("run_experiment: empty seed list");
    const std::string base =
        resolve_out_dir(cfg.out_dir) + "/" + cfg.pipeline_variant + "_" + cfg.model_variant;
    std::filesystem::create_directories(base);

    std::vector<MetricsReport> reports(cfg.seeds.size());
    std::vector<std::string> errors(cfg.seeds.size());
    std::size_t next = 0;
    std::mutex mu;
    auto worker = [&] {
        while (true) {
            std::size_t idx;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (next >= cfg.seeds.size()) return;
                idx = next++;
            }
            try {
                std::uint64_t seed = cfg.seeds[idx];
                reports[idx] =
                    run_single_seed(cfg, seed, base + "/seed" + std::to_string(seed));
            } catch (const std::exception& e) {
                errors[idx] = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(max_parallel, cfg.seeds.size()); ++t)
        pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (!errors[i].empty())
            throw EvaluationError("run_experiment: seed " + std::to_string(cfg.seeds[i]) +
                                  " failed: " + errors[i]);

    ExperimentSummary summary;
    summary.task = cfg.task.name();
    summary.variant = cfg.pipeline_variant + "/" + cfg.model_variant;
    summary.config_hash = cfg.config_hash();
    summary.per_seed = reports;
    std::vector<double> aggregates;
    for (const auto& r : reports) aggregates.push_back(r.aggregate);
    summary.median_aggregate = detail::median(aggregates);
    summary.min_aggregate = *std::min_element(aggregates.begin(), aggregates.end());
    summary.max_aggregate = *std::max_element(aggregates.begin(), aggregates.end());

    std::ostringstream os;
    os.precision(17);
    os << "format_version,1\n";
    os << "config_hash," << summary.config_hash << "\n";
    os << "task," << summary.task << "\n";
    os << "variant," << summary.variant << "\n";
    os << "seed,aggregate\n";
    for (const auto& r : reports) os << r.seed << "," << r.aggregate << "\n";
    os << "median," << summary.median_aggregate << "\n";
    os << "min," << summary.min_aggregate << "\n";
    os << "max," << summary.max_aggregate << "\n";
    detail::write_text_file(base + "/summary.csv", os.str());
    return summary;
}

/// Trains and evaluates one ablation variant under the experiment's seeds and
/// budgets; emits the same report files.
inline ExperimentSummary ablate(const std::string& model_variant, ExperimentConfig cfg) {
    cfg.model_variant = model_variant;
    return run_experiment(cfg);
}

struct SummaryRow {
    std::string task;
    std::string variant;
    std::string config_hash;
    std::vector<std::pair<std::uint64_t, double>> seeds;
    double median = 0.0, min = 0.0, max = 0.0;
};

inline SummaryRow load_summary(const std::string& dir) {
    std::ifstream in(dir + "/summary.csv");
    if (!in) throw FormatError("report: cannot open " + dir + "/summary.csv");
    SummaryRow row;
    std::string line;
    bool in_seeds = false;
    bool version_ok = false;
    while (std::getline(in, line)) {
        auto comma = line.find(',');
        if (comma == std::string::npos) continue;
        std::string key = line.substr(0, comma), value = line.substr(comma + 1);
        if (key == "format_version") {
            if (value != "1") throw FormatError("report: unsupported summary version " + value);
            version_ok = true;
        } else if (key == "config_hash") row.config_hash = value;
        else if (key == "task") row.task = value;
        else if (key == "variant") row.variant = value;
        else if (key == "seed") in_seeds = true;
        else if (key == "median") row.median = std::stod(value);
        else if (key == "min") row.min = std::stod(value);
        else if (key == "max") row.max = std::stod(value);
        else if (in_seeds)
            row.seeds.emplace_back(std::stoull(key), std::stod(value));
    }
    if (!version_ok) throw FormatError("report: missing format_version in " + dir);
    return row;
}

/// Aligned comparison across completed run directories (same task required).
inline std::string report_comparison(const std::vector<std::string>& run_dirs,
                                     std::string* csv_out = nullptr) {
    if (run_dirs.empty()) throw EmptyInputError("report: no run directories");
    std::vector<SummaryRow> rows;
    for (const auto& d : run_dirs) rows.push_back(load_summary(d));
    for (const auto& r : rows)
        if (r.task != rows.front().task)
            throw ConfigurationError("report: mixed tasks '" + rows.front().task + "' and '" +
                                     r.task + "' cannot be compared");

    std::ostringstream txt, csv;
    txt << "task: " << rows.front().task << "\n";
    txt << "variant                          median      min      max  seeds\n";
    csv << "format_version,1\nvariant,median,min,max,n_seeds\n";
    csv.precision(17);
    txt.precision(4);
    txt << std::fixed;
    for (const auto& r : rows) {
        txt << r.variant;
        for (std::size_t i = r.variant.size(); i < 30; ++i) txt << ' ';
        txt << "  " << r.median << "  " << r.min << "  " << r.max << "  " << r.seeds.size()
            << "\n";
        csv << r.variant << "," << r.median << "," << r.min << "," << r.max << ","
            << r.seeds.size() << "\n";
    }
    if (csv_out) *csv_out = csv.str();
    return txt.str();
}

} // namespace norface
