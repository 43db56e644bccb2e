#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "norface/errors.hpp"
#include "norface/rng.hpp"
#include "norface/task.hpp"

namespace norface {

/// Ground-truth generative factors of one sample.
struct Factors {
    std::vector<double> identity, expression, pose, background;

    std::vector<double> concatenated() const {
        std::vector<double> out;
        out.reserve(identity.size() + expression.size() + pose.size() + background.size());
        out.insert(out.end(), identity.begin(), identity.end());
        out.insert(out.end(), expression.begin(), expression.end());
        out.insert(out.end(), pose.begin(), pose.end());
        out.insert(out.end(), background.begin(), background.end());
        return out;
    }
};

struct FactorSample {
    std::size_t identity_id = 0;
    Factors factors;
    std::vector<double> observed;
    Label label;
};

struct FactorConfig {
    std::size_t n_identities = 25;
    std::size_t dim_identity = 16;
    std::size_t dim_expression = 24;
    std::size_t dim_pose = 4;
    std::size_t dim_background = 8;
    std::size_t sample_dim = 64;
    double observation_noise_std = 0.3;
    double identity_scale = 4.0;
    double pose_scale = 2.0;
    double background_scale = 2.0;
    double expression_scale = 6.0;
    double expression_jitter = 1.2;
    // AU1/AU2 co-occurrence: P(bit1 == bit0).
    double au_cooccurrence = 0.7;
    // Optional fixed pointwise nonlinearity; the read-out becomes approximate.
    bool nonlinear_mixing = false;
    double nonlinear_strength = 0.3;

    std::size_t factor_dim() const {
        return dim_identity + dim_expression + dim_pose + dim_background;
    }

    void validate() const {
        if (sample_dim < factor_dim())
            throw ConfigurationError("synthdata: sample_dim " + std::to_string(sample_dim) +
                                     " below factor dim " + std::to_string(factor_dim()));
        if (n_identities == 0) throw ConfigurationError("synthdata: no identities");
    }
};

struct IdentitySplit {
    std::size_t n_train_identities = 20;
    std::size_t n_test_identities = 5;
    double train_fraction = 0.8;
};

namespace detail {

// Gauss-Jordan inverse with partial pivoting; throws on rank deficiency.
inline std::vector<double> invert_matrix(std::vector<double> a, std::size_t n) {
    std::vector<double> inv(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) inv[i * n + i] = 1.0;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col])) pivot = r;
        if (std::abs(a[pivot * n + col]) < 1e-10)
            throw ConfigurationError("synthdata: mixing matrix is rank-deficient");
        if (pivot != col)
            for (std::size_t j = 0; j < n; ++j) {
                std::swap(a[pivot * n + j], a[col * n + j]);
                std::swap(inv[pivot * n + j], inv[col * n + j]);
            }
        double d = a[col * n + col];
        for (std::size_t j = 0; j < n; ++j) {
            a[col * n + j] /= d;
            inv[col * n + j] /= d;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            double f = a[r * n + col];
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                a[r * n + j] -= f * a[col * n + j];
                inv[r * n + j] -= f * inv[col * n + j];
            }
        }
    }
    return inv;
}

} // namespace detail

/// A realized synthetic world: the fixed full-rank mixing map, its
/// least-squares inverse, per-identity vectors and label prototypes. All
/// randomness is drawn from substreams of the seed used at construction.
class FactorWorld {
public:
    FactorWorld(FactorConfig config, TaskSpec task, const Rng& rng)
        : cfg_(config), task_(task) {
        cfg_.validate();
        const std::size_t f = cfg_.factor_dim(), s = cfg_.sample_dim;

        Rng mix_rng = rng.split(1);
        mixing_ = mix_rng.normal_vector(s * f, 1.0 / std::sqrt(static_cast<double>(f)));
        compute_pinv();

        Rng nl_rng = rng.split(2);
        nonlinear_gain_.resize(s);
        for (auto& g : nonlinear_gain_) g = cfg_.nonlinear_strength * nl_rng.uniform(0.5, 1.5);

        Rng id_rng = rng.split(3);
        identity_table_.resize(cfg_.n_identities);
        for (auto& v : identity_table_)
            v = id_rng.normal_vector(cfg_.dim_identity, cfg_.identity_scale);

        Rng proto_rng = rng.split(4);
        const std::size_t n_dirs = task_.kind == TaskKind::Fer ? task_.n_labels : task_.n_labels;
        prototypes_.resize(n_dirs);
        for (auto& p : prototypes_) {
            p = proto_rng.normal_vector(cfg_.dim_expression);
            double norm = 0.0;
            for (double v : p) norm += v * v;
            norm = std::sqrt(norm);
            for (double& v : p) v *= cfg_.expression_scale / norm;
        }
    }

    const FactorConfig& config() const { return cfg_; }
    const TaskSpec& task() const { return task_; }
    const std::vector<double>& mixing() const { return mixing_; }
    const std::vector<double>& pinv() const { return pinv_; }
    const std::vector<std::vector<double>>& identity_table() const { return identity_table_; }
    const std::vector<std::vector<double>>& prototypes() const { return prototypes_; }
    const std::vector<double>& nonlinear_gain() const { return nonlinear_gain_; }

    /// Rehydrate a world from serialized state (dataset files).
    static FactorWorld from_state(FactorConfig config, TaskSpec task, std::vector<double> mixing,
                                  std::vector<double> nonlinear_gain,
                                  std::vector<std::vector<double>> identity_table,
                                  std::vector<std::vector<double>> prototypes) {
        FactorWorld w(std::move(config), task, std::move(mixing), std::move(nonlinear_gain),
                      std::move(identity_table), std::move(prototypes));
        return w;
    }

    std::vector<double> mix(const Factors& factors, Rng* noise_rng) const {
        const std::size_t s = cfg_.sample_dim, f = cfg_.factor_dim();
        std::vector<double> fv = factors.concatenated();
        std::vector<double> out(s, 0.0);
        for (std::size_t i = 0; i < s; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < f; ++j) acc += mixing_[i * f + j] * fv[j];
            out[i] = acc;
        }
        if (cfg_.nonlinear_mixing)
            for (std::size_t i = 0; i < s; ++i) out[i] += nonlinear_gain_[i] * std::tanh(out[i]);
        if (noise_rng && cfg_.observation_noise_std > 0.0)
            for (std::size_t i = 0; i < s; ++i)
                out[i] += cfg_.observation_noise_std * noise_rng->normal();
        return out;
    }

    /// Least-squares inversion of the mixing map.
    Factors factor_readout(const std::vector<double>& observed) const {
        const std::size_t s = cfg_.sample_dim, f = cfg_.factor_dim();
        if (observed.size() != s)
            throw DimensionError("factor_readout: observed has " +
                                 std::to_string(observed.size()) + " entries, expected " +
                                 std::to_string(s));
        std::vector<double> fv(f, 0.0);
        for (std::size_t i = 0; i < f; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < s; ++j) acc += pinv_[i * s + j] * observed[j];
            fv[i] = acc;
        }
        Factors out;
        auto take = [&fv](std::size_t offset, std::size_t len) {
            return std::vector<double>(fv.begin() + offset, fv.begin() + offset + len);
        };
        out.identity = take(0, cfg_.dim_identity);
        out.expression = take(cfg_.dim_identity, cfg_.dim_expression);
        out.pose = take(cfg_.dim_identity + cfg_.dim_expression, cfg_.dim_pose);
        out.background =
            take(cfg_.dim_identity + cfg_.dim_expression + cfg_.dim_pose, cfg_.dim_background);
        return out;
    }

    /// Frobenius norm of the read-out rows of one factor block; scales the
    /// observation noise into a per-block error bound.
    double readout_noise_bound(std::size_t offset, std::size_t len) const {
        double acc = 0.0;
        for (std::size_t i = offset; i < offset + len; ++i)
            for (std::size_t j = 0; j < cfg_.sample_dim; ++j)
                acc += pinv_[i * cfg_.sample_dim + j] * pinv_[i * cfg_.sample_dim + j];
        return std::sqrt(acc);
    }

    /// Ground-truth identity normalization: nuisance factors are replaced by
    /// the target's, the expression factor is untouched, and the sample is
    /// re-mixed (fresh noise only when an rng is supplied).
    FactorSample oracle_normalize(const FactorSample& sample, const Factors& target,
                                  std::size_t target_identity_id = 0,
                                  Rng* noise_rng = nullptr) const {
        FactorSample out;
        out.identity_id = target_identity_id;
        out.factors.identity = target.identity;
        out.factors.expression = sample.factors.expression;
        out.factors.pose = target.pose;
        out.factors.background = target.background;
        out.observed = mix(out.factors, noise_rng);
        out.label = sample.label;
        return out;
    }

    Label draw_label(std::size_t index_in_set, Rng& rng) const {
        Label label;
        label.kind = task_.kind;
        switch (task_.kind) {
            case TaskKind::Fer:
                // Round-robin assignment keeps classes balanced exactly.
                label.values = {static_cast<double>(index_in_set % task_.n_labels)};
                break;
            case TaskKind::AuDetect: {
                label.values.assign(task_.n_labels, 0.0);
                label.values[0] = rng.uniform() < 0.5 ? 1.0 : 0.0;
                // AU1/AU2 co-occur: bit1 copies bit0 with probability p.
                label.values[1] = rng.uniform() < cfg_.au_cooccurrence
                                      ? label.values[0]
                                      : 1.0 - label.values[0];
                for (std::size_t j = 2; j < task_.n_labels; ++j)
                    label.values[j] = rng.uniform() < 0.5 ? 1.0 : 0.0;
                break;
            }
            case TaskKind::AuIntensity: {
                label.values.assign(task_.n_labels, 0.0);
                for (auto& v : label.values)
                    v = static_cast<double>(rng.uniform_index(
                        static_cast<std::uint64_t>(task_.intensity_scale_max) + 1));
                break;
            }
        }
        return label;
    }

    std::vector<double> expression_for_label(const Label& label, Rng& rng) const {
        std::vector<double> expr(cfg_.dim_expression, 0.0);
        switch (task_.kind) {
            case TaskKind::Fer: {
                const auto& proto = prototypes_[label.fer_class()];
                expr = proto;
                break;
            }
            case TaskKind::AuDetect:
                for (std::size_t j = 0; j < label.values.size(); ++j)
                    if (label.values[j] != 0.0)
                        for (std::size_t i = 0; i < expr.size(); ++i)
                            expr[i] += 0.5 * prototypes_[j][i];
                break;
            case TaskKind::AuIntensity:
                for (std::size_t j = 0; j < label.values.size(); ++j) {
                    double level = label.values[j] / task_.intensity_scale_max;
                    for (std::size_t i = 0; i < expr.size(); ++i)
                        expr[i] += level * prototypes_[j][i];
                }
                break;
        }
        for (auto& v : expr) v += cfg_.expression_jitter * rng.normal();
        return expr;
    }

    FactorSample make_sample(std::size_t identity_id, const Label& label, Rng& rng) const {
        FactorSample s;
        s.identity_id = identity_id;
        s.label = label;
        s.factors.identity = identity_table_.at(identity_id);
        s.factors.expression = expression_for_label(label, rng);
        s.factors.pose = rng.normal_vector(cfg_.dim_pose, cfg_.pose_scale);
        s.factors.background = rng.normal_vector(cfg_.dim_background, cfg_.background_scale);
        s.observed = mix(s.factors, &rng);
        return s;
    }

private:
    FactorWorld(FactorConfig config, TaskSpec task, std::vector<double> mixing,
                std::vector<double> nonlinear_gain, std::vector<std::vector<double>> identity_table,
                std::vector<std::vector<double>> prototypes)
        : cfg_(std::move(config)),
          task_(task),
          mixing_(std::move(mixing)),
          nonlinear_gain_(std::move(nonlinear_gain)),
          identity_table_(std::move(identity_table)),
          prototypes_(std::move(prototypes)) {
        cfg_.validate();
        if (mixing_.size() != cfg_.sample_dim * cfg_.factor_dim())
            throw FormatError("synthdata: mixing matrix size mismatch");
        compute_pinv();
    }

    void compute_pinv() {
        const std::size_t s = cfg_.sample_dim, f = cfg_.factor_dim();
        // (M^T M)^-1 M^T
        std::vector<double> mtm(f * f, 0.0);
        for (std::size_t i = 0; i < f; ++i)
            for (std::size_t j = 0; j < f; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < s; ++k) acc += mixing_[k * f + i] * mixing_[k * f + j];
                mtm[i * f + j] = acc;
            }
        std::vector<double> inv = detail::invert_matrix(std::move(mtm), f);
        pinv_.assign(f * s, 0.0);
        for (std::size_t i = 0; i < f; ++i)
            for (std::size_t j = 0; j < s; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < f; ++k) acc += inv[i * f + k] * mixing_[j * f + k];
                pinv_[i * s + j] = acc;
            }
    }

    FactorConfig cfg_;
    TaskSpec task_;
    std::vector<double> mixing_;       // [sample_dim x factor_dim]
    std::vector<double> pinv_;         // [factor_dim x sample_dim]
    std::vector<double> nonlinear_gain_;
    std::vector<std::vector<double>> identity_table_;
    std::vector<std::vector<double>> prototypes_;
};

struct SynthDataset {
    FactorWorld world;
    std::vector<FactorSample> train;
    std::vector<FactorSample> test;
};

/// Generates a train/test pair with disjoint identity pools and balanced
/// labels. Everything is seed-deterministic through rng substreams.
inline SynthDataset generate(const FactorConfig& config, const TaskSpec& task,
                             std::size_t n_samples, const IdentitySplit& split, const Rng& rng) {
    if (config.n_identities < split.n_train_identities + split.n_test_identities)
        throw ConfigurationError("generate: " + std::to_string(config.n_identities) +
                                 " identities cannot cover a " +
                                 std::to_string(split.n_train_identities) + "+" +
                                 std::to_string(split.n_test_identities) + " split");
    FactorWorld world(config, task, rng);
    const std::size_t n_train =
        static_cast<std::size_t>(std::llround(split.train_fraction * double(n_samples)));

    Rng train_rng = rng.split(10);
    Rng test_rng = rng.split(11);
    std::vector<FactorSample> train, test;
    train.reserve(n_train);
    test.reserve(n_samples - n_train);
    for (std::size_t i = 0; i < n_train; ++i) {
        std::size_t id = train_rng.uniform_index(split.n_train_identities);
        train.push_back(world.make_sample(id, world.draw_label(i, train_rng), train_rng));
    }
    for (std::size_t i = 0; i + n_train < n_samples; ++i) {
        std::size_t id =
            split.n_train_identities + test_rng.uniform_index(split.n_test_identities);
        test.push_back(world.make_sample(id, world.draw_label(i, test_rng), test_rng));
    }
    return SynthDataset{std::move(world), std::move(train), std::move(test)};
}

} // namespace norface
