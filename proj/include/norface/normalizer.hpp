#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "norface/attention.hpp"
#include "norface/nn.hpp"
#include "norface/synthdata.hpp"

namespace norface {

/// Fixed (non-trained) linear map from a sample vector to an embedding.
struct LinearEmbedder {
    Value w; // [sample_dim x out_dim], constant

    Value operator()(const Value& x) const { return matmul(x, w); }
    std::size_t out_dim() const { return w.shape()[1]; }
};

/// The frozen loss embedders plus the trainable discriminator. Each embedder
/// is a fixed random full-rank map composed with the generator's ground-truth
/// factor read-out, so every loss term keeps its semantic role: identity reads
/// identity factors, expression reads expression factors, the eyebrow channel
/// reads a designated expression sub-block, the contour reads identity+pose,
/// and the perceptual embedder reads a full-rank mixture of the raw sample.
struct EmbedderSuite {
    LinearEmbedder identity;
    LinearEmbedder expression;
    LinearEmbedder eyebrow;
    LinearEmbedder perceptual;
    LinearEmbedder contour;
    Mlp discriminator; // on the concatenated pair [I_t, I_x]

    ParamList discriminator_params() const { return discriminator.params("discriminator"); }
};

namespace detail {

// Composes selected read-out rows with a random square mixing map A:
// W[s][o] = sum_b pinv[rows[b]][s] * A[b][o].
inline LinearEmbedder readout_embedder(const FactorWorld& world,
                                       const std::vector<std::size_t>& rows, Rng& rng) {
    const std::size_t s = world.config().sample_dim;
    const std::size_t b = rows.size();
    std::vector<double> mix = rng.normal_vector(b * b, 1.0 / std::sqrt(static_cast<double>(b)));
    std::vector<double> w(s * b, 0.0);
    for (std::size_t col = 0; col < s; ++col)
        for (std::size_t i = 0; i < b; ++i) {
            double r = world.pinv()[rows[i] * s + col];
            for (std::size_t o = 0; o < b; ++o) w[col * b + o] += r * mix[i * b + o];
        }
    return LinearEmbedder{Value::constant({s, b}, std::move(w))};
}

inline std::vector<std::size_t> index_range(std::size_t offset, std::size_t len) {
    std::vector<std::size_t> out(len);
    for (std::size_t i = 0; i < len; ++i) out[i] = offset + i;
    return out;
}

} // namespace detail

/// Number of expression channels treated as the eyebrow sub-block.
inline constexpr std::size_t kEyebrowChannels = 4;

inline EmbedderSuite make_embedder_suite(const FactorWorld& world, const Rng& rng,
                                         std::size_t discriminator_hidden = 64) {
    const FactorConfig& c = world.config();
    EmbedderSuite suite;
    Rng id_rng = rng.split(20), ex_rng = rng.split(21), eye_rng = rng.split(22),
        perc_rng = rng.split(23), cont_rng = rng.split(24), disc_rng = rng.split(25);

    suite.identity = detail::readout_embedder(world, detail::index_range(0, c.dim_identity), id_rng);
    suite.expression = detail::readout_embedder(
        world, detail::index_range(c.dim_identity, c.dim_expression), ex_rng);
    suite.eyebrow = detail::readout_embedder(
        world, detail::index_range(c.dim_identity, std::min(kEyebrowChannels, c.dim_expression)),
        eye_rng);

    std::vector<std::size_t> contour_rows = detail::index_range(0, c.dim_identity);
    for (std::size_t i : detail::index_range(c.dim_identity + c.dim_expression, c.dim_pose))
        contour_rows.push_back(i);
    suite.contour = detail::readout_embedder(world, contour_rows, cont_rng);

    suite.perceptual = LinearEmbedder{Value::constant(
        {c.sample_dim, c.sample_dim},
        perc_rng.normal_vector(c.sample_dim * c.sample_dim,
                               1.0 / std::sqrt(static_cast<double>(c.sample_dim))))};

    suite.discriminator = Mlp(2 * c.sample_dim, discriminator_hidden, 1, disc_rng);
    return suite;
}

struct NormLossWeights {
    double rec = 10.0;
    double perc = 5.0;
    double id = 10.0;
    double lm = 5000.0;
    double exp = 5000.0;
    double eye = 10.0;
};

struct NormalizerConfig {
    std::size_t sample_dim = 64;
    std::size_t n_patches = 16;
    std::size_t model_dim = 32;
    std::size_t num_heads = 4;
    std::size_t encoder_hidden = 192;
    std::size_t decoder_hidden = 192;
};

/// Shared encoder (one parameter set embeds both streams), the Expression
/// Merging Module, and the decoder back to sample space.
struct NormalizerModel {
    NormalizerConfig cfg;
    AttentionConfig attention;
    Mlp encoder; // sample_dim -> N*L patch embeddings
    EmmParams emm;
    Mlp decoder; // N*L -> sample_dim

    NormalizerModel() = default;
    NormalizerModel(const NormalizerConfig& config, Rng& rng)
        : cfg(config),
          attention(config.model_dim, config.num_heads),
          encoder(config.sample_dim, config.encoder_hidden, config.n_patches * config.model_dim,
                  rng),
          emm(attention, rng),
          decoder(config.n_patches * config.model_dim, config.decoder_hidden, config.sample_dim,
                  rng) {}

    Value encode(const Value& sample) const {
        if (sample.rank() != 1 || sample.shape()[0] != cfg.sample_dim)
            throw DimensionError("normalizer: sample has shape " + shape_str(sample.shape()) +
                                 ", expected [" + std::to_string(cfg.sample_dim) + "]");
        return reshape(encoder(sample), {cfg.n_patches, cfg.model_dim});
    }

    ParamList params(const std::string& prefix) const {
        ParamList out = encoder.params(prefix + ".encoder");
        append_params(out, prefix, emm.params("emm"));
        append_params(out, prefix, decoder.params("decoder"));
        return out;
    }
};

/// I_n = D_f(EMM(E_s(I_t), E_s(I_o))): expression from the original face fused
/// into the target face's representation.
inline Value normalize(const Value& original, const Value& target, const NormalizerModel& model) {
    Value e_o = model.encode(original);
    Value e_t = model.encode(target);
    Value e_n = emm_forward(e_t, e_o, model.emm, model.attention);
    return model.decoder(reshape(e_n, {model.cfg.n_patches * model.cfg.model_dim}));
}

struct NormLossResult {
    Value total;
    std::map<std::string, double> raw;           // unweighted term values
    std::map<std::string, double> contributions; // weighted; sums to total
};

/// The seven-term normalization objective. The reconstruction term is active
/// only on pairs where the original was forced equal to the target.
inline NormLossResult norm_loss(const Value& original, const Value& target,
                                const Value& normalized, const EmbedderSuite& suite,
                                const NormLossWeights& w, bool is_reconstruction_pair) {
    Value pair = concat({target, normalized});
    Value adv = neg(mean(suite.discriminator(pair)));
    Value perc = l2_norm(sub(suite.perceptual(target), suite.perceptual(normalized)));
    Value id = sub(Value::scalar(1.0), cosine_similarity(suite.identity(target),
                                                         suite.identity(normalized)));
    Value lm = l2_norm(sub(suite.contour(target), suite.contour(normalized)));
    Value expr = l2_norm(sub(suite.expression(original), suite.expression(normalized)));
    Value eye = l2_norm(sub(suite.eyebrow(original), suite.eyebrow(normalized)));

    NormLossResult out;
    Value total = adv;
    out.raw["adv"] = adv.item();
    out.contributions["adv"] = adv.item();
    if (is_reconstruction_pair) {
        Value rec = l2_norm(sub(normalized, target));
        total = add(total, mul_scalar(rec, w.rec));
        out.raw["rec"] = rec.item();
        out.contributions["rec"] = w.rec * rec.item();
    } else {
        out.raw["rec"] = 0.0;
        out.contributions["rec"] = 0.0;
    }
    total = add(total, mul_scalar(perc, w.perc));
    total = add(total, mul_scalar(id, w.id));
    total = add(total, mul_scalar(lm, w.lm));
    total = add(total, mul_scalar(expr, w.exp));
    total = add(total, mul_scalar(eye, w.eye));
    out.raw["perc"] = perc.item();
    out.raw["id"] = id.item();
    out.raw["lm"] = lm.item();
    out.raw["exp"] = expr.item();
    out.raw["eye"] = eye.item();
    out.contributions["perc"] = w.perc * perc.item();
    out.contributions["id"] = w.id * id.item();
    out.contributions["lm"] = w.lm * lm.item();
    out.contributions["exp"] = w.exp * expr.item();
    out.contributions["eye"] = w.eye * eye.item();
    out.total = total;
    return out;
}

/// Hinge discriminator objective over batches of concatenated pairs:
/// mean(relu(1 - D(real))) + mean(relu(1 + D(fake))).
template <typename Disc>
Value discriminator_loss(const std::vector<Value>& real_pairs,
                         const std::vector<Value>& fake_pairs, const Disc& discriminator) {
    if (real_pairs.empty() || fake_pairs.empty())
        throw EmptyInputError("discriminator_loss: empty batch");
    std::vector<Value> real_scores, fake_scores;
    for (const Value& p : real_pairs) real_scores.push_back(discriminator(p));
    for (const Value& p : fake_pairs) fake_scores.push_back(discriminator(p));
    Value real_term = mean(relu(add_scalar(neg(concat(real_scores)), 1.0)));
    Value fake_term = mean(relu(add_scalar(concat(fake_scores), 1.0)));
    return add(real_term, fake_term);
}

struct NormalizerTrainConfig {
    std::size_t steps = 2000;
    std::size_t batch_size = 32;
    double lr = 1e-4;
    double beta1 = 0.0;
    double beta2 = 0.99;
    double p_reconstruction = 0.2;
};

struct LossCurvePoint {
    std::size_t step;
    std::string term;
    double value;
};

/// Alternating generator/discriminator training (one D step per G step).
/// Pairs (I_o, I_t) are drawn uniformly; with probability p_reconstruction the
/// pair is forced to I_o = I_t and the reconstruction term activates.
inline std::vector<LossCurvePoint> train_normalizer(const std::vector<FactorSample>& data,
                                                    NormalizerModel& model, EmbedderSuite& suite,
                                                    const NormLossWeights& weights,
                                                    const NormalizerTrainConfig& tc, Rng& rng) {
    if (data.empty()) throw EmptyInputError("train_normalizer: empty dataset");
    Adam gen_opt(model.params("model"), {.lr = tc.lr, .beta1 = tc.beta1, .beta2 = tc.beta2});
    Adam disc_opt(suite.discriminator_params(), {.lr = tc.lr, .beta1 = tc.beta1, .beta2 = tc.beta2});

    std::vector<LossCurvePoint> curves;
    const char* term_names[] = {"adv", "rec", "perc", "id", "lm", "exp", "eye"};

    for (std::size_t step = 0; step < tc.steps; ++step) {
        std::vector<Value> originals, targets, fakes;
        std::vector<bool> forced;
        for (std::size_t b = 0; b < tc.batch_size; ++b) {
            const FactorSample& t = data[rng.uniform_index(data.size())];
            bool force = rng.uniform() < tc.p_reconstruction;
            const FactorSample& o = force ? t : data[rng.uniform_index(data.size())];
            originals.push_back(Value::constant({o.observed.size()}, o.observed));
            targets.push_back(Value::constant({t.observed.size()}, t.observed));
            forced.push_back(force);
        }

        // Generator step.
        gen_opt.zero_grad();
        disc_opt.zero_grad();
        Value g_total;
        std::map<std::string, double> term_sums;
        for (std::size_t b = 0; b < tc.batch_size; ++b) {
            Value i_n = normalize(originals[b], targets[b], model);
            fakes.push_back(detach(i_n));
            NormLossResult r = norm_loss(originals[b], targets[b], i_n, suite, weights, forced[b]);
            for (const auto& [k, v] : r.raw) term_sums[k] += v;
            g_total = g_total.defined() ? add(g_total, r.total) : r.total;
        }
        g_total = mul_scalar(g_total, 1.0 / static_cast<double>(tc.batch_size));
        for (const char* name : term_names) {
            double v = term_sums[name] / static_cast<double>(tc.batch_size);
            if (!std::isfinite(v))
                throw EvaluationError("train_normalizer: non-finite " + std::string(name) +
                                      " at step " + std::to_string(step));
            curves.push_back({step, name, v});
        }
        curves.push_back({step, "total", g_total.item()});
        if (!std::isfinite(g_total.item()))
            throw EvaluationError("train_normalizer: non-finite total at step " +
                                  std::to_string(step));
        g_total.backward();
        gen_opt.step();

        // Discriminator step on detached fakes and fresh real samples.
        disc_opt.zero_grad();
        std::vector<Value> real_pairs, fake_pairs;
        for (std::size_t b = 0; b < tc.batch_size; ++b) {
            const FactorSample& real = data[rng.uniform_index(data.size())];
            real_pairs.push_back(
                concat({targets[b], Value::constant({real.observed.size()}, real.observed)}));
            fake_pairs.push_back(concat({targets[b], fakes[b]}));
        }
        Value d_loss = discriminator_loss(real_pairs, fake_pairs, suite.discriminator);
        if (!std::isfinite(d_loss.item()))
            throw EvaluationError("train_normalizer: non-finite discriminator loss at step " +
                                  std::to_string(step));
        curves.push_back({step, "disc", d_loss.item()});
        d_loss.backward();
        disc_opt.step();
    }
    return curves;
}

} // namespace norface
