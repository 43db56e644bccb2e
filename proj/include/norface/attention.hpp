#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "norface/nn.hpp"
#include "norface/ops.hpp"

namespace norface {

struct AttentionConfig {
    std::size_t model_dim = 32;
    std::size_t num_heads = 4;

    AttentionConfig() = default;
    AttentionConfig(std::size_t dim, std::size_t heads) : model_dim(dim), num_heads(heads) {
        if (heads == 0 || dim % heads != 0)
            throw ConfigurationError("attention: num_heads " + std::to_string(heads) +
                                     " must divide model_dim " + std::to_string(dim));
    }

    std::size_t head_dim() const { return model_dim / num_heads; }
};

/// Q/K/V/output projections, each [L x L] partitioned across heads by column.
struct AttentionParams {
    Value wq, wk, wv, wo;

    AttentionParams() = default;
    AttentionParams(std::size_t dim, Rng& rng) {
        double scale = 1.0 / std::sqrt(static_cast<double>(dim));
        wq = Value::randn({dim, dim}, rng, scale);
        wk = Value::randn({dim, dim}, rng, scale);
        wv = Value::randn({dim, dim}, rng, scale);
        wo = Value::randn({dim, dim}, rng, scale);
    }

    ParamList params(const std::string& prefix) const {
        return {{prefix + ".wq", wq}, {prefix + ".wk", wk},
                {prefix + ".wv", wv}, {prefix + ".wo", wo}};
    }
};

/// Multi-head cross-attention with the target stream kept as a residual: per
/// head, softmax(Q_t K_o^T / sqrt(d_k)) V_o + V_t, heads concatenated and
/// output-projected. With query == key source this is standard self-attention
/// plus a value-stream residual; `include_value_residual=false` drops it.
///
/// `attn_out`, when given, receives each head's row-stochastic weight matrix.
inline Value cross_attention(const Value& e_t, const Value& e_o, const AttentionParams& p,
                             const AttentionConfig& cfg, bool include_value_residual = true,
                             std::vector<Value>* attn_out = nullptr) {
    if (e_t.rank() != 2 || e_o.rank() != 2)
        throw DimensionError("cross_attention: inputs must be [N x L]");
    if (e_t.shape()[1] != cfg.model_dim || e_o.shape()[1] != cfg.model_dim ||
        e_t.shape()[0] != e_o.shape()[0])
        throw DimensionError("cross_attention: incompatible inputs " + shape_str(e_t.shape()) +
                             " and " + shape_str(e_o.shape()) + " for model_dim " +
                             std::to_string(cfg.model_dim));
    if (e_t.shape()[0] == 0) throw EmptyInputError("cross_attention: zero patches");

    const std::size_t dk = cfg.head_dim();
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

    Value q = matmul(e_t, p.wq);
    Value k = matmul(e_o, p.wk);
    Value v_o = matmul(e_o, p.wv);
    Value v_t = matmul(e_t, p.wv);

    std::vector<Value> heads;
    heads.reserve(cfg.num_heads);
    for (std::size_t h = 0; h < cfg.num_heads; ++h) {
        Value qh = slice_cols(q, h * dk, dk);
        Value kh = slice_cols(k, h * dk, dk);
        Value scores = mul_scalar(matmul(qh, transpose(kh)), inv_sqrt_dk);
        Value attn = softmax(scores);
        if (attn_out) attn_out->push_back(attn);
        Value head = matmul(attn, slice_cols(v_o, h * dk, dk));
        if (include_value_residual) head = add(head, slice_cols(v_t, h * dk, dk));
        heads.push_back(head);
    }
    return matmul(concat_cols(heads), p.wo);
}

inline Value self_attention(const Value& x, const AttentionParams& p, const AttentionConfig& cfg) {
    return cross_attention(x, x, p, cfg, /*include_value_residual=*/false);
}

/// Pre-LN transformer block: x + attn(LN(x)), then x + MLP(LN(x)).
struct TransformerBlockParams {
    AttentionParams attn;
    LayerNormParams ln1, ln2;
    Mlp mlp;

    TransformerBlockParams() = default;
    TransformerBlockParams(std::size_t dim, Rng& rng)
        : attn(dim, rng), ln1(dim), ln2(dim), mlp(dim, 4 * dim, dim, rng) {}

    ParamList params(const std::string& prefix) const {
        ParamList out = attn.params(prefix + ".attn");
        append_params(out, prefix, ln1.params("ln1"));
        append_params(out, prefix, ln2.params("ln2"));
        append_params(out, prefix, mlp.params("mlp"));
        return out;
    }
};

inline Value transformer_block(const Value& x, const TransformerBlockParams& p,
                               const AttentionConfig& cfg) {
    Value h = add(x, self_attention(p.ln1(x), p.attn, cfg));
    return add(h, p.mlp(p.ln2(h)));
}

/// Expression Merging Module: cross-attention fusing the original-face stream
/// into the target-face stream, an LN+MLP stage with residual, then two
/// transformer blocks.
struct EmmParams {
    AttentionParams cross;
    LayerNormParams ln;
    Mlp mlp;
    TransformerBlockParams block0, block1;

    EmmParams() = default;
    EmmParams(const AttentionConfig& cfg, Rng& rng)
        : cross(cfg.model_dim, rng),
          ln(cfg.model_dim),
          mlp(cfg.model_dim, 4 * cfg.model_dim, cfg.model_dim, rng),
          block0(cfg.model_dim, rng),
          block1(cfg.model_dim, rng) {}

    ParamList params(const std::string& prefix) const {
        ParamList out = cross.params(prefix + ".cross");
        append_params(out, prefix, ln.params("ln"));
        append_params(out, prefix, mlp.params("mlp"));
        append_params(out, prefix, block0.params("block0"));
        append_params(out, prefix, block1.params("block1"));
        return out;
    }
};

inline Value emm_forward(const Value& e_t, const Value& e_o, const EmmParams& p,
                         const AttentionConfig& cfg) {
    Value fused = cross_attention(e_t, e_o, p.cross, cfg);
    Value x = add(fused, p.mlp(p.ln(fused)));
    x = transformer_block(x, p.block0, cfg);
    return transformer_block(x, p.block1, cfg);
}

} // namespace norface
