#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "norface/ops.hpp"
#include "norface/rng.hpp"
#include "norface/value.hpp"

namespace norface {

/// Named parameter list used by optimizers, checkpoints and gradient checks.
using ParamList = std::vector<std::pair<std::string, Value>>;

inline void append_params(ParamList& out, const std::string& prefix, const ParamList& params) {
    for (const auto& [name, v] : params) out.emplace_back(prefix + "." + name, v);
}

/// Affine map x -> x W + b for rank-1 or rank-2 (row-batched) inputs.
struct Linear {
    Value w; // [in x out]
    Value b; // [out]

    Linear() = default;
    Linear(std::size_t in, std::size_t out, Rng& rng)
        : w(Value::randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in)))),
          b(Value::zeros({out}, true)) {}

    Value operator()(const Value& x) const {
        Value y = matmul(x, w);
        return y.rank() == 2 ? add_rows(y, b) : add(y, b);
    }

    ParamList params(const std::string& prefix) const {
        return {{prefix + ".w", w}, {prefix + ".b", b}};
    }
};

/// Two-layer perceptron with a GELU in the middle.
struct Mlp {
    Linear l1, l2;

    Mlp() = default;
    Mlp(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng)
        : l1(in, hidden, rng), l2(hidden, out, rng) {}

    Value operator()(const Value& x) const { return l2(gelu(l1(x))); }

    ParamList params(const std::string& prefix) const {
        ParamList out = l1.params(prefix + ".l1");
        auto p2 = l2.params(prefix + ".l2");
        out.insert(out.end(), p2.begin(), p2.end());
        return out;
    }
};

struct LayerNormParams {
    Value gain, bias;

    LayerNormParams() = default;
    explicit LayerNormParams(std::size_t d)
        : gain(Value::param({d}, std::vector<double>(d, 1.0))), bias(Value::zeros({d}, true)) {}

    Value operator()(const Value& x) const { return layer_norm(x, gain, bias); }

    ParamList params(const std::string& prefix) const {
        return {{prefix + ".gain", gain}, {prefix + ".bias", bias}};
    }
};

/// Detached copy: same data, no graph history, no gradient.
inline Value detach(const Value& v) {
    return Value::constant(v.shape(), v.data());
}

/// Adam optimizer over a fixed parameter list.
class Adam {
public:
    struct Config {
        double lr = 1e-4;
        double beta1 = 0.0;
        double beta2 = 0.99;
        double eps = kEpsilon;
    };

    Adam(ParamList params, Config cfg) : params_(std::move(params)), cfg_(cfg) {
        for (const auto& [name, p] : params_) {
            m_.emplace_back(p.size(), 0.0);
            v_.emplace_back(p.size(), 0.0);
        }
    }

    void zero_grad() {
        for (auto& [name, p] : params_) p.zero_grad();
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto& p = params_[k].second;
            const auto& g = p.grad();
            for (std::size_t i = 0; i < p.size(); ++i) {
                m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g[i];
                v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                const double mhat = m_[k][i] / bc1;
                const double vhat = v_[k][i] / bc2;
                p.data()[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    const ParamList& params() const { return params_; }

private:
    ParamList params_;
    Config cfg_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

} // namespace norface
