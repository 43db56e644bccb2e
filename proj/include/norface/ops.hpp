#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "norface/value.hpp"

namespace norface {
namespace detail {

inline void check_same_shape(const Value& a, const Value& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shapes disagree: " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
}

inline double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline double stable_softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// Elementwise op with a data-dependent local derivative.
template <typename Fwd, typename Dfn>
Value unary_elementwise(const Value& a, Fwd f, Dfn df) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a.data()[i]);
    NodePtr pa = a.node();
    return make_result(a.shape(), std::move(out), {pa}, [pa, df](ValueNode& y) {
        for (std::size_t i = 0; i < y.data.size(); ++i)
            pa->grad[i] += y.grad[i] * df(pa->data[i], y.data[i]);
    });
}

} // namespace detail

inline Value add(const Value& a, const Value& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    NodePtr pa = a.node(), pb = b.node();
    return detail::make_result(a.shape(), std::move(out), {pa, pb}, [pa, pb](ValueNode& y) {
        if (pa->requires_grad)
            for (std::size_t i = 0; i < y.grad.size(); ++i) pa->grad[i] += y.grad[i];
        if (pb->requires_grad)
            for (std::size_t i = 0; i < y.grad.size(); ++i) pb->grad[i] += y.grad[i];
    });
}

inline Value sub(const Value& a, const Value& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    NodePtr pa = a.node(), pb = b.node();
    return detail::make_result(a.shape(), std::move(out), {pa, pb}, [pa, pb](ValueNode& y) {
        if (pa->requires_grad)
            for (std::size_t i = 0; i < y.grad.size(); ++i) pa->grad[i] += y.grad[i];
        if (pb->requires_grad)
            for (std::size_t i = 0; i < y.grad.size(); ++i) pb->grad[i] -= y.grad[i];
    });
}

/// Elementwise product.
inline Value mul(const Value& a, const Value& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    NodePtr pa = a.node(), pb = b.node();
    return detail::make_result(a.shape(), std::move(out), {pa, pb}, [pa, pb](ValueNode& y) {
        if (pa->requires_grad)
            for (std::size_t i = 0; i < y.grad.size(); ++i) pa->grad[i] += y.grad[i] * pb->data[i];
        if (pb->requires_grad)
            for (std::size_t i = 0; i < y.grad.size(); ++i) pb->grad[i] += y.grad[i] * pa->data[i];
    });
}

/// Elementwise quotient.
inline Value div(const Value& a, const Value& b) {
    detail::check_same_shape(a, b, "div");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] / b.data()[i];
    NodePtr pa = a.node(), pb = b.node();
    return detail::make_result(a.shape(), std::move(out), {pa, pb}, [pa, pb](ValueNode& y) {
        for (std::size_t i = 0; i < y.grad.size(); ++i) {
            double bi = pb->data[i];
            if (pa->requires_grad) pa->grad[i] += y.grad[i] / bi;
            if (pb->requires_grad) pb->grad[i] -= y.grad[i] * pa->data[i] / (bi * bi);
        }
    });
}

inline Value add_scalar(const Value& a, double c) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
    NodePtr pa = a.node();
    return detail::make_result(a.shape(), std::move(out), {pa}, [pa](ValueNode& y) {
        for (std::size_t i = 0; i < y.grad.size(); ++i) pa->grad[i] += y.grad[i];
    });
}

inline Value mul_scalar(const Value& a, double c) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
    NodePtr pa = a.node();
    return detail::make_result(a.shape(), std::move(out), {pa}, [pa, c](ValueNode& y) {
        for (std::size_t i = 0; i < y.grad.size(); ++i) pa->grad[i] += y.grad[i] * c;
    });
}

inline Value neg(const Value& a) { return mul_scalar(a, -1.0); }

/// Tensor scaled by a scalar Value; gradient flows to both operands.
inline Value scale_by(const Value& a, const Value& s) {
    if (s.size() != 1)
        throw DimensionError("scale_by: scale must be scalar, got " + shape_str(s.shape()));
    double sv = s.data()[0];
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * sv;
    NodePtr pa = a.node(), ps = s.node();
    return detail::make_result(a.shape(), std::move(out), {pa, ps}, [pa, ps](ValueNode& y) {
        double sv2 = ps->data[0];
        if (pa->requires_grad)
            for (std::size_t i = 0; i < y.grad.size(); ++i) pa->grad[i] += y.grad[i] * sv2;
        if (ps->requires_grad) {
            double acc = 0.0;
            for (std::size_t i = 0; i < y.grad.size(); ++i) acc += y.grad[i] * pa->data[i];
            ps->grad[0] += acc;
        }
    });
}

/// Matrix product with rank-1 promotion: [p]x[pxq] -> [q], [nxp]x[p] -> [n],
/// [p]x[p] -> scalar. Backward: dL/da = g b^T, dL/db = a^T g.
inline Value matmul(const Value& a, const Value& b) {
    if (a.rank() > 2 || b.rank() > 2 || a.rank() == 0 || b.rank() == 0)
        throw DimensionError("matmul: operands must be rank 1 or 2, got " +
                             shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const bool a_vec = a.rank() == 1, b_vec = b.rank() == 1;
    const std::size_t n = a_vec ? 1 : a.shape()[0];
    const std::size_t p = a_vec ? a.shape()[0] : a.shape()[1];
    const std::size_t p2 = b_vec ? b.shape()[0] : b.shape()[0];
    const std::size_t q = b_vec ? 1 : b.shape()[1];
    if (p != p2)
        throw DimensionError("matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));

    std::vector<double> out(n * q, 0.0);
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < p; ++k) {
            double aik = ad[i * p + k];
            if (aik == 0.0) continue;
            const double* brow = bd + k * q;
            double* orow = out.data() + i * q;
            for (std::size_t j = 0; j < q; ++j) orow[j] += aik * brow[j];
        }

    Shape out_shape;
    if (a_vec && b_vec) out_shape = {1};
    else if (a_vec) out_shape = {q};
    else if (b_vec) out_shape = {n};
    else out_shape = {n, q};

    NodePtr pa = a.node(), pb = b.node();
    return detail::make_result(
        out_shape, std::move(out), {pa, pb}, [pa, pb, n, p, q](ValueNode& y) {
            const double* g = y.grad.data();
            if (pa->requires_grad) { // da = g . b^T
                const double* bd2 = pb->data.data();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t k = 0; k < p; ++k) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < q; ++j) acc += g[i * q + j] * bd2[k * q + j];
                        pa->grad[i * p + k] += acc;
                    }
            }
            if (pb->requires_grad) { // db = a^T . g
                const double* ad2 = pa->data.data();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t k = 0; k < p; ++k) {
                        double aik = ad2[i * p + k];
                        if (aik == 0.0) continue;
                        const double* grow = g + i * q;
                        double* brow = pb->grad.data() + k * q;
                        for (std::size_t j = 0; j < q; ++j) brow[j] += aik * grow[j];
                    }
            }
        });
}

inline Value transpose(const Value& a) {
    if (a.rank() != 2)
        throw DimensionError("transpose: expected rank 2, got " + shape_str(a.shape()));
    const std::size_t n = a.shape()[0], m = a.shape()[1];
    std::vector<double> out(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[j * n + i] = a.data()[i * m + j];
    NodePtr pa = a.node();
    return detail::make_result({m, n}, std::move(out), {pa}, [pa, n, m](ValueNode& y) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) pa->grad[i * m + j] += y.grad[j * n + i];
    });
}

inline Value reshape(const Value& a, Shape shape) {
    if (shape_numel(shape) != a.size())
        throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                             shape_str(shape));
    NodePtr pa = a.node();
    return detail::make_result(std::move(shape), a.data(), {pa}, [pa](ValueNode& y) {
        for (std::size_t i = 0; i < y.grad.size(); ++i) pa->grad[i] += y.grad[i];
    });
}

/// Concatenate rank-1 tensors end to end.
inline Value concat(const std::vector<Value>& parts) {
    if (parts.empty()) throw EmptyInputError("concat: no inputs");
    std::size_t total = 0;
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) {
        if (p.rank() != 1)
            throw DimensionError("concat: expected rank-1 parts, got " + shape_str(p.shape()));
        total += p.size();
        nodes.push_back(p.node());
    }
    std::vector<double> out;
    out.reserve(total);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    auto nodes_copy = nodes;
    return detail::make_result({total}, std::move(out), std::move(nodes),
                               [nodes_copy](ValueNode& y) {
                                   std::size_t off = 0;
                                   for (const auto& p : nodes_copy) {
                                       if (p->requires_grad)
                                           for (std::size_t i = 0; i < p->data.size(); ++i)
                                               p->grad[i] += y.grad[off + i];
                                       off += p->data.size();
                                   }
                               });
}

/// Concatenate rank-2 tensors with equal row counts along columns.
inline Value concat_cols(const std::vector<Value>& parts) {
    if (parts.empty()) throw EmptyInputError("concat_cols: no inputs");
    const std::size_t rows = parts.front().shape()[0];
    std::size_t total_cols = 0;
    std::vector<NodePtr> nodes;
    std::vector<std::size_t> widths;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.shape()[0] != rows)
            throw DimensionError("concat_cols: incompatible part " + shape_str(p.shape()));
        widths.push_back(p.shape()[1]);
        total_cols += p.shape()[1];
        nodes.push_back(p.node());
    }
    std::vector<double> out(rows * total_cols);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& d = parts[k].data();
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < widths[k]; ++j)
                out[i * total_cols + off + j] = d[i * widths[k] + j];
        off += widths[k];
    }
    auto nodes_copy = nodes;
    return detail::make_result(
        {rows, total_cols}, std::move(out), std::move(nodes),
        [nodes_copy, widths, rows, total_cols](ValueNode& y) {
            std::size_t col = 0;
            for (std::size_t k = 0; k < nodes_copy.size(); ++k) {
                const auto& p = nodes_copy[k];
                if (p->requires_grad)
                    for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < widths[k]; ++j)
                            p->grad[i * widths[k] + j] += y.grad[i * total_cols + col + j];
                col += widths[k];
            }
        });
}

inline Value slice_cols(const Value& a, std::size_t col0, std::size_t width) {
    if (a.rank() != 2)
        throw DimensionError("slice_cols: expected rank 2, got " + shape_str(a.shape()));
    const std::size_t rows = a.shape()[0], cols = a.shape()[1];
    if (col0 + width > cols)
        throw DimensionError("slice_cols: range [" + std::to_string(col0) + ", " +
                             std::to_string(col0 + width) + ") exceeds " + shape_str(a.shape()));
    std::vector<double> out(rows * width);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < width; ++j) out[i * width + j] = a.data()[i * cols + col0 + j];
    NodePtr pa = a.node();
    return detail::make_result({rows, width}, std::move(out), {pa},
                               [pa, rows, cols, col0, width](ValueNode& y) {
                                   for (std::size_t i = 0; i < rows; ++i)
                                       for (std::size_t j = 0; j < width; ++j)
                                           pa->grad[i * cols + col0 + j] += y.grad[i * width + j];
                               });
}

/// Single element of a rank-1 tensor as a scalar.
inline Value pick(const Value& a, std::size_t index) {
    if (a.rank() != 1)
        throw DimensionError("pick: expected rank 1, got " + shape_str(a.shape()));
    if (index >= a.size())
        throw DimensionError("pick: index " + std::to_string(index) + " out of range for " +
                             shape_str(a.shape()));
    NodePtr pa = a.node();
    return detail::make_result({1}, {a.data()[index]}, {pa}, [pa, index](ValueNode& y) {
        pa->grad[index] += y.grad[0];
    });
}

/// Row-broadcast add: a [N x d] + bias [d].
inline Value add_rows(const Value& a, const Value& bias) {
    if (a.rank() != 2 || bias.rank() != 1 || a.shape()[1] != bias.shape()[0])
        throw DimensionError("add_rows: shapes disagree: " + shape_str(a.shape()) + " vs " +
                             shape_str(bias.shape()));
    const std::size_t rows = a.shape()[0], cols = a.shape()[1];
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = a.data()[i * cols + j] + bias.data()[j];
    NodePtr pa = a.node(), pb = bias.node();
    return detail::make_result(a.shape(), std::move(out), {pa, pb}, [pa, pb, rows, cols](ValueNode& y) {
        if (pa->requires_grad)
            for (std::size_t i = 0; i < y.grad.size(); ++i) pa->grad[i] += y.grad[i];
        if (pb->requires_grad)
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) pb->grad[j] += y.grad[i * cols + j];
    });
}

inline Value sum(const Value& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    NodePtr pa = a.node();
    return detail::make_result({1}, {acc}, {pa}, [pa](ValueNode& y) {
        for (auto& g : pa->grad) g += y.grad[0];
    });
}

inline Value mean(const Value& a) {
    if (a.size() == 0) throw EmptyInputError("mean: empty input");
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    const double n = static_cast<double>(a.size());
    NodePtr pa = a.node();
    return detail::make_result({1}, {acc / n}, {pa}, [pa, n](ValueNode& y) {
        for (auto& g : pa->grad) g += y.grad[0] / n;
    });
}

/// Population variance over all elements.
inline Value variance(const Value& a) {
    if (a.size() == 0) throw EmptyInputError("variance: empty input");
    const double n = static_cast<double>(a.size());
    double mu = 0.0;
    for (double v : a.data()) mu += v;
    mu /= n;
    double var = 0.0;
    for (double v : a.data()) var += (v - mu) * (v - mu);
    var /= n;
    NodePtr pa = a.node();
    return detail::make_result({1}, {var}, {pa}, [pa, n, mu](ValueNode& y) {
        for (std::size_t i = 0; i < pa->data.size(); ++i)
            pa->grad[i] += y.grad[0] * 2.0 * (pa->data[i] - mu) / n;
    });
}

/// Population standard deviation over all elements.
inline Value stddev(const Value& a) {
    if (a.size() == 0) throw EmptyInputError("stddev: empty input");
    const double n = static_cast<double>(a.size());
    double mu = 0.0;
    for (double v : a.data()) mu += v;
    mu /= n;
    double var = 0.0;
    for (double v : a.data()) var += (v - mu) * (v - mu);
    var /= n;
    const double sd = std::sqrt(var);
    NodePtr pa = a.node();
    return detail::make_result({1}, {sd}, {pa}, [pa, n, mu, sd](ValueNode& y) {
        double denom = n * std::max(sd, kEpsilon);
        for (std::size_t i = 0; i < pa->data.size(); ++i)
            pa->grad[i] += y.grad[0] * (pa->data[i] - mu) / denom;
    });
}

inline Value relu(const Value& a) {
    return detail::unary_elementwise(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Value gelu(const Value& a) {
    return detail::unary_elementwise(
        a,
        [](double x) { return 0.5 * x * (1.0 + std::erf(x * 0.70710678118654752440)); },
        [](double x, double) {
            double cdf = 0.5 * (1.0 + std::erf(x * 0.70710678118654752440));
            double pdf = std::exp(-0.5 * x * x) * 0.39894228040143267794;
            return cdf + x * pdf;
        });
}

inline Value softplus(const Value& a) {
    return detail::unary_elementwise(
        a, [](double x) { return detail::stable_softplus(x); },
        [](double x, double) { return detail::stable_sigmoid(x); });
}

inline Value sigmoid(const Value& a) {
    return detail::unary_elementwise(
        a, [](double x) { return detail::stable_sigmoid(x); },
        [](double, double y) { return y * (1.0 - y); });
}

/// Softmax along the last axis (rows of a rank-2 tensor, or a whole rank-1
/// tensor), computed with max-subtraction. `axis` must name the last axis.
inline Value softmax(const Value& a, int axis = -1) {
    if (a.rank() != 1 && a.rank() != 2)
        throw DimensionError("softmax: expected rank 1 or 2, got " + shape_str(a.shape()));
    const int last = static_cast<int>(a.rank()) - 1;
    if (axis != -1 && axis != last)
        throw DimensionError("softmax: only the last axis is supported");
    const std::size_t d = a.shape().back();
    if (d < 1) throw DimensionError("softmax: empty axis");
    const std::size_t rows = a.size() / d;
    for (double v : a.data())
        if (!std::isfinite(v)) throw NumericDomainError("softmax: non-finite input");

    std::vector<double> out(a.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = a.data().data() + r * d;
        double m = x[0];
        for (std::size_t i = 1; i < d; ++i) m = std::max(m, x[i]);
        double z = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            out[r * d + i] = std::exp(x[i] - m);
            z += out[r * d + i];
        }
        for (std::size_t i = 0; i < d; ++i) out[r * d + i] /= z;
    }
    NodePtr pa = a.node();
    return detail::make_result(a.shape(), std::move(out), {pa}, [pa, rows, d](ValueNode& y) {
        for (std::size_t r = 0; r < rows; ++r) {
            const double* yv = y.data.data() + r * d;
            const double* g = y.grad.data() + r * d;
            double s = 0.0;
            for (std::size_t i = 0; i < d; ++i) s += g[i] * yv[i];
            for (std::size_t i = 0; i < d; ++i) pa->grad[r * d + i] += yv[i] * (g[i] - s);
        }
    });
}

/// Per-row layer normalization with affine gain/bias. Variance is the
/// population variance, stabilized by eps inside the square root.
inline Value layer_norm(const Value& x, const Value& gain, const Value& bias,
                        double eps = kEpsilon) {
    if (x.rank() != 1 && x.rank() != 2)
        throw DimensionError("layer_norm: expected rank 1 or 2, got " + shape_str(x.shape()));
    const std::size_t d = x.shape().back();
    if (gain.rank() != 1 || bias.rank() != 1 || gain.shape()[0] != d || bias.shape()[0] != d)
        throw DimensionError("layer_norm: gain/bias must be [d] with d=" + std::to_string(d));
    if (d == 1 && eps == 0.0)
        throw NumericDomainError("layer_norm: d=1 with eps=0 has zero variance");
    const std::size_t rows = x.size() / d;

    std::vector<double> out(x.size()), xhat(x.size()), inv(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data().data() + r * d;
        double mu = 0.0;
        for (std::size_t i = 0; i < d; ++i) mu += xr[i];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
        var /= static_cast<double>(d);
        inv[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t i = 0; i < d; ++i) {
            xhat[r * d + i] = (xr[i] - mu) * inv[r];
            out[r * d + i] = gain.data()[i] * xhat[r * d + i] + bias.data()[i];
        }
    }
    NodePtr px = x.node(), pg = gain.node(), pb = bias.node();
    return detail::make_result(
        x.shape(), std::move(out), {px, pg, pb},
        [px, pg, pb, rows, d, xhat, inv](ValueNode& y) {
            for (std::size_t r = 0; r < rows; ++r) {
                const double* g = y.grad.data() + r * d;
                const double* xh = xhat.data() + r * d;
                if (px->requires_grad) {
                    double m1 = 0.0, m2 = 0.0;
                    for (std::size_t i = 0; i < d; ++i) {
                        double dxh = g[i] * pg->data[i];
                        m1 += dxh;
                        m2 += dxh * xh[i];
                    }
                    m1 /= static_cast<double>(d);
                    m2 /= static_cast<double>(d);
                    for (std::size_t i = 0; i < d; ++i) {
                        double dxh = g[i] * pg->data[i];
                        px->grad[r * d + i] += inv[r] * (dxh - m1 - xh[i] * m2);
                    }
                }
                if (pg->requires_grad)
                    for (std::size_t i = 0; i < d; ++i) pg->grad[i] += g[i] * xh[i];
                if (pb->requires_grad)
                    for (std::size_t i = 0; i < d; ++i) pb->grad[i] += g[i];
            }
        });
}

/// Euclidean norm of all elements. The backward pass guards the division by
/// the shared kEpsilon so the zero vector does not produce non-finite grads.
inline Value l2_norm(const Value& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v * v;
    const double norm = std::sqrt(acc);
    NodePtr pa = a.node();
    return detail::make_result({1}, {norm}, {pa}, [pa, norm](ValueNode& y) {
        double denom = std::max(norm, kEpsilon);
        for (std::size_t i = 0; i < pa->data.size(); ++i)
            pa->grad[i] += y.grad[0] * pa->data[i] / denom;
    });
}

/// Cosine similarity of two same-shape tensors flattened to vectors.
inline Value cosine_similarity(const Value& a, const Value& b) {
    detail::check_same_shape(a, b, "cosine_similarity");
    double na = 0.0, nb = 0.0, dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        na += a.data()[i] * a.data()[i];
        nb += b.data()[i] * b.data()[i];
        dot += a.data()[i] * b.data()[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na == 0.0 || nb == 0.0)
        throw NumericDomainError("cosine_similarity: zero-norm operand");
    const double c = dot / (na * nb);
    NodePtr pa = a.node(), pb = b.node();
    return detail::make_result({1}, {c}, {pa, pb}, [pa, pb, na, nb, c](ValueNode& y) {
        double g = y.grad[0];
        for (std::size_t i = 0; i < pa->data.size(); ++i) {
            if (pa->requires_grad)
                pa->grad[i] += g * (pb->data[i] / (na * nb) - c * pa->data[i] / (na * na));
            if (pb->requires_grad)
                pb->grad[i] += g * (pa->data[i] / (na * nb) - c * pb->data[i] / (nb * nb));
        }
    });
}

/// Shannon entropy -sum(p ln p) of a probability vector, with 0 ln 0 := 0.
inline Value entropy(const Value& p) {
    if (p.rank() != 1) throw DimensionError("entropy: expected rank 1, got " + shape_str(p.shape()));
    double total = 0.0;
    for (double v : p.data()) {
        if (v < 0.0)
            throw ProbabilityDomainError("entropy: negative probability " + std::to_string(v));
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-6)
        throw ProbabilityDomainError("entropy: probabilities sum to " + std::to_string(total));
    double h = 0.0;
    for (double v : p.data())
        if (v > 0.0) h -= v * std::log(v);
    NodePtr pp = p.node();
    return detail::make_result({1}, {h}, {pp}, [pp](ValueNode& y) {
        for (std::size_t i = 0; i < pp->data.size(); ++i) {
            double v = pp->data[i];
            if (v > 0.0) pp->grad[i] -= y.grad[0] * (std::log(v) + 1.0);
        }
    });
}

/// log(sum(exp(x))) of a rank-1 tensor, max-stabilized.
inline Value logsumexp(const Value& a) {
    if (a.rank() != 1)
        throw DimensionError("logsumexp: expected rank 1, got " + shape_str(a.shape()));
    double m = a.data()[0];
    for (double v : a.data()) m = std::max(m, v);
    double z = 0.0;
    for (double v : a.data()) z += std::exp(v - m);
    const double lse = m + std::log(z);
    NodePtr pa = a.node();
    return detail::make_result({1}, {lse}, {pa}, [pa, lse](ValueNode& y) {
        for (std::size_t i = 0; i < pa->data.size(); ++i)
            pa->grad[i] += y.grad[0] * std::exp(pa->data[i] - lse);
    });
}

inline Value dot(const Value& a, const Value& b) { return sum(mul(a, b)); }

} // namespace norface
