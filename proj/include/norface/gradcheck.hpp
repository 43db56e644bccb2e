#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "norface/ops.hpp"
#include "norface/value.hpp"

namespace norface {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> per_param;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

namespace detail {

// Relative error with a floor so that near-zero gradient pairs compare in
// absolute terms instead of blowing up.
inline double rel_err(double a, double b) {
    constexpr double kFloor = 1e-6;
    double denom = std::max({std::abs(a), std::abs(b), kFloor});
    return std::abs(a - b) / denom;
}

} // namespace detail

/// Compares reverse-mode gradients of the scalar loss produced by `builder`
/// against central finite differences (h = 1e-5) for every entry of every
/// parameter. `builder` must re-run the forward pass from the current
/// parameter data on each call.
inline GradCheckReport check_gradients(const std::function<Value()>& builder,
                                       const std::vector<std::pair<std::string, Value>>& params,
                                       double tolerance) {
    constexpr double kStep = 1e-5;

    for (auto& [name, p] : params) const_cast<Value&>(p).zero_grad();
    Value loss = builder();
    if (!std::isfinite(loss.item()))
        throw EvaluationError("check_gradients: non-finite loss " + std::to_string(loss.item()));
    loss.backward();

    GradCheckReport report;
    report.tolerance = tolerance;
    for (const auto& [name, p] : params) {
        GradCheckEntry entry{name, 0.0};
        auto& data = const_cast<Value&>(p).data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double saved = data[i];
            data[i] = saved + kStep;
            double f_plus = builder().item();
            data[i] = saved - kStep;
            double f_minus = builder().item();
            data[i] = saved;
            if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
                throw EvaluationError("check_gradients: non-finite loss while perturbing " + name);
            const double fd = (f_plus - f_minus) / (2.0 * kStep);
            const double ad = p.grad()[i];
            entry.max_rel_err = std::max(entry.max_rel_err, detail::rel_err(ad, fd));
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.per_param.push_back(std::move(entry));
    }
    report.passed = report.max_rel_err < tolerance;
    return report;
}

} // namespace norface
