#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "norface/errors.hpp"

namespace norface {

namespace detail {

inline void check_lengths(std::size_t a, std::size_t b, const char* op) {
    if (a != b)
        throw DimensionError(std::string(op) + ": " + std::to_string(a) + " predictions vs " +
                             std::to_string(b) + " targets");
}

} // namespace detail

/// F1 = 2PR / (P + R) for one binary label; defined as 0 when P + R = 0.
inline double f1_score(const std::vector<int>& predictions, const std::vector<int>& targets) {
    detail::check_lengths(predictions.size(), targets.size(), "f1_score");
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        int p = predictions[i], t = targets[i];
        if (p != 0 && p != 1)
            throw NumericDomainError("f1_score: non-binary prediction " + std::to_string(p));
        if (t != 0 && t != 1)
            throw NumericDomainError("f1_score: non-binary target " + std::to_string(t));
        if (p == 1 && t == 1) ++tp;
        else if (p == 1) ++fp;
        else if (t == 1) ++fn;
    }
    double precision = (tp + fp) > 0 ? tp / (tp + fp) : 0.0;
    double recall = (tp + fn) > 0 ? tp / (tp + fn) : 0.0;
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

/// Unweighted mean of per-label F1 scores.
inline double macro_f1(const std::vector<std::vector<int>>& predictions_per_label,
                       const std::vector<std::vector<int>>& targets_per_label) {
    detail::check_lengths(predictions_per_label.size(), targets_per_label.size(), "macro_f1");
    if (predictions_per_label.empty()) throw EmptyInputError("macro_f1: no labels");
    double acc = 0.0;
    for (std::size_t j = 0; j < predictions_per_label.size(); ++j)
        acc += f1_score(predictions_per_label[j], targets_per_label[j]);
    return acc / static_cast<double>(predictions_per_label.size());
}

/// ICC(3,1), two-way mixed, consistency: (MS_R - MS_E) / (MS_R + MS_E) for the
/// two-column (prediction, target) rating table. Additive rater bias cancels.
inline double icc(const std::vector<double>& predictions, const std::vector<double>& targets) {
    detail::check_lengths(predictions.size(), targets.size(), "icc");
    const std::size_t n = predictions.size();
    if (n < 2) throw DimensionError("icc: need at least 2 ratings, got " + std::to_string(n));
    const double k = 2.0;

    double grand = 0.0;
    for (std::size_t i = 0; i < n; ++i) grand += predictions[i] + targets[i];
    grand /= (k * static_cast<double>(n));

    double col_mean_p = 0.0, col_mean_t = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        col_mean_p += predictions[i];
        col_mean_t += targets[i];
    }
    col_mean_p /= static_cast<double>(n);
    col_mean_t /= static_cast<double>(n);

    double ss_total = 0.0, ss_rows = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row_mean = 0.5 * (predictions[i] + targets[i]);
        ss_rows += k * (row_mean - grand) * (row_mean - grand);
        ss_total += (predictions[i] - grand) * (predictions[i] - grand) +
                    (targets[i] - grand) * (targets[i] - grand);
    }
    double ss_cols = static_cast<double>(n) * ((col_mean_p - grand) * (col_mean_p - grand) +
                                               (col_mean_t - grand) * (col_mean_t - grand));
    double ss_err = ss_total - ss_rows - ss_cols;
    double ms_rows = ss_rows / static_cast<double>(n - 1);
    double ms_err = ss_err / static_cast<double>(n - 1); // (n-1)(k-1) with k = 2

    double denom = ms_rows + ms_err;
    if (denom < 1e-300)
        throw DegenerateInputError("icc: zero variance in the rating table");
    return (ms_rows - ms_err) / denom;
}

inline std::pair<double, double> mse_mae(const std::vector<double>& predictions,
                                         const std::vector<double>& targets) {
    detail::check_lengths(predictions.size(), targets.size(), "mse_mae");
    if (predictions.empty()) throw EmptyInputError("mse_mae: empty input");
    double se = 0.0, ae = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        double d = predictions[i] - targets[i];
        se += d * d;
        ae += std::abs(d);
    }
    double n = static_cast<double>(predictions.size());
    return {se / n, ae / n};
}

inline double accuracy(const std::vector<std::size_t>& predictions,
                       const std::vector<std::size_t>& targets) {
    detail::check_lengths(predictions.size(), targets.size(), "accuracy");
    if (predictions.empty()) throw EmptyInputError("accuracy: empty input");
    double correct = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
        if (predictions[i] == targets[i]) correct += 1.0;
    return correct / static_cast<double>(predictions.size());
}

/// Per-label and aggregate scores for one evaluated run.
struct MetricsReport {
    std::string task;
    std::string variant;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::map<std::string, double> per_label;
    std::map<std::string, double> extra; // e.g. mean MSE/MAE for intensity
    double aggregate = 0.0;              // macro-F1 | mean ICC | accuracy
    double wall_seconds = 0.0;

    void validate() const {
        auto in_range = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
        if (task == "fer" || task == "au-detect") {
            if (!in_range(aggregate, 0.0, 1.0))
                throw NumericDomainError("metrics report: aggregate out of [0,1]");
        } else if (task == "au-intensity") {
            if (!in_range(aggregate, -1.0, 1.0))
                throw NumericDomainError("metrics report: ICC out of [-1,1]");
            for (const char* key : {"mse", "mae"})
                if (extra.count(key) && extra.at(key) < 0.0)
                    throw NumericDomainError("metrics report: negative error metric");
        }
    }
};

} // namespace norface
