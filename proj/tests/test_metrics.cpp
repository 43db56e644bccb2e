#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "norface/metrics.hpp"
#include "norface/rng.hpp"

using namespace norface;

namespace {

// Brute-force F1 through the confusion-matrix identity 2TP / (2TP + FP + FN),
// an algebraic route independent of the precision/recall form.
double f1_bruteforce(const std::vector<int>& pred, const std::vector<int>& target) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        tp += (pred[i] == 1 && target[i] == 1);
        fp += (pred[i] == 1 && target[i] == 0);
        fn += (pred[i] == 0 && target[i] == 1);
    }
    double denom = 2.0 * tp + fp + fn;
    return denom == 0.0 ? 0.0 : 2.0 * tp / denom;
}

// Brute-force ICC(3,1): build the full ANOVA residual table cell by cell.
double icc_bruteforce(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    double grand = 0.0;
    for (std::size_t i = 0; i < n; ++i) grand += a[i] + b[i];
    grand /= double(2 * n);
    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_a += a[i];
        mean_b += b[i];
    }
    mean_a /= double(n);
    mean_b /= double(n);

    double ss_rows = 0.0, ss_err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row_mean = 0.5 * (a[i] + b[i]);
        ss_rows += 2.0 * (row_mean - grand) * (row_mean - grand);
        // Residuals of the additive two-way model, cell by cell.
        double res_a = a[i] - row_mean - mean_a + grand;
        double res_b = b[i] - row_mean - mean_b + grand;
        ss_err += res_a * res_a + res_b * res_b;
    }
    double ms_rows = ss_rows / double(n - 1);
    double ms_err = ss_err / double(n - 1);
    return (ms_rows - ms_err) / (ms_rows + ms_err);
}

} // namespace

TEST_CASE("f1 trivial cases") {
    REQUIRE(f1_score({1, 0, 1}, {1, 0, 1}) == 1.0);
    // pred (1,1,0,0) vs target (1,0,1,0): precision 1/2, recall 1/2 -> 0.5.
    REQUIRE(f1_score({1, 1, 0, 0}, {1, 0, 1, 0}) == Catch::Approx(0.5).epsilon(1e-15));
    REQUIRE(f1_score({0, 0, 0}, {1, 1, 0}) == 0.0);
}

TEST_CASE("f1 input validation") {
    REQUIRE_THROWS_AS(f1_score({1, 0}, {1}), DimensionError);
    REQUIRE_THROWS_AS(f1_score({2, 0}, {1, 0}), NumericDomainError);
}

TEST_CASE("f1 matches the brute-force confusion identity on 100 random cases") {
    Rng rng(201);
    for (int c = 0; c < 100; ++c) {
        std::size_t n = 3 + rng.uniform_index(40);
        std::vector<int> pred(n), target(n);
        for (std::size_t i = 0; i < n; ++i) {
            pred[i] = rng.uniform() < 0.4 ? 1 : 0;
            target[i] = rng.uniform() < 0.5 ? 1 : 0;
        }
        REQUIRE(f1_score(pred, target) ==
                Catch::Approx(f1_bruteforce(pred, target)).margin(1e-9));
    }
}

TEST_CASE("macro f1 is the unweighted mean of per-label f1") {
    Rng rng(202);
    std::vector<std::vector<int>> preds, targets;
    double acc = 0.0;
    for (int j = 0; j < 5; ++j) {
        std::vector<int> p(20), t(20);
        for (int i = 0; i < 20; ++i) {
            p[i] = rng.uniform() < 0.5;
            t[i] = rng.uniform() < 0.5;
        }
        acc += f1_score(p, t);
        preds.push_back(p);
        targets.push_back(t);
    }
    REQUIRE(macro_f1(preds, targets) == Catch::Approx(acc / 5.0).margin(1e-12));
}

TEST_CASE("icc trivial properties") {
    std::vector<double> t = {0, 1, 2, 3, 4, 5};
    REQUIRE(icc(t, t) == Catch::Approx(1.0).margin(1e-12));
    std::vector<double> shifted = t;
    for (auto& v : shifted) v += 2.5; // consistency form ignores additive bias
    REQUIRE(icc(shifted, t) == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("icc matches the brute-force ANOVA oracle on random tables") {
    Rng rng(203);
    for (int c = 0; c < 100; ++c) {
        std::size_t n = 10;
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            b[i] = rng.uniform(0.0, 5.0);
            a[i] = b[i] + rng.normal() * 0.8;
        }
        REQUIRE(icc(a, b) == Catch::Approx(icc_bruteforce(a, b)).margin(1e-9));
    }
}

TEST_CASE("icc rejects degenerate tables") {
    REQUIRE_THROWS_AS(icc({1.0}, {1.0}), DimensionError);
    REQUIRE_THROWS_AS(icc({2, 2, 2}, {2, 2, 2}), DegenerateInputError);
}

TEST_CASE("mse and mae closed forms") {
    auto [mse0, mae0] = mse_mae({1, 2, 3}, {1, 2, 3});
    REQUIRE(mse0 == 0.0);
    REQUIRE(mae0 == 0.0);
    // pred (0,2), target (1,0): squared errors (1,4) -> 2.5; abs (1,2) -> 1.5.
    auto [mse1, mae1] = mse_mae({0, 2}, {1, 0});
    REQUIRE(mse1 == Catch::Approx(2.5).epsilon(1e-15));
    REQUIRE(mae1 == Catch::Approx(1.5).epsilon(1e-15));
    REQUIRE_THROWS_AS(mse_mae({1}, {1, 2}), DimensionError);
}

TEST_CASE("mae never exceeds sqrt(mse)") {
    Rng rng(204);
    for (int c = 0; c < 100; ++c) {
        std::size_t n = 2 + rng.uniform_index(30);
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = rng.normal() * 3.0;
            b[i] = rng.normal() * 3.0;
        }
        auto [mse, mae] = mse_mae(a, b);
        REQUIRE(mae <= std::sqrt(mse) + 1e-12);
    }
}

TEST_CASE("accuracy counts exact matches") {
    REQUIRE(accuracy({1, 2, 3}, {1, 2, 3}) == 1.0);
    REQUIRE(accuracy({1, 2, 3, 4}, {1, 0, 3, 0}) == 0.5);
    REQUIRE_THROWS_AS(accuracy({}, {}), EmptyInputError);
}

TEST_CASE("metrics report validation") {
    MetricsReport r;
    r.task = "fer";
    r.aggregate = 0.9;
    r.validate();
    r.aggregate = 1.5;
    REQUIRE_THROWS_AS(r.validate(), NumericDomainError);
    MetricsReport ri;
    ri.task = "au-intensity";
    ri.aggregate = 0.5;
    ri.extra["mse"] = -0.1;
    REQUIRE_THROWS_AS(ri.validate(), NumericDomainError);
}
