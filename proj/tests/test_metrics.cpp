#include <doctest.h>

#include "mmf/eval/metrics.hpp"
#include "mmf/eval/robustness.hpp"
#include "test_util.hpp"

using namespace mmf;
using namespace mmf_test;

namespace {

// brute-force F1 oracle, counting every pixel combination explicitly
double f1_oracle(const Tensor<double>& pred_bin, const Tensor<double>& gt, bool invert) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        bool p = pred_bin.v[i] != 0.0;
        if (invert) p = !p;
        const bool y = gt.v[i] != 0.0;
        if (p && y) ++tp;
        else if (p && !y) ++fp;
        else if (!p && y) ++fn;
    }
    if (tp + fp + fn == 0) return 1.0;
    if (tp == 0) return 0.0;
    return 2.0 * double(tp) / double(2 * tp + fp + fn);
}

// O(n^2) pairwise AUC oracle with ties counted 1/2
double auc_oracle(const std::vector<double>& s, const std::vector<int>& y) {
    double num = 0;
    long pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[i] != 1 || y[j] != 0) continue;
            ++pairs;
            if (s[i] > s[j]) num += 1.0;
            else if (s[i] == s[j]) num += 0.5;
        }
    return num / double(pairs);
}

}  // namespace

TEST_CASE("pixel_f1: trivial and hand-computed cases") {
    Tensor<double> gt(Shape4(1, 1, 2, 2));
    gt.at(0, 0, 0, 0) = 1;

    SUBCASE("pred == gt gives 1.0") {
        Tensor<double> pred = gt;
        CHECK(pixel_f1(pred, gt) == 1.0);
    }
    SUBCASE("pred == complement gives 1.0 via the inverse rule") {
        Tensor<double> pred(gt.shape);
        for (std::size_t i = 0; i < gt.size(); ++i) pred.v[i] = 1.0 - gt.v[i];
        CHECK(pixel_f1(pred, gt) == 1.0);
    }
    SUBCASE("hand confusion matrix: plain 2/3 beats inverse 0") {
        // gt = [[1,0],[0,0]], pred = [[1,1],[0,0]]
        Tensor<double> pred(gt.shape);
        pred.at(0, 0, 0, 0) = 1;
        pred.at(0, 0, 0, 1) = 1;
        CHECK(pixel_f1(pred, gt) == doctest::Approx(2.0 / 3.0));
    }
    SUBCASE("empty gt and empty prediction score 1 by the zero-denominator rule") {
        Tensor<double> zero(Shape4(1, 1, 3, 3));
        CHECK(f1_from_counts(0, 0, 0) == 1.0);
        CHECK(f1_from_counts(0, 2, 1) == 0.0);
        CHECK(pixel_f1(zero, zero) == 1.0);
    }
    SUBCASE("non-binary gt rejected") {
        Tensor<double> bad = Tensor<double>::full(Shape4(1, 1, 2, 2), 0.5);
        Tensor<double> pred(bad.shape);
        CHECK_THROWS_AS(pixel_f1(pred, bad), std::invalid_argument);
    }
}

TEST_CASE("pixel_f1 matches the brute-force oracle on 1000 random instances") {
    Rng rng(1);
    for (int trial = 0; trial < 1000; ++trial) {
        const int h = 1 + int(rng.randint(1, 32));
        const int w = 1 + int(rng.randint(1, 32));
        Tensor<double> gt(Shape4(1, 1, h, w)), pred(Shape4(1, 1, h, w));
        const double density = rng.uniform();
        for (std::size_t i = 0; i < gt.size(); ++i) {
            gt.v[i] = rng.uniform() < density ? 1.0 : 0.0;
            pred.v[i] = rng.uniform();
        }
        Tensor<double> bin = binarize(pred, 0.5);
        const double expect = std::max(f1_oracle(bin, gt, false), f1_oracle(bin, gt, true));
        CHECK(pixel_f1(pred, gt) == expect);  // exact: same integer counts
    }
}

TEST_CASE("pixel_f1 invariants: >= plain F1, bounded, prediction-polarity invariant") {
    // With the inverse F1 defined on the polarity-inverted prediction against
    // the unchanged ground truth, flipping the prediction alone swaps the
    // plain and inverse terms, so the max is invariant.
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const int h = 2 + int(rng.randint(0, 12));
        Tensor<double> gt(Shape4(1, 1, h, h)), pred(Shape4(1, 1, h, h));
        for (std::size_t i = 0; i < gt.size(); ++i) {
            gt.v[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
            pred.v[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;  // already binary: flip is exact
        }
        const double v = pixel_f1(pred, gt);
        CHECK(v >= f1_oracle(pred, gt, false));
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        Tensor<double> predf(pred.shape);
        for (std::size_t i = 0; i < gt.size(); ++i) predf.v[i] = 1.0 - pred.v[i];
        CHECK(pixel_f1(predf, gt) == v);
    }
}

TEST_CASE("auc: trivial cases, oracle agreement, invariances") {
    SUBCASE("perfect separation gives 1.0, all ties give 0.5") {
        CHECK(auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == 1.0);
        CHECK(auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == 0.5);
    }
    SUBCASE("single-class input is an explicit error") {
        CHECK_THROWS_AS(auc({0.1, 0.2}, {1, 1}), std::invalid_argument);
        CHECK_THROWS_AS(auc({0.1, 0.2}, {0, 0}), std::invalid_argument);
    }
    SUBCASE("4-point case with one inversion matches the pairwise count") {
        std::vector<double> s{0.1, 0.6, 0.4, 0.9};
        std::vector<int> y{0, 0, 1, 1};
        CHECK(auc(s, y) == doctest::Approx(auc_oracle(s, y)).epsilon(1e-15));
    }
    SUBCASE("oracle agreement on 1000 random instances (ties included)") {
        Rng rng(3);
        for (int trial = 0; trial < 1000; ++trial) {
            const int n = 2 + int(rng.randint(0, 198));
            std::vector<double> s(n);
            std::vector<int> y(n);
            bool saw0 = false, saw1 = false;
            for (int i = 0; i < n; ++i) {
                s[i] = rng.uniform() < 0.3 ? 0.5 : rng.uniform();  // plant ties
                y[i] = rng.uniform() < 0.5 ? 1 : 0;
                (y[i] ? saw1 : saw0) = true;
            }
            if (!saw0) y[0] = 0;
            if (!saw1) y[n - 1] = 1;
            CHECK(std::abs(auc(s, y) - auc_oracle(s, y)) <= 1e-12);
        }
    }
    SUBCASE("complement under label flip for tie-free scores") {
        Rng rng(4);
        std::vector<double> s(50);
        std::vector<int> y(50);
        for (int i = 0; i < 50; ++i) {
            s[i] = rng.uniform() + i * 1e-6;  // distinct
            y[i] = i % 3 == 0 ? 1 : 0;
        }
        std::vector<int> yf(50);
        for (int i = 0; i < 50; ++i) yf[i] = 1 - y[i];
        CHECK(auc(s, y) + auc(s, yf) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("invariant under strictly increasing transforms") {
        Rng rng(5);
        std::vector<double> s(40);
        std::vector<int> y(40);
        for (int i = 0; i < 40; ++i) {
            s[i] = rng.uniform(-3, 3);
            y[i] = rng.uniform() < 0.5 ? 1 : 0;
        }
        y[0] = 0;
        y[1] = 1;
        std::vector<double> st(40);
        for (int i = 0; i < 40; ++i) st[i] = std::exp(2.0 * s[i]) + 1.0;
        CHECK(auc(s, y) == doctest::Approx(auc(st, y)).epsilon(1e-12));
    }
}

TEST_CASE("balanced accuracy: trivial and hand-counted cases") {
    CHECK(balanced_accuracy({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0}) == 1.0);
    // constant predictor: one rate 1, the other 0
    CHECK(balanced_accuracy({0.9, 0.9, 0.9, 0.9}, {1, 1, 0, 0}) == 0.5);
    CHECK(balanced_accuracy({0.1, 0.1, 0.1, 0.1}, {1, 1, 0, 0}) == 0.5);
    // mixed 6-sample case: tpr = 2/3, tnr = 2/3 -> 2/3
    std::vector<double> s{0.9, 0.8, 0.2, 0.1, 0.3, 0.7};
    std::vector<int> y{1, 1, 1, 0, 0, 0};
    CHECK(balanced_accuracy(s, y) == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(balanced_accuracy({0.5, 0.6}, {1, 1}), std::invalid_argument);
}

TEST_CASE("gaussian blur: constant unchanged, impulse matches taps, even kernel rejected") {
    Tensor<double> flat = Tensor<double>::full(Shape4(1, 3, 9, 9), 0.37);
    Tensor<double> b = gaussian_blur(flat, 5);
    for (double v : b.v) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));

    Tensor<double> imp(Shape4(1, 1, 15, 15));
    imp.at(0, 0, 7, 7) = 1.0;
    const int k = 3;
    Tensor<double> bi = gaussian_blur(imp, k);
    const double sigma = blur_sigma(k);
    double taps[3], sum = 0;
    for (int i = 0; i < 3; ++i) {
        taps[i] = std::exp(-0.5 * (i - 1) * (i - 1) / (sigma * sigma));
        sum += taps[i];
    }
    for (int i = 0; i < 3; ++i) taps[i] /= sum;
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
            CHECK(bi.at(0, 0, 7 + dy, 7 + dx) ==
                  doctest::Approx(taps[dy + 1] * taps[dx + 1]).epsilon(1e-12));

    CHECK_THROWS_AS(gaussian_blur(flat, 4), std::invalid_argument);
    DegradationSpec bad{DegradationKind::GaussianBlur, {4}};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("jpeg degradation is deterministic for a pinned codec") {
    Rng rng(6);
    Tensor<double> img = rand01<double>(Shape4(1, 3, 24, 24), rng);
    Tensor<double> a = degrade(img, DegradationKind::Jpeg, 60);
    Tensor<double> b = degrade(img, DegradationKind::Jpeg, 60);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    Tensor<double> c = degrade(img, DegradationKind::None, 0);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == img[i]);
}
