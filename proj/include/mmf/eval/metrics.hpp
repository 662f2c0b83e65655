#pragma once

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "mmf/core/tensor.hpp"

namespace mmf {

struct Confusion {
    long tp = 0, tn = 0, fp = 0, fn = 0;
};

template <typename T>
Confusion confusion_counts(const Tensor<T>& pred_bin, const Tensor<T>& gt) {
    check_same_shape(pred_bin, gt, "confusion");
    Confusion c;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const bool p = pred_bin.v[i] != T(0);
        const bool y = gt.v[i] != T(0);
        if (p && y) ++c.tp;
        else if (!p && !y) ++c.tn;
        else if (p && !y) ++c.fp;
        else ++c.fn;
    }
    return c;
}

// F1 with the zero-denominator rule: 1 when there is nothing to find and
// nothing was predicted (TP+FP+FN == 0), 0 when TP == 0 otherwise.
inline double f1_from_counts(long tp, long fp, long fn) {
    if (tp + fp + fn == 0) return 1.0;
    if (tp == 0) return 0.0;
    return 2.0 * double(tp) / double(2 * tp + fp + fn);
}

template <typename T>
Tensor<T> binarize(const Tensor<T>& pred, double threshold) {
    Tensor<T> out = pred;
    for (T& v : out.v) v = double(v) > threshold ? T(1) : T(0);
    return out;
}

// Pixel-level localization score: the prediction is binarized at the fixed
// threshold, F1 is computed with manipulated as the positive class, the
// inverse F1 on the polarity-flipped prediction, and the maximum of the two is
// returned.
template <typename T>
double pixel_f1(const Tensor<T>& pred, const Tensor<T>& gt_mask, double threshold = 0.5) {
    for (const T& m : gt_mask.v)
        if (m != T(0) && m != T(1)) throw std::invalid_argument("pixel_f1: ground truth not binary");
    Tensor<T> bin = binarize(pred, threshold);
    Confusion c = confusion_counts(bin, gt_mask);
    const double plain = f1_from_counts(c.tp, c.fp, c.fn);
    // polarity-inverted prediction against the unchanged ground truth
    const double inverse = f1_from_counts(c.fn, c.tn, c.tp);
    return std::max(plain, inverse);
}

// Rank-based (Mann-Whitney) AUC with ties counted 1/2.
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("auc: scores/labels size mismatch");
    long n1 = 0, n0 = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) throw std::invalid_argument("auc: labels must be 0/1");
        y ? ++n1 : ++n0;
    }
    if (n1 == 0 || n0 == 0)
        throw std::invalid_argument("auc: both classes must be present (" + std::to_string(n0) +
                                    " negatives, " + std::to_string(n1) + " positives)");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // average ranks over tie groups
    std::vector<double> rank(scores.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = 0.5 * double(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    double rank_sum_pos = 0;
    for (std::size_t k = 0; k < scores.size(); ++k)
        if (labels[k] == 1) rank_sum_pos += rank[k];
    const double u = rank_sum_pos - double(n1) * (double(n1) + 1.0) / 2.0;
    return u / (double(n1) * double(n0));
}

// (TPR + TNR) / 2 at a fixed threshold; scores above the threshold predict
// the manipulated class.
inline double balanced_accuracy(const std::vector<double>& scores, const std::vector<int>& labels,
                                double threshold = 0.5) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("balanced_accuracy: scores/labels size mismatch");
    long tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool p = scores[i] > threshold;
        if (labels[i] == 1) p ? ++tp : ++fn;
        else p ? ++fp : ++tn;
    }
    if (tp + fn == 0 || tn + fp == 0)
        throw std::invalid_argument("balanced_accuracy: both classes must be present");
    const double tpr = double(tp) / double(tp + fn);
    const double tnr = double(tn) / double(tn + fp);
    return 0.5 * (tpr + tnr);
}

}  // namespace mmf
