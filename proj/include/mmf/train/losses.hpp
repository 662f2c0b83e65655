#pragma once

#include "mmf/core/ops.hpp"

namespace mmf {

// Weighted 2-class cross entropy over pixels. Class weights are inverse to
// the pixel frequency within each sample (w_c = HW / (2 * count_c), absent
// classes clamped to count 1) and each sample's loss is normalized by its
// total weight, so a balanced mask with uniform logits scores ln 2. The batch
// loss is the mean over samples, which keeps gradient accumulation over
// micro-batches exactly equivalent to one large batch.
template <typename T>
int localization_loss(Tape<T>& t, int logits, const Tensor<T>& gt_mask) {
    const Shape4 s = t.val(logits).shape;
    if (s.c != 2) throw std::invalid_argument("localization_loss: logits must have 2 channels");
    if (gt_mask.shape.n != s.n || gt_mask.shape.c != 1 || gt_mask.shape.h != s.h ||
        gt_mask.shape.w != s.w)
        throw std::invalid_argument("localization_loss: mask " + gt_mask.shape.str() +
                                    " does not match logits " + s.str());
    for (const T& m : gt_mask.v)
        if (m != T(0) && m != T(1))
            throw std::invalid_argument("localization_loss: mask must be binary");

    const std::size_t hw = std::size_t(s.h) * s.w;
    const Tensor<T>& lg = t.val(logits);
    auto dlogits = std::make_shared<Tensor<T>>(s);
    double total = 0.0;
    for (int n = 0; n < s.n; ++n) {
        double cnt1 = 0;
        for (std::size_t i = 0; i < hw; ++i) cnt1 += double(gt_mask.v[std::size_t(n) * hw + i]);
        double cnt0 = double(hw) - cnt1;
        const double w0 = double(hw) / (2.0 * std::max(cnt0, 1.0));
        const double w1 = double(hw) / (2.0 * std::max(cnt1, 1.0));
        const double wsum = w0 * cnt0 + w1 * cnt1;

        const T* l0 = lg.data() + (std::size_t(n) * 2 + 0) * hw;
        const T* l1 = lg.data() + (std::size_t(n) * 2 + 1) * hw;
        T* d0 = dlogits->data() + (std::size_t(n) * 2 + 0) * hw;
        T* d1 = dlogits->data() + (std::size_t(n) * 2 + 1) * hw;
        double acc = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
            const int y = gt_mask.v[std::size_t(n) * hw + i] != T(0) ? 1 : 0;
            const double w = y ? w1 : w0;
            const double a = double(l0[i]), b = double(l1[i]);
            const double m = std::max(a, b);
            const double lse = m + std::log(std::exp(a - m) + std::exp(b - m));
            const double p0 = std::exp(a - lse), p1 = std::exp(b - lse);
            acc += w * (lse - (y ? b : a));
            const double k = w / (wsum * s.n);
            d0[i] = T((p0 - (y ? 0.0 : 1.0)) * k);
            d1[i] = T((p1 - (y ? 1.0 : 0.0)) * k);
        }
        total += acc / wsum;
    }
    Tensor<T> out = Tensor<T>::scalar(T(total / s.n));
    return t.push(std::move(out), {logits}, [logits, dlogits](Tape<T>& tp, int y) {
        const T gy = tp.grad(y)[0];
        Tensor<T>& gl = tp.grad(logits);
        for (std::size_t i = 0; i < gl.size(); ++i) gl[i] += gy * (*dlogits)[i];
    });
}

// Target for the confidence decoder: the frozen anomaly branch's probability
// of the true class per pixel (loc where manipulated, 1 - loc elsewhere).
template <typename T>
Tensor<T> confidence_target(const Tensor<T>& loc_values, const Tensor<T>& gt_mask) {
    check_same_shape(loc_values, gt_mask, "confidence_target");
    Tensor<T> target = loc_values;
    for (std::size_t i = 0; i < target.size(); ++i)
        if (gt_mask.v[i] == T(0)) target[i] = T(1) - target[i];
    return target;
}

// mean squared error between the confidence map and its target
template <typename T>
int confidence_loss(Tape<T>& t, int conf, const Tensor<T>& target) {
    check_same_shape(t.val(conf), target, "confidence_loss");
    int diff = sub(t, conf, t.leaf(target));
    return reduce_mean_all(t, mul(t, diff, diff));
}

// Binary cross entropy on detection probabilities, mean over the batch.
// Probabilities are clamped to [eps, 1-eps] for finiteness; the gradient is
// zero in the clamped region.
template <typename T>
int detection_loss(Tape<T>& t, int score, const std::vector<int>& labels, double eps = 1e-7) {
    const Shape4 s = t.val(score).shape;
    if (int(labels.size()) != s.n || s.c != 1 || s.h != 1 || s.w != 1)
        throw std::invalid_argument("detection_loss: score must be (B,1,1,1) with B labels");
    for (int y : labels)
        if (y != 0 && y != 1) throw std::invalid_argument("detection_loss: labels must be 0/1");
    const Tensor<T>& sv = t.val(score);
    auto grad = std::make_shared<std::vector<T>>(std::size_t(s.n));
    double total = 0.0;
    for (int n = 0; n < s.n; ++n) {
        const double raw = double(sv[n]);
        const double p = std::clamp(raw, eps, 1.0 - eps);
        const int y = labels[n];
        total += -(y ? std::log(p) : std::log(1.0 - p));
        (*grad)[n] = (raw > eps && raw < 1.0 - eps)
                         ? T((p - double(y)) / (p * (1.0 - p) * s.n))
                         : T(0);
    }
    Tensor<T> out = Tensor<T>::scalar(T(total / s.n));
    return t.push(std::move(out), {score}, [score, grad](Tape<T>& tp, int y) {
        const T gy = tp.grad(y)[0];
        Tensor<T>& gs = tp.grad(score);
        for (std::size_t i = 0; i < gs.size(); ++i) gs[i] += gy * (*grad)[i];
    });
}

}  // namespace mmf
