#pragma once

#include <iostream>

#include "mmf/core/conv.hpp"
#include "mmf/nn/param.hpp"

namespace mmf {

// Constrained convolution noise extractor. One k x k filter per channel
// (depthwise, 3 in -> 3 out) so its residual matches the other modalities'
// shapes. After every projection the center tap is exactly -1 and the
// remaining taps of each filter sum to 1, which forces a zero response on
// constant inputs. The projection runs after every optimizer update.
template <typename T>
struct BayarLayer {
    ParamPtr<T> weight;  // (3, 1, k, k), groups = 3
    int kernel = 5;
    double reinit_eps = 1e-8;
    int reinit_events = 0;
    bool validate_on_forward = true;  // gradient probes relax this

    BayarLayer() = default;
    BayarLayer(ParamRegistry<T>& reg, const std::string& name, int k) : kernel(k) {
        if (k < 3 || k % 2 == 0) throw std::invalid_argument("bayar: kernel must be odd >= 3");
        weight = reg.create(name + ".weight", Shape4(3, 1, k, k));
        weight->weight_decay_exempt = true;  // decay would fight the constraint
        init_taps(reg.init_rng());
        project();
    }

    void init_taps(Rng& rng) {
        const double stddev = 1.0 / double(kernel * kernel - 1);
        for (T& v : weight->value.v) v = T(rng.normal(0.0, stddev));
    }

    bool satisfies_constraints(double tol = 1e-6) const {
        const int c = kernel / 2;
        for (int o = 0; o < 3; ++o) {
            if (weight->value.at(o, 0, c, c) != T(-1)) return false;
            double s = 0;
            for (int i = 0; i < kernel; ++i)
                for (int j = 0; j < kernel; ++j)
                    if (i != c || j != c) s += double(weight->value.at(o, 0, i, j));
            if (std::abs(s - 1.0) > tol) return false;
        }
        return true;
    }

    // Rescale non-center taps to sum to 1 and pin the center to -1. Channels
    // whose non-center sum is within reinit_eps of zero (or whose rescale
    // cannot be represented within the 1e-6 invariant in this precision) are
    // re-drawn from the init distribution; the event is counted and logged.
    void project() {
        const int c = kernel / 2;
        for (int o = 0; o < 3; ++o) {
            for (int attempt = 0; attempt < 4; ++attempt) {
                double s = noncenter_sum(o);
                if (std::abs(s) <= reinit_eps) {
                    reinit_channel(o, "degenerate non-center sum");
                    continue;
                }
                for (int i = 0; i < kernel; ++i)
                    for (int j = 0; j < kernel; ++j)
                        if (i != c || j != c)
                            weight->value.at(o, 0, i, j) =
                                T(double(weight->value.at(o, 0, i, j)) / s);
                // absorb the float rounding residual into the largest tap
                for (int pass = 0; pass < 3; ++pass) {
                    const double err = noncenter_sum(o) - 1.0;
                    if (std::abs(err) <= 1e-9) break;
                    int bi = 0, bj = c == 0 ? 1 : 0;
                    double best = -1;
                    for (int i = 0; i < kernel; ++i)
                        for (int j = 0; j < kernel; ++j)
                            if ((i != c || j != c) &&
                                std::abs(double(weight->value.at(o, 0, i, j))) > best) {
                                best = std::abs(double(weight->value.at(o, 0, i, j)));
                                bi = i;
                                bj = j;
                            }
                    weight->value.at(o, 0, bi, bj) =
                        T(double(weight->value.at(o, 0, bi, bj)) - err);
                }
                if (std::abs(noncenter_sum(o) - 1.0) <= 1e-6) break;
                reinit_channel(o, "rescaled taps too large for the working precision");
            }
            weight->value.at(o, 0, c, c) = T(-1);
        }
    }

    double noncenter_sum(int o) const {
        const int c = kernel / 2;
        double s = 0;
        for (int i = 0; i < kernel; ++i)
            for (int j = 0; j < kernel; ++j)
                if (i != c || j != c) s += double(weight->value.at(o, 0, i, j));
        return s;
    }

    void reinit_channel(int o, const char* why) {
        ++reinit_events;
        std::cerr << "[bayar] channel " << o << ": " << why << "; re-initializing taps\n";
        Rng fallback(0x9E3779B97F4A7C15ull ^ std::uint64_t(reinit_events));
        const double stddev = 1.0 / double(kernel * kernel - 1);
        for (int i = 0; i < kernel; ++i)
            for (int j = 0; j < kernel; ++j) weight->value.at(o, 0, i, j) = T(fallback.normal(0.0, stddev));
        if (std::abs(noncenter_sum(o)) <= reinit_eps) weight->value.at(o, 0, 0, 0) += T(1);
    }

    // stride-1 convolution with replicate padding; dims preserved, 3 channels
    int forward(FwdCtx<T>& ctx, int image) const {
        if (validate_on_forward && !satisfies_constraints())
            throw std::runtime_error(
                "bayar_forward: weights violate the constraint (center != -1 or non-center sum != "
                "1); run bayar_project first");
        const Shape4 s = ctx.tape.val(image).shape;
        if (s.c != 3)
            throw std::invalid_argument("bayar_forward: expected 3-channel image, got " + s.str());
        int padded = pad_edge(ctx.tape, image, kernel / 2);
        return conv2d(ctx.tape, padded, ctx.use(weight), -1, 1, 0, 3);
    }

    // plain forward for data-side use (e.g. masking with a pristine image)
    Tensor<T> forward_plain(const Tensor<T>& image) const {
        Tape<T> t;
        FwdCtx<T> ctx(t);
        int out = forward(ctx, t.leaf(image));
        return t.val(out);
    }
};

}  // namespace mmf
