#pragma once

#include "mmf/nn/layers.hpp"

namespace mmf {

// Cross-modal feature rectification: each branch is residually corrected with
// channel-gated and spatially-gated information from the other branch,
//
//   out1 = x1 + lambda * P1(gc2 (.) x2 + gs2 (.) x2)
//   out2 = x2 + lambda * P2(gc1 (.) x1 + gs1 (.) x1)
//
// where channel gates come from a shared MLP over global avg+max pooled
// descriptors of both branches and spatial gates from a 1x1 conv over the
// concatenated maps. The output projections P1/P2 are bias-free and start at
// zero, so a freshly built module is the identity on both branches.
template <typename T>
struct FeatureRectification {
    int channels = 0;
    double lambda = 0.5;
    Conv2d<T> pool_fc1, pool_fc2;  // 1x1 convs acting on (N,4C,1,1) descriptors
    Conv2d<T> spatial_gate;        // 2C -> 2 gate maps
    Conv2d<T> proj1, proj2;        // zero-initialized, bias-free

    FeatureRectification() = default;
    FeatureRectification(ParamRegistry<T>& reg, const std::string& name, int c, double lambda_,
                         int reduction = 4)
        : channels(c), lambda(lambda_) {
        const int hidden = std::max(c / std::max(reduction, 1), 4);
        pool_fc1 = Conv2d<T>(reg, name + ".pool_fc1", 4 * c, hidden, 1, 1, 0);
        pool_fc2 = Conv2d<T>(reg, name + ".pool_fc2", hidden, 2 * c, 1, 1, 0);
        spatial_gate = Conv2d<T>(reg, name + ".spatial_gate", 2 * c, 2, 1, 1, 0);
        proj1 = Conv2d<T>(reg, name + ".proj1", c, c, 1, 1, 0, false);
        proj2 = Conv2d<T>(reg, name + ".proj2", c, c, 1, 1, 0, false);
        init_const(*proj1.weight, T(0));
        init_const(*proj2.weight, T(0));
    }

    std::pair<int, int> forward(FwdCtx<T>& ctx, int x1, int x2) const {
        Tape<T>& t = ctx.tape;
        check_same_shape(t.val(x1), t.val(x2), "frm_rectify");
        const Shape4 s = t.val(x1).shape;
        if (s.c != channels)
            throw std::invalid_argument("frm_rectify: expected " + std::to_string(channels) +
                                        " channels, got " + s.str());

        // channel gates
        int desc = concat_channels(
            t, {reduce_mean_hw(t, x1), reduce_max_hw(t, x1), reduce_mean_hw(t, x2),
                reduce_max_hw(t, x2)});
        int gates = sigmoid(t, pool_fc2.forward(ctx, relu(t, pool_fc1.forward(ctx, desc))));

        // spatial gates
        int sg = sigmoid(t, spatial_gate.forward(ctx, concat_channels(t, {x1, x2})));

        int g_first = slice_channels(t, gates, 0, channels);
        int g_second = slice_channels(t, gates, channels, channels);
        int s_first = slice_channels(t, sg, 0, 1);
        int s_second = slice_channels(t, sg, 1, 1);

        // corrections built from the opposite branch
        int corr1 = add(t, mul_bcast(t, x2, g_second), mul_bcast(t, x2, s_second));
        int corr2 = add(t, mul_bcast(t, x1, g_first), mul_bcast(t, x1, s_first));
        int out1 = add(t, x1, scale(t, proj1.forward(ctx, corr1), T(lambda)));
        int out2 = add(t, x2, scale(t, proj2.forward(ctx, corr2), T(lambda)));
        return {out1, out2};
    }
};

}  // namespace mmf
