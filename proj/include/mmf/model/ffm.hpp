#pragma once

#include "mmf/core/resize.hpp"
#include "mmf/nn/layers.hpp"

namespace mmf {

// Feature fusion: an information-exchange stage where each branch
// cross-attends to the other (keys/values taken from an average-pool-reduced
// token set to keep the attention tractable), followed by a merge stage that
// concatenates the two mixed maps and applies a residual MLP of 1x1
// convolutions. Output has the same dims as each input.
template <typename T>
struct FeatureFusion {
    int channels = 0, inner = 0, heads = 1, sr_ratio = 1;
    LayerNorm<T> norm1, norm2;
    Linear<T> q1, q2, kv_k1, kv_v1, kv_k2, kv_v2, out1, out2;
    Conv2d<T> merge, mlp_a, mlp_b;

    FeatureFusion() = default;
    FeatureFusion(ParamRegistry<T>& reg, const std::string& name, int c, int heads_, int sr,
                  bool bias = true)
        : channels(c), inner(std::max(c / 2, heads_)), heads(heads_), sr_ratio(sr) {
        if (inner % heads_ != 0)
            throw std::invalid_argument("ffm " + name + ": heads must divide the attention width");
        norm1 = LayerNorm<T>(reg, name + ".norm1", c, bias);
        norm2 = LayerNorm<T>(reg, name + ".norm2", c, bias);
        q1 = Linear<T>(reg, name + ".q1", c, inner, bias);
        q2 = Linear<T>(reg, name + ".q2", c, inner, bias);
        kv_k1 = Linear<T>(reg, name + ".k1", c, inner, bias);
        kv_v1 = Linear<T>(reg, name + ".v1", c, inner, bias);
        kv_k2 = Linear<T>(reg, name + ".k2", c, inner, bias);
        kv_v2 = Linear<T>(reg, name + ".v2", c, inner, bias);
        out1 = Linear<T>(reg, name + ".out1", inner, c, bias);
        out2 = Linear<T>(reg, name + ".out2", inner, c, bias);
        merge = Conv2d<T>(reg, name + ".merge", 2 * c, c, 1, 1, 0, bias);
        mlp_a = Conv2d<T>(reg, name + ".mlp_a", c, c, 1, 1, 0, bias);
        mlp_b = Conv2d<T>(reg, name + ".mlp_b", c, c, 1, 1, 0, bias);
    }

    int cross_attend(FwdCtx<T>& ctx, int q_tok, int kv_tok, const Linear<T>& lq,
                     const Linear<T>& lk, const Linear<T>& lv, const Linear<T>& lo) const {
        Tape<T>& t = ctx.tape;
        const Shape4 sq = t.val(q_tok).shape;
        const int B = sq.n, N = sq.h, dh = inner / heads;
        const int M = t.val(kv_tok).shape.h;
        int qh = permute(t, reshape(t, lq.forward(ctx, q_tok), Shape4(B, N, heads, dh)), {0, 2, 1, 3});
        int kh = permute(t, reshape(t, lk.forward(ctx, kv_tok), Shape4(B, M, heads, dh)), {0, 2, 3, 1});
        int vh = permute(t, reshape(t, lv.forward(ctx, kv_tok), Shape4(B, M, heads, dh)), {0, 2, 1, 3});
        int attn = softmax_lastdim(t, scale(t, bmm(t, qh, kh), T(1.0 / std::sqrt(double(dh)))));
        int mixed = reshape(t, permute(t, bmm(t, attn, vh), {0, 2, 1, 3}), Shape4(B, 1, N, inner));
        return lo.forward(ctx, mixed);
    }

    int forward(FwdCtx<T>& ctx, int x1, int x2) const {
        Tape<T>& t = ctx.tape;
        check_same_shape(t.val(x1), t.val(x2), "ffm_fuse");
        const Shape4 s = t.val(x1).shape;
        const int h = s.h, w = s.w;

        int t1 = norm1.forward(ctx, tokens_from_nchw(t, x1));
        int t2 = norm2.forward(ctx, tokens_from_nchw(t, x2));
        int t1r = t1, t2r = t2;
        if (sr_ratio > 1) {
            t1r = tokens_from_nchw(t, avgpool(t, nchw_from_tokens(t, t1, h, w), sr_ratio));
            t2r = tokens_from_nchw(t, avgpool(t, nchw_from_tokens(t, t2, h, w), sr_ratio));
        }

        // exchange: each branch queries the other's reduced tokens
        int m1 = add(t, t1, cross_attend(ctx, t1, t2r, q1, kv_k2, kv_v2, out1));
        int m2 = add(t, t2, cross_attend(ctx, t2, t1r, q2, kv_k1, kv_v1, out2));

        int sp1 = nchw_from_tokens(t, m1, h, w);
        int sp2 = nchw_from_tokens(t, m2, h, w);
        int fused = merge.forward(ctx, concat_channels(t, {sp1, sp2}));
        int mlp = mlp_b.forward(ctx, relu(t, mlp_a.forward(ctx, fused)));
        return add(t, fused, mlp);
    }
};

}  // namespace mmf
