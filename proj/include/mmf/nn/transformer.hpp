#pragma once

#include "mmf/core/resize.hpp"
#include "mmf/nn/layers.hpp"

namespace mmf {

// Multi-head self attention with optional spatial reduction of keys/values
// (strided conv + layer norm), operating on token tensors. The attention
// sub-step keeps the token count, so a block never changes spatial dims;
// downsampling happens only in the patch embedding of each stage.
template <typename T>
struct EfficientSelfAttention {
    int dim = 0, heads = 1, sr_ratio = 1;
    Linear<T> q, k, v, proj;
    Conv2d<T> sr;
    LayerNorm<T> sr_norm;

    EfficientSelfAttention() = default;
    EfficientSelfAttention(ParamRegistry<T>& reg, const std::string& name, int dim_, int heads_,
                           int sr_ratio_)
        : dim(dim_), heads(heads_), sr_ratio(sr_ratio_) {
        if (heads_ < 1 || dim_ % heads_ != 0)
            throw std::invalid_argument("attention " + name + ": head count " +
                                        std::to_string(heads_) + " does not divide dim " +
                                        std::to_string(dim_));
        q = Linear<T>(reg, name + ".q", dim_, dim_);
        k = Linear<T>(reg, name + ".k", dim_, dim_);
        v = Linear<T>(reg, name + ".v", dim_, dim_);
        proj = Linear<T>(reg, name + ".proj", dim_, dim_);
        if (sr_ratio_ > 1) {
            sr = Conv2d<T>(reg, name + ".sr", dim_, dim_, sr_ratio_, sr_ratio_, 0);
            sr_norm = LayerNorm<T>(reg, name + ".sr_norm", dim_);
        }
    }

    // x: tokens (B,1,N,C); h*w == N
    int forward(FwdCtx<T>& ctx, int x, int h, int w) const {
        Tape<T>& t = ctx.tape;
        const Shape4 s = t.val(x).shape;
        const int B = s.n, N = s.h, dh = dim / heads;

        int qx = q.forward(ctx, x);  // (B,1,N,C)
        int qh = permute(t, reshape(t, qx, Shape4(B, N, heads, dh)), {0, 2, 1, 3});  // (B,H,N,dh)

        int kv_src = x;
        if (sr_ratio > 1) {
            int sp = nchw_from_tokens(t, x, h, w);
            int red = sr.forward(ctx, sp);
            kv_src = sr_norm.forward(ctx, tokens_from_nchw(t, red));
        }
        const int M = t.val(kv_src).shape.h;
        int kx = k.forward(ctx, kv_src);
        int vx = v.forward(ctx, kv_src);
        int khm = permute(t, reshape(t, kx, Shape4(B, M, heads, dh)), {0, 2, 3, 1});  // (B,H,dh,M)
        int vh = permute(t, reshape(t, vx, Shape4(B, M, heads, dh)), {0, 2, 1, 3});   // (B,H,M,dh)

        int logits = scale(t, bmm(t, qh, khm), T(1.0 / std::sqrt(double(dh))));
        int attn = softmax_lastdim(t, logits);  // rows sum to 1
        ctx.probe("attn", attn);
        int mixed = bmm(t, attn, vh);  // (B,H,N,dh)
        int merged = reshape(t, permute(t, mixed, {0, 2, 1, 3}), Shape4(B, 1, N, dim));
        return proj.forward(ctx, merged);
    }
};

// feed-forward with a depthwise 3x3 between the two projections
template <typename T>
struct MixFFN {
    Linear<T> fc1, fc2;
    Conv2d<T> dwconv;

    MixFFN() = default;
    MixFFN(ParamRegistry<T>& reg, const std::string& name, int dim, int hidden) {
        fc1 = Linear<T>(reg, name + ".fc1", dim, hidden);
        dwconv = Conv2d<T>(reg, name + ".dwconv", hidden, hidden, 3, 1, 1, true, hidden);
        fc2 = Linear<T>(reg, name + ".fc2", hidden, dim);
    }

    int forward(FwdCtx<T>& ctx, int x, int h, int w) const {
        Tape<T>& t = ctx.tape;
        int y = fc1.forward(ctx, x);
        int sp = nchw_from_tokens(t, y, h, w);
        y = tokens_from_nchw(t, dwconv.forward(ctx, sp));
        y = gelu(t, y);
        return fc2.forward(ctx, y);
    }
};

// pre-norm transformer block: x + MHSA(LN(x)); x + MixFFN(LN(x))
template <typename T>
struct TransformerBlock {
    LayerNorm<T> norm1, norm2;
    EfficientSelfAttention<T> attn;
    MixFFN<T> ffn;

    TransformerBlock() = default;
    TransformerBlock(ParamRegistry<T>& reg, const std::string& name, int dim, int heads,
                     int sr_ratio, int mlp_ratio) {
        norm1 = LayerNorm<T>(reg, name + ".norm1", dim);
        attn = EfficientSelfAttention<T>(reg, name + ".attn", dim, heads, sr_ratio);
        norm2 = LayerNorm<T>(reg, name + ".norm2", dim);
        ffn = MixFFN<T>(reg, name + ".ffn", dim, dim * mlp_ratio);
    }

    int forward(FwdCtx<T>& ctx, int x, int h, int w) const {
        Tape<T>& t = ctx.tape;
        x = add(t, x, attn.forward(ctx, norm1.forward(ctx, x), h, w));
        x = add(t, x, ffn.forward(ctx, norm2.forward(ctx, x), h, w));
        return x;
    }
};

// overlapping patch embedding: stage 1 downsamples by 4, later stages by 2
template <typename T>
struct PatchEmbed {
    Conv2d<T> conv;
    LayerNorm<T> norm;
    int stride = 1;

    PatchEmbed() = default;
    PatchEmbed(ParamRegistry<T>& reg, const std::string& name, int cin, int cout, int k, int stride_)
        : stride(stride_) {
        conv = Conv2d<T>(reg, name + ".conv", cin, cout, k, stride_, k / 2);
        norm = LayerNorm<T>(reg, name + ".norm", cout);
    }

    // returns tokens plus the embedded spatial dims
    int forward(FwdCtx<T>& ctx, int x, int& h, int& w) const {
        const Shape4 s = ctx.tape.val(x).shape;
        if (s.h % stride != 0 || s.w % stride != 0)
            throw std::invalid_argument(
                "patch embed: spatial dims " + s.str() + " not divisible by stride " +
                std::to_string(stride) + "; pad input to a multiple of 32 first");
        int y = conv.forward(ctx, x);
        h = ctx.tape.val(y).shape.h;
        w = ctx.tape.val(y).shape.w;
        return norm.forward(ctx, tokens_from_nchw(ctx.tape, y));
    }
};

template <typename T>
struct MiTStage {
    PatchEmbed<T> embed;
    std::vector<TransformerBlock<T>> blocks;
    LayerNorm<T> norm;

    MiTStage() = default;
    MiTStage(ParamRegistry<T>& reg, const std::string& name, int cin, int cout, int depth, int heads,
             int sr_ratio, int mlp_ratio, int patch_k, int patch_stride) {
        embed = PatchEmbed<T>(reg, name + ".embed", cin, cout, patch_k, patch_stride);
        for (int b = 0; b < depth; ++b)
            blocks.emplace_back(reg, name + ".block" + std::to_string(b), cout, heads, sr_ratio,
                                mlp_ratio);
        norm = LayerNorm<T>(reg, name + ".norm", cout);
    }

    // (B,Cin,H,W) -> (B,Cout,H/stride,W/stride)
    int forward(FwdCtx<T>& ctx, int x) const {
        int h = 0, w = 0;
        int tok = embed.forward(ctx, x, h, w);
        for (const auto& b : blocks) tok = b.forward(ctx, tok, h, w);
        tok = norm.forward(ctx, tok);
        return nchw_from_tokens(ctx.tape, tok, h, w);
    }
};

// one branch of the dual-branch encoder: 4 stages, /4 then /2 each
template <typename T>
struct MiTTower {
    std::vector<MiTStage<T>> stages;

    MiTTower() = default;
    MiTTower(ParamRegistry<T>& reg, const std::string& name, int in_channels,
             const std::array<int, 4>& channels, const std::array<int, 4>& depths,
             const std::array<int, 4>& heads, const std::array<int, 4>& sr_ratios, int mlp_ratio) {
        int cin = in_channels;
        for (int i = 0; i < 4; ++i) {
            stages.emplace_back(reg, name + ".stage" + std::to_string(i + 1), cin, channels[i],
                                depths[i], heads[i], sr_ratios[i], mlp_ratio, i == 0 ? 7 : 3,
                                i == 0 ? 4 : 2);
            cin = channels[i];
        }
    }
};

}  // namespace mmf
