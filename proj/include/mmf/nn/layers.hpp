#pragma once

#include "mmf/core/conv.hpp"
#include "mmf/core/norm.hpp"
#include "mmf/nn/param.hpp"

namespace mmf {

template <typename T>
struct Conv2d {
    ParamPtr<T> weight;
    ParamPtr<T> bias;  // null when bias-free
    int stride = 1, pad = 0, groups = 1;

    Conv2d() = default;
    Conv2d(ParamRegistry<T>& reg, const std::string& name, int cin, int cout, int k, int stride_,
           int pad_, bool with_bias = true, int groups_ = 1)
        : stride(stride_), pad(pad_), groups(groups_) {
        weight = reg.create(name + ".weight", Shape4(cout, cin / groups_, k, k));
        init_kaiming_conv(*weight, reg.init_rng());
        if (with_bias) bias = reg.create(name + ".bias", Shape4(1, cout, 1, 1));
    }

    int forward(FwdCtx<T>& ctx, int x) const {
        return conv2d(ctx.tape, x, ctx.use(weight), bias ? ctx.use(bias) : -1, stride, pad, groups);
    }
};

// fully connected layer over token tensors (B,1,N,C)
template <typename T>
struct Linear {
    ParamPtr<T> weight;  // (1,1,Co,C)
    ParamPtr<T> bias;

    Linear() = default;
    Linear(ParamRegistry<T>& reg, const std::string& name, int cin, int cout, bool with_bias = true) {
        weight = reg.create(name + ".weight", Shape4(1, 1, cout, cin));
        init_trunc_normal(*weight, reg.init_rng());
        if (with_bias) bias = reg.create(name + ".bias", Shape4(1, 1, 1, cout));
    }

    int forward(FwdCtx<T>& ctx, int x) const {
        return linear_tokens(ctx.tape, x, ctx.use(weight), bias ? ctx.use(bias) : -1);
    }
};

template <typename T>
struct LayerNorm {
    ParamPtr<T> gamma;
    ParamPtr<T> beta;  // null when bias-free
    double eps = 1e-6;

    LayerNorm() = default;
    LayerNorm(ParamRegistry<T>& reg, const std::string& name, int c, bool with_bias = true) {
        gamma = reg.create(name + ".gamma", Shape4(1, 1, 1, c));
        init_const(*gamma, T(1));
        if (with_bias) beta = reg.create(name + ".beta", Shape4(1, 1, 1, c));
    }

    int forward(FwdCtx<T>& ctx, int x) const {
        return layernorm_lastdim(ctx.tape, x, ctx.use(gamma), beta ? ctx.use(beta) : -1, eps);
    }
};

// `train_flag` selects which phase switch controls batch-vs-running statistics,
// so decoder-head BN layers stay in eval mode while the frozen trunk is reused.
enum class NormTrainFlag { Encoder, Head };

template <typename T>
struct BatchNorm2d {
    ParamPtr<T> gamma, beta, running_mean, running_var;
    double momentum = 0.1, eps = 1e-5;
    NormTrainFlag train_flag = NormTrainFlag::Encoder;

    BatchNorm2d() = default;
    BatchNorm2d(ParamRegistry<T>& reg, const std::string& name, int c,
                NormTrainFlag flag = NormTrainFlag::Encoder)
        : train_flag(flag) {
        gamma = reg.create(name + ".gamma", Shape4(1, c, 1, 1));
        init_const(*gamma, T(1));
        beta = reg.create(name + ".beta", Shape4(1, c, 1, 1));
        running_mean = reg.buffer(name + ".running_mean", Shape4(1, c, 1, 1), T(0));
        running_var = reg.buffer(name + ".running_var", Shape4(1, c, 1, 1), T(1));
    }

    int forward(FwdCtx<T>& ctx, int x) const {
        bool training = train_flag == NormTrainFlag::Encoder ? ctx.train_encoder : ctx.train_head;
        // a frozen affine pair means the hosting module is frozen: use running stats
        if (gamma->frozen) training = false;
        return batchnorm2d(ctx.tape, x, ctx.use(gamma), ctx.use(beta), &running_mean->value,
                           &running_var->value, training, training && ctx.update_bn_stats, momentum,
                           eps, ctx.bn_group);
    }
};

template <typename T>
struct DropoutLayer {
    double rate = 0.0;
    std::uint64_t layer_id = 0;
    NormTrainFlag train_flag = NormTrainFlag::Encoder;

    int forward(FwdCtx<T>& ctx, int x) const {
        bool training = train_flag == NormTrainFlag::Encoder ? ctx.train_encoder : ctx.train_head;
        return dropout(ctx.tape, x, rate, ctx.sample_seeds, layer_id, training);
    }
};

// ---------------------------------------------------------------------------
// token <-> image reshaping helpers
// ---------------------------------------------------------------------------

// (B,C,H,W) -> (B,1,H*W,C)
template <typename T>
int tokens_from_nchw(Tape<T>& t, int x) {
    const Shape4 s = t.val(x).shape;
    int p = permute(t, x, {0, 2, 3, 1});  // B,H,W,C
    return reshape(t, p, Shape4(s.n, 1, s.h * s.w, s.c));
}

// (B,1,H*W,C) -> (B,C,H,W)
template <typename T>
int nchw_from_tokens(Tape<T>& t, int x, int h, int w) {
    const Shape4 s = t.val(x).shape;
    int r = reshape(t, x, Shape4(s.n, h, w, s.w));
    return permute(t, r, {0, 3, 1, 2});
}

}  // namespace mmf
