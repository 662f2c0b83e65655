#pragma once

#include <iostream>

#include "mmf/core/resize.hpp"
#include "mmf/model/encoder.hpp"

namespace mmf {

// Feature re-weighting: per scale,
//   d1 = BN(Conv3x3(F));  d2 = BN(Conv3x3(d1));  D = sigmoid(Conv1x1(d2)) (.) F
// The 3x3 convolutions preserve C_i; the 1x1 produces C_i gate channels
// (per-channel gating), so |D| <= |F| elementwise.
template <typename T>
struct FeatureReweighting {
    struct Scale {
        Conv2d<T> conv1, conv2, gate;
        BatchNorm2d<T> bn1, bn2;
    };
    std::vector<Scale> scales;

    FeatureReweighting() = default;
    FeatureReweighting(ParamRegistry<T>& reg, const std::string& name,
                       const std::array<int, 4>& channels, NormTrainFlag flag) {
        for (int i = 0; i < 4; ++i) {
            const std::string sn = name + ".scale" + std::to_string(i + 1);
            Scale s;
            s.conv1 = Conv2d<T>(reg, sn + ".conv1", channels[i], channels[i], 3, 1, 1);
            s.bn1 = BatchNorm2d<T>(reg, sn + ".bn1", channels[i], flag);
            s.conv2 = Conv2d<T>(reg, sn + ".conv2", channels[i], channels[i], 3, 1, 1);
            s.bn2 = BatchNorm2d<T>(reg, sn + ".bn2", channels[i], flag);
            s.gate = Conv2d<T>(reg, sn + ".gate", channels[i], channels[i], 1, 1, 0);
            scales.push_back(std::move(s));
        }
    }

    FeatureMapSet forward(FwdCtx<T>& ctx, const FeatureMapSet& F) const {
        Tape<T>& t = ctx.tape;
        FeatureMapSet D{};
        for (int i = 0; i < 4; ++i) {
            const Scale& s = scales[i];
            int d1 = s.bn1.forward(ctx, s.conv1.forward(ctx, F[i]));
            int d2 = s.bn2.forward(ctx, s.conv2.forward(ctx, d1));
            int gate = sigmoid(t, s.gate.forward(ctx, d2));
            ctx.probe("frd_gate" + std::to_string(i + 1), gate);
            D[i] = mul(t, gate, F[i]);
        }
        return D;
    }
};

// MLP decoder: per-scale 1x1 projection to a common width, bilinear upsampling
// of scales 2-4 to the scale-1 dims, concatenation, a fused projection
// (BN + ReLU), a 1x1 head, and a final bilinear upsample to the input dims.
template <typename T>
struct MlpDecoder {
    std::vector<Conv2d<T>> proj;
    Conv2d<T> fuse, head;
    BatchNorm2d<T> fuse_bn;
    int out_channels = 1;

    MlpDecoder() = default;
    MlpDecoder(ParamRegistry<T>& reg, const std::string& name, const std::array<int, 4>& channels,
               int embed, int out_ch, NormTrainFlag flag)
        : out_channels(out_ch) {
        for (int i = 0; i < 4; ++i)
            proj.emplace_back(reg, name + ".proj" + std::to_string(i + 1), channels[i], embed, 1, 1, 0);
        fuse = Conv2d<T>(reg, name + ".fuse", 4 * embed, embed, 1, 1, 0);
        fuse_bn = BatchNorm2d<T>(reg, name + ".fuse_bn", embed, flag);
        head = Conv2d<T>(reg, name + ".head", embed, out_ch, 1, 1, 0);
    }

    // returns logits at (out_h, out_w)
    int forward(FwdCtx<T>& ctx, const FeatureMapSet& D, int out_h, int out_w) const {
        Tape<T>& t = ctx.tape;
        const Shape4 s1 = t.val(D[0]).shape;
        std::vector<int> up(4);
        for (int i = 0; i < 4; ++i) {
            int p = proj[i].forward(ctx, D[i]);
            up[i] = bilinear_resize(t, p, s1.h, s1.w);
        }
        int cat = concat_channels(t, {up[0], up[1], up[2], up[3]});
        int fused = relu(t, fuse_bn.forward(ctx, fuse.forward(ctx, cat)));
        int logits = head.forward(ctx, fused);
        return bilinear_resize(t, logits, out_h, out_w);
    }
};

// Anomaly decoder: FRD + MLP decoder + 2-class softmax, exporting the
// manipulated-class probability. Confidence decoder: same structure with an
// independent set of weights and a single sigmoid channel.
template <typename T>
struct MapDecoder {
    FeatureReweighting<T> frd;
    MlpDecoder<T> mlp;
    bool two_class = true;
    bool use_frd = true;

    MapDecoder() = default;
    MapDecoder(ParamRegistry<T>& reg, const std::string& name, const std::array<int, 4>& channels,
               int embed, bool two_class_, NormTrainFlag flag, bool use_frd_ = true)
        : two_class(two_class_), use_frd(use_frd_) {
        if (use_frd_) frd = FeatureReweighting<T>(reg, name + ".frd", channels, flag);
        mlp = MlpDecoder<T>(reg, name + ".mlp", channels, embed, two_class_ ? 2 : 1, flag);
    }

    // returns {map in [0,1], logits}
    std::pair<int, int> forward(FwdCtx<T>& ctx, const FeatureMapSet& F, int out_h, int out_w) const {
        Tape<T>& t = ctx.tape;
        FeatureMapSet D = use_frd ? frd.forward(ctx, F) : F;
        int logits = mlp.forward(ctx, D, out_h, out_w);
        int map;
        if (two_class) {
            // softmax over 2 channels == sigmoid of the logit difference
            int diff = sub(t, slice_channels(t, logits, 1, 1), slice_channels(t, logits, 0, 1));
            map = sigmoid(t, diff);
        } else {
            map = sigmoid(t, logits);
        }
        return {map, logits};
    }
};

// Pooling + forgery detector: six per-image statistics of the localization and
// confidence maps feed a 2-layer MLP ending in a sigmoid. When an image's
// confidence mass is exactly zero the weighted statistics fall back to the
// unweighted ones (logged).
template <typename T>
struct ForgeryDetector {
    Conv2d<T> fc1, fc2;
    mutable long zero_conf_events = 0;

    ForgeryDetector() = default;
    ForgeryDetector(ParamRegistry<T>& reg, const std::string& name, int hidden) {
        fc1 = Conv2d<T>(reg, name + ".fc1", 6, hidden, 1, 1, 0);
        fc2 = Conv2d<T>(reg, name + ".fc2", hidden, 1, 1, 1, 0);
    }

    // loc, conf: (B,1,H,W) -> score (B,1,1,1) in [0,1]
    int forward(FwdCtx<T>& ctx, int loc, int conf) const {
        Tape<T>& t = ctx.tape;
        check_same_shape(t.val(loc), t.val(conf), "pool_and_detect");
        const Shape4 s = t.val(loc).shape;

        int mean_loc = reduce_mean_hw(t, loc);
        int max_loc = reduce_max_hw(t, loc);
        int mean_conf = reduce_mean_hw(t, conf);
        int min_conf = reduce_min_hw(t, conf);

        int sum_conf = reduce_sum_hw(t, conf);
        std::vector<bool> has_mass(s.n);
        bool all = true, none = true;
        for (int n = 0; n < s.n; ++n) {
            has_mass[n] = t.val(sum_conf).at(n, 0, 0, 0) != T(0);
            all = all && has_mass[n];
            none = none && !has_mass[n];
        }
        int wmean, wmax;
        if (all) {
            wmean = div_bcast(t, reduce_sum_hw(t, mul(t, loc, conf)), sum_conf);
            wmax = reduce_max_hw(t, mul(t, loc, conf));
        } else {
            zero_conf_events += 1;
            std::cerr << "[detector] zero confidence mass; weighted statistics fall back to "
                         "unweighted\n";
            if (none) {
                wmean = mean_loc;
                wmax = max_loc;
            } else {
                int guarded = where_sample(t, has_mass, sum_conf,
                                           t.leaf(Tensor<T>::full(Shape4(s.n, 1, 1, 1), T(1))));
                int wm = div_bcast(t, reduce_sum_hw(t, mul(t, loc, conf)), guarded);
                wmean = where_sample(t, has_mass, wm, mean_loc);
                wmax = where_sample(t, has_mass, reduce_max_hw(t, mul(t, loc, conf)), max_loc);
            }
        }

        int feats = concat_channels(t, {mean_loc, max_loc, mean_conf, min_conf, wmean, wmax});
        ctx.probe("det_features", feats);
        int h = relu(t, fc1.forward(ctx, feats));
        return sigmoid(t, fc2.forward(ctx, h));
    }
};

}  // namespace mmf
