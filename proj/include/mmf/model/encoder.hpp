#pragma once

#include "mmf/model/config.hpp"
#include "mmf/model/efm.hpp"
#include "mmf/model/ffm.hpp"
#include "mmf/model/frm.hpp"
#include "mmf/nn/transformer.hpp"

namespace mmf {

// the per-scale outputs F = {F^i, i=1..4}
using FeatureMapSet = std::array<int, 4>;

template <typename T>
void check_encoder_input(Tape<T>& t, int rgb, int aux) {
    const Shape4 sr = t.val(rgb).shape;
    const Shape4 sa = t.val(aux).shape;
    if (sr.c != 3 || sa.c != 3)
        throw std::invalid_argument("encoder: inputs must be 3-channel, got " + sr.str() + " / " +
                                    sa.str());
    if (sr.h != sa.h || sr.w != sa.w || sr.n != sa.n)
        throw std::invalid_argument("encoder: rgb/aux dims differ: " + sr.str() + " vs " + sa.str());
    if (sr.h % 32 != 0 || sr.w % 32 != 0)
        throw std::invalid_argument("encoder: spatial dims " + sr.str() +
                                    " must be multiples of 32; pad inputs first");
}

// Dual-branch encoder: two towers whose per-stage outputs are rectified
// against each other (FRM) and fused into one map per scale (FFM). The
// rectified maps feed the next stage of each branch; the fused maps form the
// encoder output. F^i has dims (H/2^(i+1), W/2^(i+1), C_i).
template <typename T>
struct DualBranchEncoder {
    std::shared_ptr<MiTTower<T>> rgb_tower;  // shareable across encoders
    std::shared_ptr<MiTTower<T>> aux_tower;
    std::vector<FeatureRectification<T>> frms;
    std::vector<FeatureFusion<T>> ffms;

    DualBranchEncoder() = default;
    DualBranchEncoder(ParamRegistry<T>& reg, const std::string& name, const ModelConfig& cfg,
                      std::shared_ptr<MiTTower<T>> shared_rgb = nullptr) {
        rgb_tower = shared_rgb ? shared_rgb
                               : std::make_shared<MiTTower<T>>(reg, name + ".rgb", 3, cfg.channels,
                                                               cfg.depths, cfg.heads, cfg.sr_ratios,
                                                               cfg.mlp_ratio);
        aux_tower = std::make_shared<MiTTower<T>>(reg, name + ".aux", 3, cfg.channels, cfg.depths,
                                                  cfg.heads, cfg.sr_ratios, cfg.mlp_ratio);
        for (int i = 0; i < 4; ++i) {
            frms.emplace_back(reg, name + ".frm" + std::to_string(i + 1), cfg.channels[i],
                              cfg.frm_lambda, cfg.frm_reduction);
            ffms.emplace_back(reg, name + ".ffm" + std::to_string(i + 1), cfg.channels[i],
                              cfg.heads[i], cfg.sr_ratios[i], cfg.ffm_bias);
        }
    }

    FeatureMapSet forward(FwdCtx<T>& ctx, int rgb, int aux) const {
        check_encoder_input(ctx.tape, rgb, aux);
        FeatureMapSet out{};
        int x_img = rgb, x_aux = aux;
        for (int i = 0; i < 4; ++i) {
            int f_img = rgb_tower->stages[i].forward(ctx, x_img);
            int f_aux = aux_tower->stages[i].forward(ctx, x_aux);
            auto [r_img, r_aux] = frms[i].forward(ctx, f_img, f_aux);
            out[i] = ffms[i].forward(ctx, r_img, r_aux);
            x_img = r_img;
            x_aux = r_aux;
        }
        return out;
    }
};

// Late fusion: one dual-branch encoder per auxiliary modality; per-scale
// outputs are concatenated channel-wise (3*C_i channels). With weight sharing
// enabled the RGB towers of the three encoders are the same parameter objects.
// Dropout is applied to the concatenated features on the way to the anomaly
// decoder (active in phase 1 only).
template <typename T>
struct LateFusionEncoder {
    DualBranchEncoder<T> enc_noiseprint, enc_srm, enc_bayar;
    DropoutLayer<T> drop;

    LateFusionEncoder() = default;
    LateFusionEncoder(ParamRegistry<T>& reg, const std::string& name, const ModelConfig& cfg) {
        std::shared_ptr<MiTTower<T>> shared;
        if (cfg.share_rgb_branch)
            shared = std::make_shared<MiTTower<T>>(reg, name + ".rgb_shared", 3, cfg.channels,
                                                   cfg.depths, cfg.heads, cfg.sr_ratios,
                                                   cfg.mlp_ratio);
        enc_noiseprint = DualBranchEncoder<T>(reg, name + ".noiseprint", cfg, shared);
        enc_srm = DualBranchEncoder<T>(reg, name + ".srm", cfg, shared);
        enc_bayar = DualBranchEncoder<T>(reg, name + ".bayar", cfg, shared);
        drop.rate = cfg.dropout_rate;
        drop.layer_id = 0xD80F;
        drop.train_flag = NormTrainFlag::Encoder;
    }

    FeatureMapSet forward(FwdCtx<T>& ctx, int rgb, int r_noiseprint, int r_srm, int r_bayar) const {
        FeatureMapSet f_np = enc_noiseprint.forward(ctx, rgb, r_noiseprint);
        FeatureMapSet f_srm = enc_srm.forward(ctx, rgb, r_srm);
        FeatureMapSet f_bayar = enc_bayar.forward(ctx, rgb, r_bayar);
        FeatureMapSet out{};
        for (int i = 0; i < 4; ++i) {
            int cat = concat_channels(ctx.tape, {f_np[i], f_srm[i], f_bayar[i]});
            DropoutLayer<T> d = drop;
            d.layer_id = drop.layer_id + std::uint64_t(i);
            out[i] = d.forward(ctx, cat);
        }
        return out;
    }
};

}  // namespace mmf
