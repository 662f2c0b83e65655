#pragma once

#include <array>
#include <stdexcept>
#include <string>

namespace mmf {

enum class FusionMode { SingleAux, Late, Early };

// fixed modality order, used for late-fusion concatenation and EFM inputs
enum class AuxKind { NoisePrint = 0, Srm = 1, Bayar = 2 };

inline const char* aux_name(AuxKind k) {
    switch (k) {
        case AuxKind::NoisePrint: return "noiseprint";
        case AuxKind::Srm: return "srm";
        default: return "bayar";
    }
}

inline AuxKind aux_from_name(const std::string& s) {
    if (s == "noiseprint") return AuxKind::NoisePrint;
    if (s == "srm") return AuxKind::Srm;
    if (s == "bayar") return AuxKind::Bayar;
    throw std::invalid_argument("unknown modality '" + s + "' (expected noiseprint|srm|bayar)");
}

inline const char* fusion_name(FusionMode m) {
    switch (m) {
        case FusionMode::SingleAux: return "single-aux";
        case FusionMode::Late: return "late";
        default: return "early";
    }
}

inline FusionMode fusion_from_name(const std::string& s) {
    if (s == "single-aux") return FusionMode::SingleAux;
    if (s == "late") return FusionMode::Late;
    if (s == "early") return FusionMode::Early;
    throw std::invalid_argument("unknown fusion mode '" + s + "'");
}

// Architecture hyperparameters for the encoder, decoders and detector head.
struct ModelConfig {
    // encoder stages
    std::array<int, 4> channels{64, 128, 320, 512};
    std::array<int, 4> depths{3, 4, 6, 3};
    std::array<int, 4> heads{1, 2, 5, 8};
    std::array<int, 4> sr_ratios{8, 4, 2, 1};
    int mlp_ratio = 4;

    FusionMode fusion = FusionMode::Early;
    AuxKind single_aux = AuxKind::Bayar;   // used when fusion == SingleAux
    bool share_rgb_branch = true;          // late fusion weight sharing
    double frm_lambda = 0.5;               // residual scale of the rectification
    int frm_reduction = 4;                 // pooled-descriptor MLP bottleneck
    double dropout_rate = 0.3;             // late-fusion features, before anomaly decoder
    bool ffm_bias = true;                  // bias-free test configuration when false
    bool use_frd = true;                   // ablation flag: plain decoder when false

    // early fusion module: 3x3 conv widths, final 1x1 resizes to 3 channels
    std::array<int, 4> efm_widths{24, 48, 96, 192};

    // decoders
    int decoder_embed = 256;
    int detector_hidden = 16;

    // bayar layer
    int bayar_kernel = 5;

    void validate() const {
        for (int i = 0; i < 4; ++i) {
            if (channels[i] < 1 || depths[i] < 1 || heads[i] < 1)
                throw std::invalid_argument("ModelConfig: dims/depths/heads must be >= 1");
            if (channels[i] % heads[i] != 0)
                throw std::invalid_argument("ModelConfig: heads must divide channels at stage " +
                                            std::to_string(i + 1));
            if (i > 0 && channels[i] <= channels[i - 1])
                throw std::invalid_argument("ModelConfig: channels must be strictly increasing");
        }
        if (bayar_kernel < 3 || bayar_kernel % 2 == 0)
            throw std::invalid_argument("ModelConfig: bayar kernel must be odd and >= 3");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw std::invalid_argument("ModelConfig: dropout must be in [0,1)");
    }

    // CPU-minutes scale: used by the synthetic-corpus experiments
    static ModelConfig toy() {
        ModelConfig c;
        c.channels = {16, 32, 64, 128};
        c.depths = {1, 1, 1, 1};
        c.heads = {1, 2, 4, 8};
        c.sr_ratios = {8, 4, 2, 1};
        c.mlp_ratio = 2;
        c.efm_widths = {8, 12, 16, 24};
        c.decoder_embed = 64;
        c.detector_hidden = 16;
        return c;
    }

    // mid-size profile
    static ModelConfig small() {
        ModelConfig c;
        c.channels = {32, 64, 160, 256};
        c.depths = {2, 2, 2, 2};
        c.heads = {1, 2, 5, 8};
        c.mlp_ratio = 4;
        c.efm_widths = {24, 48, 96, 192};
        c.decoder_embed = 256;
        return c;
    }

    // full-scale profile (MiT-B2 class backbone)
    static ModelConfig full() { return ModelConfig{}; }

    static ModelConfig profile(const std::string& name) {
        if (name == "toy") return toy();
        if (name == "small") return small();
        if (name == "full") return full();
        throw std::invalid_argument("unknown profile '" + name + "' (expected toy|small|full)");
    }
};

}  // namespace mmf
