#pragma once

#include <optional>

#include "mmf/filters/bayar.hpp"
#include "mmf/model/decoders.hpp"

namespace mmf {

// Test/explainability hooks: replace a residual input with a given map before
// it reaches the fusion encoder.
template <typename T>
struct ResidualOverrides {
    std::optional<Tensor<T>> noiseprint, srm, bayar;

    bool any() const { return noiseprint || srm || bayar; }
};

enum class Phase { Train1, Train2, Eval };

template <typename T>
struct NetworkOutputs {
    FeatureMapSet features{};
    int loc = -1;        // (B,1,H,W) in [0,1]
    int loc_logits = -1; // (B,2,H,W)
    int conf = -1;       // (B,1,H,W) in [0,1]
    int score = -1;      // (B,1,1,1) in [0,1]
    int r_noiseprint = -1, r_srm = -1, r_bayar = -1;
};

// The full localization/detection network: forensic residual inputs, a fusion
// encoder (single-aux, late or early), the anomaly and confidence decoders and
// the pooled forgery detector. Residuals for noiseprint and SRM are computed
// outside (fixed sources); the Bayar residual is produced in-graph by the
// constrained layer so it can train during single-aux runs.
template <typename T>
class Network {
  public:
    ModelConfig cfg;

    explicit Network(const ModelConfig& cfg_, std::uint64_t init_seed = 0)
        : cfg(cfg_), reg_(init_seed) {
        cfg.validate();
        bayar_ = BayarLayer<T>(reg_, "bayar", cfg.bayar_kernel);
        std::array<int, 4> dec_channels = cfg.channels;
        switch (cfg.fusion) {
            case FusionMode::SingleAux:
                single_ = std::make_unique<DualBranchEncoder<T>>(reg_, "encoder.single", cfg);
                break;
            case FusionMode::Late:
                late_ = std::make_unique<LateFusionEncoder<T>>(reg_, "encoder.late", cfg);
                for (int i = 0; i < 4; ++i) dec_channels[i] *= 3;
                break;
            case FusionMode::Early:
                efm_ = std::make_unique<EarlyFusionModule<T>>(reg_, "encoder.efm", cfg.efm_widths);
                single_ = std::make_unique<DualBranchEncoder<T>>(reg_, "encoder.early", cfg);
                break;
        }
        anomaly_ = MapDecoder<T>(reg_, "anomaly", dec_channels, cfg.decoder_embed, true,
                                 NormTrainFlag::Encoder, cfg.use_frd);
        confidence_ = MapDecoder<T>(reg_, "confidence", dec_channels, cfg.decoder_embed, false,
                                    NormTrainFlag::Head, cfg.use_frd);
        detector_ = ForgeryDetector<T>(reg_, "detector", cfg.detector_hidden);
    }

    ParamRegistry<T>& params() { return reg_; }
    const ParamRegistry<T>& params() const { return reg_; }
    BayarLayer<T>& bayar() { return bayar_; }
    const BayarLayer<T>& bayar() const { return bayar_; }

    // phase-1 group: encoder towers, fusion modules, bayar layer, anomaly decoder
    static bool in_phase1_group(const std::string& name) {
        return name.rfind("encoder.", 0) == 0 || name.rfind("bayar", 0) == 0 ||
               name.rfind("anomaly.", 0) == 0;
    }
    static bool in_phase2_group(const std::string& name) {
        return name.rfind("confidence.", 0) == 0 || name.rfind("detector.", 0) == 0;
    }

    void set_phase1_frozen(bool frozen) {
        for (auto& p : reg_.all())
            if (in_phase1_group(p->name)) p->frozen = frozen;
    }

    void set_bayar_frozen(bool frozen) { bayar_.weight->frozen = frozen; }

    // rgb01: (B,3,H,W) in [0,1], dims multiples of 32.
    // r_noiseprint / r_srm: residuals computed from the same pixels.
    NetworkOutputs<T> forward(FwdCtx<T>& ctx, const Tensor<T>& rgb01, const Tensor<T>& r_noiseprint,
                              const Tensor<T>& r_srm, Phase phase, int out_h = -1, int out_w = -1,
                              const ResidualOverrides<T>& over = {}, bool want_heads = true) const {
        Tape<T>& t = ctx.tape;
        ctx.train_encoder = phase == Phase::Train1;
        ctx.train_head = phase == Phase::Train2;

        const Shape4 s = rgb01.shape;
        if (out_h < 0) out_h = s.h;
        if (out_w < 0) out_w = s.w;

        int rgb01_node = t.leaf(rgb01);
        Tensor<T> std_img = rgb01;
        for (T& v : std_img.v) v = (v - T(0.5)) / T(0.5);
        int rgb = t.leaf(std_img);

        NetworkOutputs<T> out;
        int r_np = over.noiseprint ? t.leaf(*over.noiseprint) : t.leaf(r_noiseprint);
        int r_srm_node = over.srm ? t.leaf(*over.srm) : t.leaf(r_srm);
        int r_bayar = over.bayar ? t.leaf(*over.bayar) : bayar_.forward(ctx, rgb01_node);
        out.r_noiseprint = r_np;
        out.r_srm = r_srm_node;
        out.r_bayar = r_bayar;

        switch (cfg.fusion) {
            case FusionMode::SingleAux: {
                int aux = cfg.single_aux == AuxKind::NoisePrint ? r_np
                          : cfg.single_aux == AuxKind::Srm      ? r_srm_node
                                                                : r_bayar;
                out.features = single_->forward(ctx, rgb, aux);
                break;
            }
            case FusionMode::Late:
                out.features = late_->forward(ctx, rgb, r_np, r_srm_node, r_bayar);
                break;
            case FusionMode::Early: {
                int fa = efm_->forward(ctx, r_np, r_srm_node, r_bayar);
                out.features = single_->forward(ctx, rgb, fa);
                break;
            }
        }

        auto [loc, logits] = anomaly_.forward(ctx, out.features, out_h, out_w);
        out.loc = loc;
        out.loc_logits = logits;
        if (want_heads) {
            auto [conf, conf_logits] = confidence_.forward(ctx, out.features, out_h, out_w);
            (void)conf_logits;
            out.conf = conf;
            out.score = detector_.forward(ctx, out.loc, out.conf);
        }
        return out;
    }

    const DualBranchEncoder<T>* single_encoder() const { return single_.get(); }
    const LateFusionEncoder<T>* late_encoder() const { return late_.get(); }
    const EarlyFusionModule<T>* efm() const { return efm_.get(); }
    const MapDecoder<T>& anomaly_decoder() const { return anomaly_; }
    const MapDecoder<T>& confidence_decoder() const { return confidence_; }
    const ForgeryDetector<T>& detector() const { return detector_; }

  private:
    ParamRegistry<T> reg_;
    BayarLayer<T> bayar_;
    std::unique_ptr<DualBranchEncoder<T>> single_;
    std::unique_ptr<LateFusionEncoder<T>> late_;
    std::unique_ptr<EarlyFusionModule<T>> efm_;
    MapDecoder<T> anomaly_;
    MapDecoder<T> confidence_;
    ForgeryDetector<T> detector_;
};

}  // namespace mmf
