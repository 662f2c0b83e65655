#pragma once

#include "mmf/filters/sources.hpp"
#include "mmf/io/manifest.hpp"
#include "mmf/model/network.hpp"

namespace mmf {

template <typename T>
struct PredictionBundle {
    Tensor<T> loc;   // (1,1,H,W) cropped back to the original dims
    Tensor<T> conf;  // same dims
    double score = 0.0;
    PadInfo pad;
};

// Inference pipeline: ingest -> residuals -> fusion encoder -> decoders ->
// detector, with maps cropped back to the original dims. Residuals are
// extracted at the original resolution and padded alongside the image (this
// keeps precomputed residual stores usable). Errors carry the failing stage.
template <typename T>
class Predictor {
  public:
    Predictor(const Network<T>& net, const ResidualSources<T>& sources)
        : net_(&net), sources_(&sources) {}

    PredictionBundle<T> predict_image01(const Tensor<T>& rgb01, const std::string& key,
                                        const ResidualOverrides<T>& over = {}) const {
        Tensor<T> np, srm;
        try {
            np = sources_->np(rgb01, key);
            srm = sources_->srm(rgb01);
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string("predict/residuals: ") + e.what());
        }
        PadInfo pad;
        Tensor<T> rgb_p = pad_to_multiple(rgb01, 32, pad);
        PadInfo dummy;
        Tensor<T> np_p = pad_to_multiple(np, 32, dummy);
        Tensor<T> srm_p = pad_to_multiple(srm, 32, dummy);
        ResidualOverrides<T> over_p;
        if (over.noiseprint) over_p.noiseprint = pad_to_multiple(*over.noiseprint, 32, dummy);
        if (over.srm) over_p.srm = pad_to_multiple(*over.srm, 32, dummy);
        if (over.bayar) over_p.bayar = pad_to_multiple(*over.bayar, 32, dummy);

        try {
            Tape<T> tape;
            FwdCtx<T> ctx(tape);
            ctx.sample_seeds.assign(std::size_t(rgb_p.shape.n), 0);
            auto out = net_->forward(ctx, rgb_p, np_p, srm_p, Phase::Eval, -1, -1, over_p);
            PredictionBundle<T> bundle;
            bundle.pad = pad;
            bundle.loc = crop_to(tape.val(out.loc), pad.orig_h, pad.orig_w);
            bundle.conf = crop_to(tape.val(out.conf), pad.orig_h, pad.orig_w);
            bundle.score = double(tape.val(out.score).item());
            return bundle;
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string("predict/forward: ") + e.what());
        }
    }

    PredictionBundle<T> predict_path(const std::string& path, const std::string& key = "",
                                     const ResidualOverrides<T>& over = {}) const {
        Tensor<T> rgb01;
        try {
            rgb01 = to_tensor01<T>(load_image(path));
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string("predict/ingest: ") + e.what());
        }
        return predict_image01(rgb01, key.empty() ? path : key, over);
    }

    const Network<T>& network() const { return *net_; }
    const ResidualSources<T>& sources() const { return *sources_; }

  private:
    const Network<T>* net_;
    const ResidualSources<T>* sources_;
};

}  // namespace mmf
