#pragma once

#include "mmf/eval/report.hpp"

namespace mmf {

enum class MaskMode { Zeros, RandomImage, SelfTest };

inline const char* mask_mode_name(MaskMode m) {
    switch (m) {
        case MaskMode::Zeros: return "zeros";
        case MaskMode::RandomImage: return "random_image";
        default: return "self_test";
    }
}

inline MaskMode mask_mode_from_name(const std::string& s) {
    if (s == "zeros") return MaskMode::Zeros;
    if (s == "random_image") return MaskMode::RandomImage;
    if (s == "self_test") return MaskMode::SelfTest;
    throw std::invalid_argument("unknown mask mode '" + s + "' (zeros|random_image|self_test)");
}

// What to replace and how; random_image draws from a pool of authentic images.
struct MaskSpec {
    AuxKind target = AuxKind::Srm;
    MaskMode mode = MaskMode::Zeros;
    const DatasetManifest* pristine_pool = nullptr;

    void validate() const {
        if (mode == MaskMode::RandomImage && (!pristine_pool || pristine_pool->records.empty()))
            throw std::invalid_argument(
                "mask_modality: random_image mode requires a non-empty pristine pool");
    }
};

// Build the residual override for one image. Zeros mode replaces the target
// residual with an all-zero map; random_image recomputes the target's own
// filter on a pool image resized to the input dims; self_test substitutes the
// residual with itself (the do-nothing hook used by the sanity checks).
template <typename T>
ResidualOverrides<T> mask_modality(const Predictor<T>& pred, const Tensor<T>& rgb01,
                                   const std::string& key, const MaskSpec& spec, Rng& rng) {
    spec.validate();
    const Shape4 s = rgb01.shape;
    ResidualOverrides<T> over;
    Tensor<T> replacement;
    switch (spec.mode) {
        case MaskMode::Zeros:
            replacement = Tensor<T>(Shape4(s.n, 3, s.h, s.w));
            break;
        case MaskMode::SelfTest: {
            if (spec.target == AuxKind::Srm) replacement = pred.sources().srm(rgb01);
            else if (spec.target == AuxKind::NoisePrint) replacement = pred.sources().np(rgb01, key);
            else replacement = pred.network().bayar().forward_plain(rgb01);
            break;
        }
        case MaskMode::RandomImage: {
            const auto& pool = *spec.pristine_pool;
            const auto& rec = pool.records[std::size_t(rng.randint(0, long(pool.records.size()) - 1))];
            Tensor<T> pristine = to_tensor01<T>(load_image(pool.resolve(rec.image)));
            pristine = bilinear_resize_plain(pristine, s.h, s.w);
            if (spec.target == AuxKind::Srm) replacement = pred.sources().srm(pristine);
            else if (spec.target == AuxKind::NoisePrint)
                replacement = pred.sources().np(pristine, rec.image);
            else replacement = pred.network().bayar().forward_plain(pristine);
            break;
        }
    }
    if (spec.target == AuxKind::Srm) over.srm = std::move(replacement);
    else if (spec.target == AuxKind::NoisePrint) over.noiseprint = std::move(replacement);
    else over.bayar = std::move(replacement);
    return over;
}

struct ExplainResult {
    std::string modality;
    std::string mode;
    double delta_f1 = std::nan("");  // ground-truth measure
    double pq = std::nan("");        // blind measure
    double f1_unmasked = std::nan(""), f1_masked = std::nan("");
    int n_images = 0;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["modality"] = modality;
        j["mode"] = mode;
        if (!std::isnan(delta_f1)) {
            j["delta_f1"] = delta_f1;
            j["f1_unmasked"] = f1_unmasked;
            j["f1_masked"] = f1_masked;
        }
        if (!std::isnan(pq)) j["pq"] = pq;
        j["n_images"] = j.contains("pq") || !std::isnan(delta_f1) ? n_images : 0;
        return j;
    }
};

// Ground-truth filter importance: the drop in mean localization F1 when the
// modality is masked. Runs over manipulated images with masks; higher drop
// means the filter mattered more. May be negative.
template <typename T>
ExplainResult filter_importance(const Predictor<T>& pred, const DatasetManifest& manifest,
                                const MaskSpec& spec, std::uint64_t seed, double threshold = 0.5) {
    spec.validate();
    ExplainResult res;
    res.modality = aux_name(spec.target);
    res.mode = mask_mode_name(spec.mode);
    double sum_unmasked = 0, sum_masked = 0;
    int n = 0;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        const ManifestRecord& r = manifest.records[i];
        if (!r.manipulated || r.mask.empty()) continue;
        Tensor<T> img = to_tensor01<T>(load_image(manifest.resolve(r.image)));
        Tensor<T> gt = load_mask<T>(manifest.resolve(r.mask), r.mask_white);
        PredictionBundle<T> base = pred.predict_image01(img, r.image);
        Rng rng(derive_seed(seed, 0xE1AAu, i));
        ResidualOverrides<T> over = mask_modality(pred, img, r.image, spec, rng);
        PredictionBundle<T> masked = pred.predict_image01(img, r.image, over);
        sum_unmasked += pixel_f1(base.loc, gt, threshold);
        sum_masked += pixel_f1(masked.loc, gt, threshold);
        ++n;
    }
    if (n == 0) throw std::invalid_argument("filter_importance: no manipulated images with masks");
    res.f1_unmasked = sum_unmasked / n;
    res.f1_masked = sum_masked / n;
    res.delta_f1 = res.f1_unmasked - res.f1_masked;
    res.n_images = n;
    return res;
}

// Blind measure: F1 of the masked prediction scored against the binarized
// unmasked prediction. Needs no ground truth; lower means the masked modality
// mattered more.
template <typename T>
double prediction_quality_drop(const Predictor<T>& pred, const Tensor<T>& rgb01,
                               const std::string& key, const MaskSpec& spec, Rng& rng,
                               double threshold = 0.5) {
    PredictionBundle<T> base = pred.predict_image01(rgb01, key);
    ResidualOverrides<T> over = mask_modality(pred, rgb01, key, spec, rng);
    PredictionBundle<T> masked = pred.predict_image01(rgb01, key, over);
    Tensor<T> reference = binarize(base.loc, threshold);
    return pixel_f1(masked.loc, reference, threshold);
}

// Mean PQ over every image of a manifest.
template <typename T>
ExplainResult prediction_quality_sweep(const Predictor<T>& pred, const DatasetManifest& manifest,
                                       const MaskSpec& spec, std::uint64_t seed,
                                       double threshold = 0.5) {
    spec.validate();
    ExplainResult res;
    res.modality = aux_name(spec.target);
    res.mode = mask_mode_name(spec.mode);
    double sum = 0;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        const ManifestRecord& r = manifest.records[i];
        Tensor<T> img = to_tensor01<T>(load_image(manifest.resolve(r.image)));
        Rng rng(derive_seed(seed, 0xE1BBu, i));
        sum += prediction_quality_drop(pred, img, r.image, spec, rng, threshold);
    }
    if (manifest.records.empty()) throw std::invalid_argument("pq: empty manifest");
    res.pq = sum / double(manifest.records.size());
    res.n_images = int(manifest.records.size());
    return res;
}

}  // namespace mmf
