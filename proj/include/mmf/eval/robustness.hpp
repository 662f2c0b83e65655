#pragma once

#include "mmf/eval/report.hpp"

namespace mmf {

enum class DegradationKind { None, GaussianBlur, Jpeg };

struct DegradationSpec {
    DegradationKind kind = DegradationKind::GaussianBlur;
    std::vector<int> levels;  // blur kernel sizes / JPEG quality factors

    static DegradationSpec default_blur() { return {DegradationKind::GaussianBlur, {3, 5, 7, 9, 11, 13}}; }
    static DegradationSpec default_jpeg() { return {DegradationKind::Jpeg, {100, 90, 80, 70, 60, 50}}; }

    void validate() const {
        for (int level : levels) {
            if (kind == DegradationKind::GaussianBlur && (level < 3 || level % 2 == 0))
                throw std::invalid_argument("robustness: blur kernels must be odd >= 3, got " +
                                            std::to_string(level));
            if (kind == DegradationKind::Jpeg && (level < 1 || level > 100))
                throw std::invalid_argument("robustness: JPEG quality must be in [1,100]");
        }
    }
};

inline const char* degradation_name(DegradationKind k) {
    switch (k) {
        case DegradationKind::None: return "none";
        case DegradationKind::GaussianBlur: return "gaussian_blur";
        default: return "jpeg";
    }
}

// sigma convention for a given kernel size
inline double blur_sigma(int kernel) { return 0.3 * ((kernel - 1) / 2 - 1.0) + 0.8; }

// separable gaussian with replicate borders; taps normalized to sum 1
template <typename T>
Tensor<T> gaussian_blur(const Tensor<T>& img, int kernel) {
    if (kernel < 3 || kernel % 2 == 0)
        throw std::invalid_argument("gaussian_blur: kernel must be odd >= 3");
    const double sigma = blur_sigma(kernel);
    const int r = kernel / 2;
    std::vector<double> taps(kernel);
    double sum = 0;
    for (int i = 0; i < kernel; ++i) {
        taps[i] = std::exp(-0.5 * double(i - r) * double(i - r) / (sigma * sigma));
        sum += taps[i];
    }
    for (double& v : taps) v /= sum;

    const Shape4 s = img.shape;
    Tensor<T> tmp(s), out(s);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) {
                    double acc = 0;
                    for (int i = -r; i <= r; ++i)
                        acc += taps[i + r] * double(img.at(n, c, y, std::clamp(x + i, 0, s.w - 1)));
                    tmp.at(n, c, y, x) = T(acc);
                }
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) {
                    double acc = 0;
                    for (int i = -r; i <= r; ++i)
                        acc += taps[i + r] * double(tmp.at(n, c, std::clamp(y + i, 0, s.h - 1), x));
                    out.at(n, c, y, x) = T(acc);
                }
        }
    return out;
}

// Apply one degradation level to a [0,1] image tensor.
template <typename T>
Tensor<T> degrade(const Tensor<T>& img01, DegradationKind kind, int level) {
    switch (kind) {
        case DegradationKind::None: return img01;
        case DegradationKind::GaussianBlur: return gaussian_blur(img01, level);
        case DegradationKind::Jpeg: return to_tensor01<T>(jpeg_roundtrip(from_tensor01(img01), level));
    }
    throw std::logic_error("degrade: bad kind");
}

struct RobustnessPoint {
    DegradationKind kind;
    int level;
    double pixel_f1;
    int n_images;
};

struct RobustnessSeries {
    double baseline_f1 = 0.0;
    std::vector<RobustnessPoint> points;
    std::string config_hash, checkpoint_id, codecs;
    std::uint64_t seed = 0;

    nlohmann::ordered_json to_json(bool with_timestamp = true) const {
        nlohmann::ordered_json j;
        j["kind"] = "robustness";
        j["config_hash"] = config_hash;
        j["checkpoint_id"] = checkpoint_id;
        j["seed"] = seed;
        j["codecs"] = codecs;
        j["baseline_f1"] = baseline_f1;
        j["points"] = nlohmann::ordered_json::array();
        for (const auto& p : points) {
            nlohmann::ordered_json o;
            o["degradation"] = degradation_name(p.kind);
            o["level"] = p.level;
            o["pixel_f1"] = p.pixel_f1;
            o["n_images"] = p.n_images;
            j["points"].push_back(o);
        }
        if (with_timestamp)
            j["generated_at_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                                       std::chrono::system_clock::now().time_since_epoch())
                                       .count();
        return j;
    }

    // plot-ready two-column series (level, F1), one file per degradation kind
    void write(const std::string& out_dir) const {
        std::filesystem::create_directories(out_dir);
        {
            std::ofstream os(out_dir + "/robustness.json");
            os << to_json().dump(2) << "\n";
        }
        for (DegradationKind k : {DegradationKind::GaussianBlur, DegradationKind::Jpeg}) {
            std::ofstream os(out_dir + "/robustness_" + degradation_name(k) + ".dat");
            os << "# level pixel_f1 (baseline " << std::setprecision(12) << baseline_f1 << ")\n";
            for (const auto& p : points)
                if (p.kind == k) os << p.level << " " << std::setprecision(12) << p.pixel_f1 << "\n";
        }
    }
};

// Mean localization F1 over a manifest after applying one degradation level to
// every image (masks untouched). Level lists default to the blur/JPEG sweeps.
template <typename T>
RobustnessSeries robustness_sweep(const Predictor<T>& pred, const DatasetManifest& manifest,
                                  const std::vector<DegradationSpec>& specs, double threshold = 0.5) {
    for (const auto& s : specs) s.validate();
    std::vector<std::size_t> loc_records;
    for (std::size_t i = 0; i < manifest.records.size(); ++i)
        if (manifest.records[i].manipulated && !manifest.records[i].mask.empty())
            loc_records.push_back(i);
    if (loc_records.empty())
        throw std::invalid_argument("robustness: manifest has no manipulated images with masks");

    auto mean_f1 = [&](DegradationKind kind, int level) {
        double sum = 0;
        for (std::size_t idx : loc_records) {
            const ManifestRecord& r = manifest.records[idx];
            Tensor<T> img = to_tensor01<T>(load_image(manifest.resolve(r.image)));
            Tensor<T> gt = load_mask<T>(manifest.resolve(r.mask), r.mask_white);
            Tensor<T> deg = degrade(img, kind, level);
            PredictionBundle<T> b = pred.predict_image01(deg, r.image);
            sum += pixel_f1(b.loc, gt, threshold);
        }
        return sum / double(loc_records.size());
    };

    RobustnessSeries series;
    series.baseline_f1 = mean_f1(DegradationKind::None, 0);
    for (const auto& spec : specs)
        for (int level : spec.levels)
            series.points.push_back(
                {spec.kind, level, mean_f1(spec.kind, level), int(loc_records.size())});
    series.codecs = codec_versions();
    return series;
}

}  // namespace mmf
