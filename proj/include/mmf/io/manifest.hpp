#pragma once

#include <algorithm>
#include <iostream>
#include <set>

#include <json.hpp>

#include "mmf/io/image.hpp"

namespace mmf {

// One dataset record. Paths are stored as written in the manifest and
// resolved against the manifest's directory; `mask_white` records the mask
// polarity (some corpora mark authentic pixels white instead).
struct ManifestRecord {
    std::string image;
    std::string mask;  // empty: no mask
    bool manipulated = false;
    std::string source = "default";
    bool mask_white = true;
};

struct DatasetManifest {
    std::filesystem::path root;
    std::vector<ManifestRecord> records;

    int count_manipulated() const {
        int n = 0;
        for (const auto& r : records) n += r.manipulated ? 1 : 0;
        return n;
    }
    int count_authentic() const { return int(records.size()) - count_manipulated(); }

    std::string resolve(const std::string& rel) const {
        std::filesystem::path p(rel);
        return p.is_absolute() ? p.string() : (root / p).string();
    }

    std::set<std::string> sources() const {
        std::set<std::string> out;
        for (const auto& r : records) out.insert(r.source);
        return out;
    }

    // Line-delimited JSON records:
    //   {"image": "...", "mask": "...", "label": "authentic|manipulated",
    //    "source": "...", "mask_polarity": "manipulated_white|manipulated_black"}
    // Validation is total: dangling paths and manipulated records without
    // masks (when localization is requested) refuse the whole run up front.
    static DatasetManifest load(const std::string& path, bool require_masks) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("manifest: cannot open " + path);
        DatasetManifest m;
        m.root = std::filesystem::absolute(std::filesystem::path(path)).parent_path();
        std::string line;
        int lineno = 0;
        std::vector<std::string> errors;
        std::map<std::string, int> seen;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty() || line[0] == '#') continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const std::exception& e) {
                throw std::runtime_error("manifest: " + path + ":" + std::to_string(lineno) + ": " +
                                         e.what());
            }
            ManifestRecord r;
            r.image = j.at("image").get<std::string>();
            r.mask = j.value("mask", std::string());
            std::string label = j.at("label").get<std::string>();
            if (label == "manipulated") r.manipulated = true;
            else if (label == "authentic") r.manipulated = false;
            else
                throw std::runtime_error("manifest: " + path + ":" + std::to_string(lineno) +
                                         ": bad label '" + label + "'");
            r.source = j.value("source", std::string("default"));
            r.mask_white = j.value("mask_polarity", std::string("manipulated_white")) ==
                           "manipulated_white";
            seen[r.image] += 1;
            m.records.push_back(std::move(r));
        }
        for (std::size_t i = 0; i < m.records.size(); ++i) {
            const auto& r = m.records[i];
            if (!std::filesystem::exists(m.resolve(r.image)))
                errors.push_back("record " + std::to_string(i) + ": image not found: " + r.image);
            if (!r.mask.empty() && !std::filesystem::exists(m.resolve(r.mask)))
                errors.push_back("record " + std::to_string(i) + ": mask not found: " + r.mask);
            if (require_masks && r.manipulated && r.mask.empty())
                errors.push_back("record " + std::to_string(i) +
                                 ": manipulated image without mask: " + r.image);
        }
        if (!errors.empty()) {
            std::string msg = "manifest validation failed for " + path + ":";
            for (const auto& e : errors) msg += "\n  " + e;
            throw std::runtime_error(msg);
        }
        int dups = 0;
        for (const auto& [k, v] : seen)
            if (v > 1) ++dups;
        if (dups > 0)
            std::cerr << "[manifest] warning: " << dups << " duplicate image path(s) in " << path
                      << "\n";
        return m;
    }
};

// ---------------------------------------------------------------------------
// ingestion: decode, normalize to [0,1], pad to multiples of 32
// ---------------------------------------------------------------------------

struct PadInfo {
    int orig_h = 0, orig_w = 0;
    int padded_h = 0, padded_w = 0;
};

inline int next_multiple(int v, int m) { return ((v + m - 1) / m) * m; }

// reflective padding on the bottom/right edges
template <typename T>
Tensor<T> pad_to_multiple(const Tensor<T>& x, int multiple, PadInfo& info) {
    const Shape4 s = x.shape;
    info.orig_h = s.h;
    info.orig_w = s.w;
    info.padded_h = next_multiple(s.h, multiple);
    info.padded_w = next_multiple(s.w, multiple);
    if (info.padded_h == s.h && info.padded_w == s.w) return x;
    Tensor<T> out(Shape4(s.n, s.c, info.padded_h, info.padded_w));
    auto reflect = [](int i, int n) {
        if (n == 1) return 0;
        int period = 2 * n - 2;
        i %= period;
        if (i < 0) i += period;
        return i < n ? i : period - i;
    };
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int h = 0; h < info.padded_h; ++h)
                for (int w = 0; w < info.padded_w; ++w)
                    out.at(n, c, h, w) = x.at(n, c, reflect(h, s.h), reflect(w, s.w));
    return out;
}

template <typename T>
Tensor<T> crop_to(const Tensor<T>& x, int h, int w) {
    const Shape4 s = x.shape;
    if (h > s.h || w > s.w) throw std::invalid_argument("crop_to: target larger than input");
    if (h == s.h && w == s.w) return x;
    Tensor<T> out(Shape4(s.n, s.c, h, w));
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) out.at(n, c, y, xx) = x.at(n, c, y, xx);
    return out;
}

template <typename T>
struct IngestedImage {
    Tensor<T> rgb01;  // (1,3,H',W') padded
    PadInfo pad;
};

template <typename T>
IngestedImage<T> ingest_image(const std::string& path) {
    ImageU8 raw = load_image(path);
    if (raw.channels == 1) std::cerr << "[ingest] grayscale input replicated to RGB: " << path << "\n";
    IngestedImage<T> out;
    Tensor<T> t = to_tensor01<T>(raw);
    out.rgb01 = pad_to_multiple(t, 32, out.pad);
    return out;
}

// value >= 128 on the 8-bit scale maps to 1 (before polarity correction)
template <typename T>
Tensor<T> binarize_mask(const ImageU8& raster, bool mask_white = true) {
    if (raster.channels != 1 && raster.channels != 3)
        throw std::invalid_argument("binarize_mask: unsupported channel count");
    Tensor<T> out(Shape4(1, 1, raster.height, raster.width));
    for (int y = 0; y < raster.height; ++y)
        for (int x = 0; x < raster.width; ++x) {
            int v = raster.at(y, x, 0);
            bool on = v >= 128;
            if (!mask_white) on = !on;
            out.at(0, 0, y, x) = on ? T(1) : T(0);
        }
    return out;
}

template <typename T>
Tensor<T> load_mask(const std::string& path, bool mask_white) {
    return binarize_mask<T>(load_image(path), mask_white);
}

// ---------------------------------------------------------------------------
// video manifests: first-frame sampling
// ---------------------------------------------------------------------------

// Video records list either a directory of frame images or an explicit
// "frames" array; the first frame (sorted order) inherits the video's label
// and mask. Container files are not decoded here; videos without usable
// frames are skipped with a warning.
inline DatasetManifest first_frame_sample(const std::string& video_manifest_path) {
    std::ifstream in(video_manifest_path);
    if (!in) throw std::runtime_error("video manifest: cannot open " + video_manifest_path);
    DatasetManifest out;
    out.root = std::filesystem::absolute(std::filesystem::path(video_manifest_path)).parent_path();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        nlohmann::json j = nlohmann::json::parse(line);
        std::string first;
        if (j.contains("frames")) {
            auto frames = j.at("frames");
            if (!frames.empty()) first = frames.front().get<std::string>();
        } else if (j.contains("video")) {
            std::filesystem::path v = out.root / j.at("video").get<std::string>();
            if (std::filesystem::is_directory(v)) {
                std::vector<std::string> entries;
                for (const auto& e : std::filesystem::directory_iterator(v))
                    if (e.is_regular_file()) entries.push_back(e.path().string());
                std::sort(entries.begin(), entries.end());
                if (!entries.empty())
                    first = std::filesystem::relative(entries.front(), out.root).string();
            } else if (std::filesystem::is_regular_file(v)) {
                std::string ext = v.extension().string();
                for (char& ch : ext) ch = char(std::tolower(ch));
                if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".ppm" ||
                    ext == ".tif" || ext == ".tiff")
                    first = j.at("video").get<std::string>();
                else
                    throw std::runtime_error("video manifest line " + std::to_string(lineno) +
                                             ": container decoding is not supported; provide "
                                             "extracted frames for " +
                                             v.string());
            }
        }
        if (first.empty()) {
            std::cerr << "[video-frames] warning: line " << lineno << ": empty video, skipped\n";
            continue;
        }
        ManifestRecord r;
        r.image = first;
        r.mask = j.value("mask", std::string());
        r.manipulated = j.at("label").get<std::string>() == "manipulated";
        r.source = j.value("source", std::string("video"));
        r.mask_white = j.value("mask_polarity", std::string("manipulated_white")) ==
                       "manipulated_white";
        out.records.push_back(std::move(r));
    }
    return out;
}

inline void save_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("manifest: cannot write " + path);
    for (const auto& r : m.records) {
        nlohmann::ordered_json j;
        j["image"] = r.image;
        if (!r.mask.empty()) j["mask"] = r.mask;
        j["label"] = r.manipulated ? "manipulated" : "authentic";
        j["source"] = r.source;
        if (!r.mask_white) j["mask_polarity"] = "manipulated_black";
        os << j.dump() << "\n";
    }
}

}  // namespace mmf
