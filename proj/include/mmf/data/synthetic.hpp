#pragma once

#include "mmf/core/rng.hpp"
#include "mmf/io/manifest.hpp"

namespace mmf {

// Generator for the desk-scale splice corpora. Two flavors:
//
//   noise — a patch from an independently generated scene with a much larger
//     noise level is pasted in, so the forgery is exposed by noise statistics
//     (and a seam).
//   edge — a region of the same image is copied from elsewhere (copy-move).
//     Noise statistics inside the region match the rest of the image exactly;
//     the only consistent artifact is the boundary seam.
//
// Half of the images are authentic. Images and masks are written as PNG plus
// manifest.jsonl and pristine.jsonl (the authentic subset, usable as a
// masking pool). Output is deterministic for a fixed seed.
struct SyntheticSpec {
    int count = 200;
    int size = 64;
    std::string kind = "noise";  // noise | edge
    double background_noise = 3.0 / 255.0;
    double patch_noise = 16.0 / 255.0;
    double region_min = 0.35, region_max = 0.60;  // pasted-region side, fraction of size
    std::uint64_t seed = 0;
};

namespace detail {

// smooth random scene: linear gradient plus a few soft blobs, values in [0,1]
template <typename T>
Tensor<T> smooth_scene(int size, Rng& rng) {
    Tensor<T> img(Shape4(1, 3, size, size));
    const double gx = rng.uniform(-0.4, 0.4) / size;
    const double gy = rng.uniform(-0.4, 0.4) / size;
    const double base = rng.uniform(0.3, 0.7);
    struct Blob {
        double cy, cx, r, amp;
    };
    std::vector<Blob> blobs;
    for (int b = 0; b < 4; ++b)
        blobs.push_back({rng.uniform(0, size), rng.uniform(0, size), rng.uniform(size / 8.0, size / 2.0),
                         rng.uniform(-0.25, 0.25)});
    std::array<double, 3> tint = {rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08),
                                  rng.uniform(-0.08, 0.08)};
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double v = base + gx * x + gy * y;
            for (const Blob& b : blobs) {
                double d2 = (y - b.cy) * (y - b.cy) + (x - b.cx) * (x - b.cx);
                v += b.amp * std::exp(-d2 / (2.0 * b.r * b.r));
            }
            for (int c = 0; c < 3; ++c)
                img.at(0, c, y, x) = T(std::clamp(v + tint[c], 0.05, 0.95));
        }
    return img;
}

template <typename T>
void add_noise(Tensor<T>& img, double sigma, Rng& rng) {
    for (T& v : img.v) v = T(std::clamp(double(v) + rng.normal(0.0, sigma), 0.0, 1.0));
}

}  // namespace detail

inline DatasetManifest make_synthetic(const SyntheticSpec& spec, const std::string& out_dir) {
    if (spec.kind != "noise" && spec.kind != "edge")
        throw std::invalid_argument("make-synthetic: kind must be noise|edge, got " + spec.kind);
    if (spec.size < 32) throw std::invalid_argument("make-synthetic: size must be >= 32");
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "masks");

    DatasetManifest manifest;
    manifest.root = fs::absolute(out_dir);
    DatasetManifest pristine;
    pristine.root = manifest.root;

    const int S = spec.size;
    for (int i = 0; i < spec.count; ++i) {
        Rng rng(derive_seed(spec.seed, 0x5E1Du, std::uint64_t(i)));
        Tensor<float> img = detail::smooth_scene<float>(S, rng);
        const bool manipulated = (i % 2) == 1;
        Tensor<float> mask(Shape4(1, 1, S, S));

        if (manipulated) {
            const int lo = std::max(4, int(spec.region_min * S));
            const int hi = std::min(S - 6, int(spec.region_max * S));
            const int rh = int(rng.randint(lo, hi));
            const int rw = int(rng.randint(lo, hi));
            const int ry = int(rng.randint(2, S - rh - 2));
            const int rx = int(rng.randint(2, S - rw - 2));
            if (spec.kind == "noise") {
                Tensor<float> donor = detail::smooth_scene<float>(S, rng);
                detail::add_noise(donor, spec.patch_noise, rng);
                for (int y = ry; y < ry + rh; ++y)
                    for (int x = rx; x < rx + rw; ++x)
                        for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = donor.at(0, c, y, x);
                // background noise arrives after the paste (patch keeps its own)
            } else {  // edge: copy-move from a shifted location of the same image
                int dy = 0, dx = 0;
                while (std::abs(dy) < S / 5 && std::abs(dx) < S / 5) {
                    dy = int(rng.randint(-S / 3, S / 3));
                    dx = int(rng.randint(-S / 3, S / 3));
                }
                Tensor<float> copy = img;
                for (int y = ry; y < ry + rh; ++y)
                    for (int x = rx; x < rx + rw; ++x) {
                        int sy = std::clamp(y + dy, 0, S - 1);
                        int sx = std::clamp(x + dx, 0, S - 1);
                        for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = copy.at(0, c, sy, sx);
                    }
            }
            for (int y = ry; y < ry + rh; ++y)
                for (int x = rx; x < rx + rw; ++x) mask.at(0, 0, y, x) = 1.0f;
        }

        if (spec.kind == "noise" && manipulated) {
            // add background noise outside the pasted region only
            Rng nrng(derive_seed(spec.seed, 0x401Eu, std::uint64_t(i)));
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < S; ++y)
                    for (int x = 0; x < S; ++x) {
                        double n = nrng.normal(0.0, spec.background_noise);
                        if (mask.at(0, 0, y, x) == 0.0f) {
                            float& v = img.at(0, c, y, x);
                            v = float(std::clamp(double(v) + n, 0.0, 1.0));
                        }
                    }
        } else {
            detail::add_noise(img, spec.background_noise, rng);
        }

        char name[64];
        std::snprintf(name, sizeof name, "images/im_%04d.png", i);
        char mname[64];
        std::snprintf(mname, sizeof mname, "masks/im_%04d.png", i);
        save_png((fs::path(out_dir) / name).string(), from_tensor01(img));

        ManifestRecord rec;
        rec.image = name;
        rec.source = "synthetic_" + spec.kind;
        rec.manipulated = manipulated;
        if (manipulated) {
            ImageU8 m;
            m.width = S;
            m.height = S;
            m.channels = 1;
            m.pixels.resize(std::size_t(S) * S);
            for (int y = 0; y < S; ++y)
                for (int x = 0; x < S; ++x)
                    m.pixels[std::size_t(y) * S + x] = mask.at(0, 0, y, x) != 0.0f ? 255 : 0;
            save_png((fs::path(out_dir) / mname).string(), m);
            rec.mask = mname;
        } else {
            pristine.records.push_back(rec);
        }
        manifest.records.push_back(rec);
    }
    save_manifest(manifest, (fs::path(out_dir) / "manifest.jsonl").string());
    save_manifest(pristine, (fs::path(out_dir) / "pristine.jsonl").string());
    return manifest;
}

}  // namespace mmf
