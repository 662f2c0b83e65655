#pragma once

#include <iostream>

#include "mmf/core/resize.hpp"
#include "mmf/io/image.hpp"
#include "mmf/train/config.hpp"

namespace mmf {

// A decoded training sample before batching.
template <typename T>
struct Sample {
    Tensor<T> rgb01;  // (1,3,H,W)
    Tensor<T> mask;   // (1,1,H,W) binary; all-zero for authentic images
    bool manipulated = false;
    std::string key;  // manifest-relative image path
};

// Training augmentation: uniform rescale, random crop to crop x crop, JPEG
// re-encode with a random quality factor. The mask sees the same geometric
// transforms (nearest-neighbor, so it stays binary) and is never compressed.
// All randomness comes from the caller's per-sample rng, so the augmented
// bytes depend only on (seed, epoch, sample index).
template <typename T>
Sample<T> augment(const Sample<T>& in, const TrainConfig& cfg, Rng& rng) {
    Sample<T> out;
    out.manipulated = in.manipulated;
    out.key = in.key;

    Tensor<T> img = in.rgb01;
    Tensor<T> mask = in.mask;

    if (cfg.augment_scale) {
        const double s = rng.uniform(cfg.scale_min, cfg.scale_max);
        const int nh = std::max(1, int(std::lround(img.shape.h * s)));
        const int nw = std::max(1, int(std::lround(img.shape.w * s)));
        img = bilinear_resize_plain(img, nh, nw);
        mask = nearest_resize_plain(mask, nh, nw);
    }

    // reflect-pad when the scaled image is smaller than the crop
    if (img.shape.h < cfg.crop || img.shape.w < cfg.crop) {
        std::cerr << "[augment] image " << img.shape.str() << " smaller than crop " << cfg.crop
                  << "; reflect-padding\n";
        PadInfo pi;
        while (img.shape.h < cfg.crop || img.shape.w < cfg.crop) {
            int th = std::min(cfg.crop, 2 * img.shape.h - 1);
            int tw = std::min(cfg.crop, 2 * img.shape.w - 1);
            Tensor<T> tmp_img(Shape4(1, 3, th, tw));
            Tensor<T> tmp_mask(Shape4(1, 1, th, tw));
            auto reflect = [](int i, int n) {
                int period = std::max(1, 2 * n - 2);
                i %= period;
                return i < n ? i : period - i;
            };
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < th; ++y)
                    for (int x = 0; x < tw; ++x)
                        tmp_img.at(0, c, y, x) = img.at(0, c, reflect(y, img.shape.h),
                                                        reflect(x, img.shape.w));
            for (int y = 0; y < th; ++y)
                for (int x = 0; x < tw; ++x)
                    tmp_mask.at(0, 0, y, x) =
                        mask.at(0, 0, reflect(y, mask.shape.h), reflect(x, mask.shape.w));
            img = std::move(tmp_img);
            mask = std::move(tmp_mask);
        }
        (void)pi;
    }

    const int oy = int(rng.randint(0, img.shape.h - cfg.crop));
    const int ox = int(rng.randint(0, img.shape.w - cfg.crop));
    Tensor<T> crop_img(Shape4(1, 3, cfg.crop, cfg.crop));
    Tensor<T> crop_mask(Shape4(1, 1, cfg.crop, cfg.crop));
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < cfg.crop; ++y)
            for (int x = 0; x < cfg.crop; ++x) crop_img.at(0, c, y, x) = img.at(0, c, oy + y, ox + x);
    for (int y = 0; y < cfg.crop; ++y)
        for (int x = 0; x < cfg.crop; ++x) crop_mask.at(0, 0, y, x) = mask.at(0, 0, oy + y, ox + x);

    if (cfg.augment_jpeg) {
        const int qf = int(rng.randint(cfg.jpeg_qf_min, cfg.jpeg_qf_max));
        crop_img = to_tensor01<T>(jpeg_roundtrip(from_tensor01(crop_img), qf));
    }

    out.rgb01 = std::move(crop_img);
    out.mask = std::move(crop_mask);
    return out;
}

}  // namespace mmf
