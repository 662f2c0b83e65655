#pragma once

#include <filesystem>

#include "mmf/core/conv.hpp"
#include "mmf/io/binfile.hpp"

namespace mmf {

// Pluggable source of the noiseprint residual modality. Three providers:
//
//   Precomputed — per-image raster files under a store root, keyed by the
//     image's manifest-relative path with ".npr" appended.
//   Network — a stack of 3x3 conv layers (ReLU between, replicate padding)
//     imported from a tensor-map file with entries layer<k>.weight /
//     layer<k>.bias; hosts externally converted pretrained extractors.
//   Proxy — a fixed zero-sum Laplacian kernel per channel; a stand-in that
//     keeps the pipeline runnable without external weights. Reports label it
//     "proxy".
//
// Every provider yields a 3-channel residual with the input's spatial dims;
// single-channel sources are replicated across the 3 channels.
template <typename T>
class NoisePrintProvider {
  public:
    enum class Kind { Proxy, Precomputed, Network };

    static NoisePrintProvider proxy() {
        NoisePrintProvider p;
        p.kind_ = Kind::Proxy;
        return p;
    }

    static NoisePrintProvider precomputed(const std::string& store_root) {
        NoisePrintProvider p;
        p.kind_ = Kind::Precomputed;
        p.store_root_ = store_root;
        if (!std::filesystem::is_directory(store_root))
            throw std::runtime_error("noiseprint: residual store not found: " + store_root);
        return p;
    }

    static NoisePrintProvider network(const std::string& weights_path) {
        NoisePrintProvider p;
        p.kind_ = Kind::Network;
        std::ifstream is(weights_path, std::ios::binary);
        if (!is) throw std::runtime_error("noiseprint: weights file not found: " + weights_path);
        auto tensors = read_tensor_map<T>(is, "noiseprint weights");
        for (int layer = 0;; ++layer) {
            auto wit = tensors.find("layer" + std::to_string(layer) + ".weight");
            if (wit == tensors.end()) break;
            auto bit = tensors.find("layer" + std::to_string(layer) + ".bias");
            p.net_weights_.push_back(wit->second);
            p.net_biases_.push_back(bit == tensors.end() ? Tensor<T>() : bit->second);
        }
        if (p.net_weights_.empty())
            throw std::runtime_error("noiseprint: no layer0.weight in " + weights_path);
        return p;
    }

    Kind kind() const { return kind_; }
    const char* kind_name() const {
        switch (kind_) {
            case Kind::Proxy: return "proxy";
            case Kind::Precomputed: return "precomputed";
            default: return "network";
        }
    }

    // image01: (1,3,H,W) in [0,1]; key: manifest-relative path of the image
    Tensor<T> extract(const Tensor<T>& image01, const std::string& key) const {
        const Shape4 s = image01.shape;
        if (s.c != 3)
            throw std::invalid_argument("noiseprint_extract: expected 3 channels, got " + s.str());
        Tensor<T> res;
        switch (kind_) {
            case Kind::Proxy: res = proxy_residual(image01); break;
            case Kind::Precomputed: res = lookup(key, s); break;
            case Kind::Network: res = run_network(image01); break;
        }
        return replicate3(res);
    }

    static std::string store_key(const std::string& relative_image_path) {
        return relative_image_path + ".npr";
    }

  private:
    Tensor<T> proxy_residual(const Tensor<T>& image01) const {
        // Laplacian cross, zero-sum, applied per channel on the 0..255 scale
        // and truncated like the other residual sources.
        Tensor<T> k(Shape4(1, 1, 3, 3));
        const double taps[9] = {0, -1, 0, -1, 4, -1, 0, -1, 0};
        for (int i = 0; i < 9; ++i) k[i] = T(taps[i] / 4.0);
        const Shape4 s = image01.shape;
        Tensor<T> out(s);
        Tensor<T> ch(Shape4(s.n, 1, s.h, s.w));
        for (int c = 0; c < 3; ++c) {
            for (int n = 0; n < s.n; ++n)
                for (int h = 0; h < s.h; ++h)
                    for (int w = 0; w < s.w; ++w) ch.at(n, 0, h, w) = T(255) * image01.at(n, c, h, w);
            Tensor<T> resp = conv2d_plain_edge(ch, k);
            for (int n = 0; n < s.n; ++n)
                for (int h = 0; h < s.h; ++h)
                    for (int w = 0; w < s.w; ++w)
                        out.at(n, c, h, w) = std::clamp(resp.at(n, 0, h, w), T(-2), T(2));
        }
        return out;
    }

    Tensor<T> lookup(const std::string& key, const Shape4& expect) const {
        if (key.empty())
            throw std::runtime_error("noiseprint_extract: precomputed provider needs an image key");
        std::filesystem::path p = std::filesystem::path(store_root_) / store_key(key);
        if (!std::filesystem::exists(p))
            throw std::runtime_error("noiseprint_extract: no precomputed residual for image '" + key +
                                     "' (looked for " + p.string() + ")");
        Tensor<T> r = read_raster<T>(p.string());
        if (r.shape.h != expect.h || r.shape.w != expect.w)
            throw std::runtime_error("noiseprint_extract: stored residual dims " + r.shape.str() +
                                     " do not match image dims " + expect.str() + " for '" + key + "'");
        return r;
    }

    Tensor<T> run_network(const Tensor<T>& image01) const {
        Tensor<T> x = image01;
        for (std::size_t layer = 0; layer < net_weights_.size(); ++layer) {
            x = conv2d_plain_edge(x, net_weights_[layer]);
            const Tensor<T>& b = net_biases_[layer];
            if (b.size() > 1 || (b.size() == 1 && b.shape.c == x.shape.c)) {
                for (int n = 0; n < x.shape.n; ++n)
                    for (int c = 0; c < x.shape.c; ++c)
                        for (int h = 0; h < x.shape.h; ++h)
                            for (int w = 0; w < x.shape.w; ++w) x.at(n, c, h, w) += b[c];
            }
            if (layer + 1 < net_weights_.size())
                for (T& v : x.v) v = v > T(0) ? v : T(0);
        }
        return x;
    }

    Tensor<T> replicate3(const Tensor<T>& r) const {
        if (r.shape.c == 3) return r;
        if (r.shape.c != 1)
            throw std::runtime_error("noiseprint_extract: provider returned " +
                                     std::to_string(r.shape.c) + " channels (expected 1 or 3)");
        Tensor<T> out(Shape4(r.shape.n, 3, r.shape.h, r.shape.w));
        for (int n = 0; n < r.shape.n; ++n)
            for (int c = 0; c < 3; ++c)
                for (int h = 0; h < r.shape.h; ++h)
                    for (int w = 0; w < r.shape.w; ++w) out.at(n, c, h, w) = r.at(n, 0, h, w);
        return out;
    }

    Kind kind_ = Kind::Proxy;
    std::string store_root_;
    std::vector<Tensor<T>> net_weights_, net_biases_;
};

}  // namespace mmf
