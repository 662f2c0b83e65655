#pragma once

#include <fstream>
#include <sstream>

#include "mmf/core/conv.hpp"

namespace mmf {

// Clamp every value to [-t, t]. Idempotent.
template <typename T>
Tensor<T> truncate(const Tensor<T>& x, double t) {
    if (t <= 0) throw std::invalid_argument("truncate: threshold must be > 0, got " + std::to_string(t));
    Tensor<T> out = x;
    for (T& v : out.v) v = std::clamp(v, T(-t), T(t));
    return out;
}

// A small bank of fixed zero-sum high-pass kernels with per-kernel divisors,
// loaded from the repo data file so the taps stay auditable.
struct SrmKernel {
    std::string name;
    int size = 0;
    double divisor = 1.0;
    std::vector<double> taps;  // size x size, row-major
};

class SrmFilterBank {
  public:
    std::vector<SrmKernel> kernels;
    double truncation_threshold = 2.0;  // residual units
    int version = 0;

    static SrmFilterBank load(const std::string& path, double truncation = 2.0) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("srm kernel file not found: " + path);
        if (truncation <= 0) throw std::invalid_argument("srm truncation threshold must be > 0");
        SrmFilterBank bank;
        bank.truncation_threshold = truncation;
        std::string tok;
        int expected = 0;
        while (in >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(in, rest);
                continue;
            }
            if (tok == "version") {
                in >> bank.version;
            } else if (tok == "kernels") {
                in >> expected;
            } else if (tok == "kernel") {
                SrmKernel k;
                in >> k.name;
                in >> tok >> k.divisor;          // "divisor"
                in >> tok >> k.size;             // "size"
                if (k.size < 3 || k.size % 2 == 0)
                    throw std::runtime_error("srm kernel " + k.name + ": size must be odd >= 3");
                k.taps.resize(std::size_t(k.size) * k.size);
                for (double& v : k.taps)
                    if (!(in >> v)) throw std::runtime_error("srm kernel " + k.name + ": truncated taps");
                bank.kernels.push_back(std::move(k));
            } else {
                throw std::runtime_error("srm kernel file: unexpected token '" + tok + "'");
            }
        }
        if (int(bank.kernels.size()) != expected || expected == 0)
            throw std::runtime_error("srm kernel file: expected " + std::to_string(expected) +
                                     " kernels, found " + std::to_string(bank.kernels.size()));
        bank.check();
        return bank;
    }

    void check() const {
        for (const auto& k : kernels) {
            double sum = 0;
            for (double v : k.taps) sum += v;
            if (std::abs(sum) > 1e-9)
                throw std::runtime_error("srm kernel " + k.name + ": taps sum to " +
                                         std::to_string(sum) + ", expected 0");
            if (k.divisor <= 0) throw std::runtime_error("srm kernel " + k.name + ": bad divisor");
        }
        if (truncation_threshold <= 0) throw std::runtime_error("srm truncation threshold must be > 0");
    }

    // Residual of a 3-channel image with values in [0,1]. Kernel k is applied
    // to channel k on the 0..255 scale (stride 1, replicate padding), scaled
    // by 1/divisor and clamped to [-t, t]; output keeps the input dims.
    template <typename T>
    Tensor<T> residual(const Tensor<T>& image01) const {
        const Shape4 s = image01.shape;
        if (s.c != 3)
            throw std::invalid_argument("srm_residual: expected 3-channel image, got " + s.str());
        if (kernels.size() != 3) throw std::runtime_error("srm_residual: bank must hold 3 kernels");
        Tensor<T> out(s);
        for (int k = 0; k < 3; ++k) {
            const SrmKernel& ker = kernels[k];
            Tensor<T> w(Shape4(1, 1, ker.size, ker.size));
            for (std::size_t i = 0; i < ker.taps.size(); ++i)
                w[i] = T(ker.taps[i] / ker.divisor);
            // channel k, scaled to 0..255
            Tensor<T> ch(Shape4(s.n, 1, s.h, s.w));
            for (int n = 0; n < s.n; ++n)
                for (int h = 0; h < s.h; ++h)
                    for (int wd = 0; wd < s.w; ++wd) ch.at(n, 0, h, wd) = T(255) * image01.at(n, k, h, wd);
            Tensor<T> resp = conv2d_plain_edge(ch, w);
            for (int n = 0; n < s.n; ++n)
                for (int h = 0; h < s.h; ++h)
                    for (int wd = 0; wd < s.w; ++wd)
                        out.at(n, k, h, wd) = std::clamp(resp.at(n, 0, h, wd),
                                                         T(-truncation_threshold),
                                                         T(truncation_threshold));
        }
        return out;
    }
};

}  // namespace mmf
