#pragma once

#include "mmf/filters/noiseprint.hpp"
#include "mmf/filters/srm.hpp"
#include "mmf/train/config.hpp"

namespace mmf {

// The two fixed residual sources, configured once per run. The Bayar residual
// lives inside the network (its taps are parameters).
template <typename T>
struct ResidualSources {
    SrmFilterBank srm_bank;
    NoisePrintProvider<T> noiseprint;

    static ResidualSources from_config(const FiltersConfig& cfg) {
        ResidualSources out;
        out.srm_bank = SrmFilterBank::load(cfg.srm_kernels, cfg.srm_truncation);
        if (cfg.noiseprint_provider == "proxy")
            out.noiseprint = NoisePrintProvider<T>::proxy();
        else if (cfg.noiseprint_provider == "precomputed")
            out.noiseprint = NoisePrintProvider<T>::precomputed(cfg.noiseprint_store);
        else if (cfg.noiseprint_provider == "network")
            out.noiseprint = NoisePrintProvider<T>::network(cfg.noiseprint_store);
        else
            throw std::invalid_argument("filters: unknown noiseprint provider '" +
                                        cfg.noiseprint_provider +
                                        "' (expected proxy|precomputed|network)");
        return out;
    }

    Tensor<T> srm(const Tensor<T>& image01) const { return srm_bank.residual(image01); }
    Tensor<T> np(const Tensor<T>& image01, const std::string& key) const {
        return noiseprint.extract(image01, key);
    }
};

}  // namespace mmf
