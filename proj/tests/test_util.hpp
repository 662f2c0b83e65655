#pragma once

#include <filesystem>
#include <string>

#include "mmf/core/rng.hpp"
#include "mmf/core/tensor.hpp"

namespace mmf_test {

inline std::string srm_kernel_path() {
    return std::string(MMF_SOURCE_DIR) + "/data/srm_kernels.txt";
}

inline std::string fresh_dir(const std::string& tag) {
    static int counter = 0;
    auto p = std::filesystem::temp_directory_path() /
             ("mmf_test_" + tag + "_" + std::to_string(counter++));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

template <typename T>
mmf::Tensor<T> randn(mmf::Shape4 s, mmf::Rng& rng, double stddev = 1.0) {
    mmf::Tensor<T> t(s);
    for (T& v : t.v) v = T(rng.normal(0.0, stddev));
    return t;
}

template <typename T>
mmf::Tensor<T> rand01(mmf::Shape4 s, mmf::Rng& rng) {
    mmf::Tensor<T> t(s);
    for (T& v : t.v) v = T(rng.uniform());
    return t;
}

}  // namespace mmf_test
