#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "mmf/core/tensor.hpp"

// Little-endian binary containers used across the repo:
//
//   raster file (.npr): "MMFR" u32 version=1, u32 channels, u32 height,
//     u32 width, then channels*height*width float32 values, channel-major.
//     Used for precomputed per-image residual maps.
//
//   tensor map: "MMFT" u32 version=1, u32 count, then per entry: u32 name
//     length, name bytes, u8 flags, i32 n,c,h,w, then numel float64 values.
//     Values are stored in float64 so float32 models round-trip bit-exactly.
//     Used inside model checkpoints and importable weight files.

namespace mmf {

namespace detail {

template <typename U>
void write_pod(std::ostream& os, const U& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U read_pod(std::istream& is, const char* what) {
    U v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(U)))
        throw std::runtime_error(std::string("binfile: truncated while reading ") + what);
    return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// raster files
// ---------------------------------------------------------------------------

template <typename T>
void write_raster(const std::string& path, const Tensor<T>& t) {
    if (t.shape.n != 1) throw std::invalid_argument("write_raster: batch must be 1");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_raster: cannot open " + path);
    os.write("MMFR", 4);
    detail::write_pod<std::uint32_t>(os, 1);
    detail::write_pod<std::uint32_t>(os, std::uint32_t(t.shape.c));
    detail::write_pod<std::uint32_t>(os, std::uint32_t(t.shape.h));
    detail::write_pod<std::uint32_t>(os, std::uint32_t(t.shape.w));
    for (const T& v : t.v) detail::write_pod<float>(os, float(v));
}

template <typename T>
Tensor<T> read_raster(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_raster: cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "MMFR", 4) != 0)
        throw std::runtime_error("read_raster: " + path + " is not a raster file");
    auto version = detail::read_pod<std::uint32_t>(is, "version");
    if (version != 1) throw std::runtime_error("read_raster: unsupported version");
    auto c = detail::read_pod<std::uint32_t>(is, "channels");
    auto h = detail::read_pod<std::uint32_t>(is, "height");
    auto w = detail::read_pod<std::uint32_t>(is, "width");
    if (c == 0 || h == 0 || w == 0 || c > 16)
        throw std::runtime_error("read_raster: implausible dims in " + path);
    Tensor<T> t(Shape4(1, int(c), int(h), int(w)));
    for (T& v : t.v) v = T(detail::read_pod<float>(is, "data"));
    return t;
}

// ---------------------------------------------------------------------------
// tensor maps
// ---------------------------------------------------------------------------

template <typename T>
void write_tensor_map(std::ostream& os, const std::map<std::string, Tensor<T>>& tensors) {
    os.write("MMFT", 4);
    detail::write_pod<std::uint32_t>(os, 1);
    detail::write_pod<std::uint32_t>(os, std::uint32_t(tensors.size()));
    for (const auto& [name, t] : tensors) {
        detail::write_pod<std::uint32_t>(os, std::uint32_t(name.size()));
        os.write(name.data(), std::streamsize(name.size()));
        detail::write_pod<std::uint8_t>(os, 0);
        detail::write_pod<std::int32_t>(os, t.shape.n);
        detail::write_pod<std::int32_t>(os, t.shape.c);
        detail::write_pod<std::int32_t>(os, t.shape.h);
        detail::write_pod<std::int32_t>(os, t.shape.w);
        for (const T& v : t.v) detail::write_pod<double>(os, double(v));
    }
}

template <typename T>
std::map<std::string, Tensor<T>> read_tensor_map(std::istream& is, const std::string& what) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "MMFT", 4) != 0)
        throw std::runtime_error(what + ": missing tensor map header");
    auto version = detail::read_pod<std::uint32_t>(is, "version");
    if (version != 1) throw std::runtime_error(what + ": unsupported tensor map version");
    auto count = detail::read_pod<std::uint32_t>(is, "count");
    std::map<std::string, Tensor<T>> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        auto len = detail::read_pod<std::uint32_t>(is, "name length");
        std::string name(len, '\0');
        if (!is.read(name.data(), len)) throw std::runtime_error(what + ": truncated name");
        detail::read_pod<std::uint8_t>(is, "flags");
        int n = detail::read_pod<std::int32_t>(is, "n");
        int c = detail::read_pod<std::int32_t>(is, "c");
        int h = detail::read_pod<std::int32_t>(is, "h");
        int w = detail::read_pod<std::int32_t>(is, "w");
        Tensor<T> t(Shape4(n, c, h, w));
        for (T& v : t.v) v = T(detail::read_pod<double>(is, "data"));
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

}  // namespace mmf
