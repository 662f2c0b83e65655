#pragma once

#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <jpeglib.h>
#include <png.h>
#include <zlib.h>

#include "mmf/core/tensor.hpp"

namespace mmf {

// Interleaved 8-bit raster, 1 or 3 channels.
struct ImageU8 {
    int width = 0, height = 0, channels = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t& at(int y, int x, int c) {
        return pixels[(std::size_t(y) * width + x) * channels + c];
    }
    std::uint8_t at(int y, int x, int c) const {
        return pixels[(std::size_t(y) * width + x) * channels + c];
    }
};

inline std::string codec_versions() {
    return std::string("libpng ") + png_get_libpng_ver(nullptr) + ", libjpeg " +
           std::to_string(JPEG_LIB_VERSION) + ", zlib " + zlibVersion();
}

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

namespace detail {

struct PngReadCloser {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngReadCloser() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

struct PngWriteCloser {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngWriteCloser() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

}  // namespace detail

inline ImageU8 load_png(const std::string& path) {
    detail::PngReadCloser h;
    h.fp = std::fopen(path.c_str(), "rb");
    if (!h.fp) throw std::runtime_error("png: cannot open " + path);
    h.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    h.info = png_create_info_struct(h.png);
    if (!h.png || !h.info) throw std::runtime_error("png: allocation failure");
    if (setjmp(png_jmpbuf(h.png))) throw std::runtime_error("png: decode error in " + path);
    png_init_io(h.png, h.fp);
    png_read_info(h.png, h.info);

    png_set_palette_to_rgb(h.png);
    png_set_expand_gray_1_2_4_to_8(h.png);
    png_set_strip_16(h.png);
    png_set_strip_alpha(h.png);
    png_read_update_info(h.png, h.info);

    ImageU8 img;
    img.width = int(png_get_image_width(h.png, h.info));
    img.height = int(png_get_image_height(h.png, h.info));
    img.channels = int(png_get_channels(h.png, h.info));
    if (img.channels != 1 && img.channels != 3)
        throw std::runtime_error("png: unsupported channel count " + std::to_string(img.channels) +
                                 " in " + path);
    img.pixels.resize(std::size_t(img.width) * img.height * img.channels);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = img.pixels.data() + std::size_t(y) * img.width * img.channels;
    png_read_image(h.png, rows.data());
    return img;
}

inline void save_png(const std::string& path, const ImageU8& img) {
    detail::PngWriteCloser h;
    h.fp = std::fopen(path.c_str(), "wb");
    if (!h.fp) throw std::runtime_error("png: cannot open for write " + path);
    h.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    h.info = png_create_info_struct(h.png);
    if (!h.png || !h.info) throw std::runtime_error("png: allocation failure");
    if (setjmp(png_jmpbuf(h.png))) throw std::runtime_error("png: encode error for " + path);
    png_init_io(h.png, h.fp);
    png_set_IHDR(h.png, h.info, png_uint_32(img.width), png_uint_32(img.height), 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(h.png, h.info);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = const_cast<png_bytep>(img.pixels.data() + std::size_t(y) * img.width * img.channels);
    png_write_image(h.png, rows.data());
    png_write_end(h.png, nullptr);
}

// ---------------------------------------------------------------------------
// JPEG (file and in-memory; in-memory is the augmentation/robustness path)
// ---------------------------------------------------------------------------

namespace detail {

struct JpegErr {
    jpeg_error_mgr mgr;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX] = {0};
};

inline void jpeg_error_trap(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErr*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

}  // namespace detail

inline ImageU8 decode_jpeg(const std::uint8_t* data, std::size_t size, const std::string& what) {
    jpeg_decompress_struct cinfo;
    detail::JpegErr err;
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = detail::jpeg_error_trap;
    jpeg_create_decompress(&cinfo);
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw std::runtime_error("jpeg: " + what + ": " + err.message);
    }
    jpeg_mem_src(&cinfo, const_cast<unsigned char*>(data), static_cast<unsigned long>(size));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&cinfo);
    ImageU8 img;
    img.width = int(cinfo.output_width);
    img.height = int(cinfo.output_height);
    img.channels = int(cinfo.output_components);
    img.pixels.resize(std::size_t(img.width) * img.height * img.channels);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = img.pixels.data() + std::size_t(cinfo.output_scanline) * img.width * img.channels;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return img;
}

inline ImageU8 load_jpeg(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("jpeg: cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return decode_jpeg(bytes.data(), bytes.size(), path);
}

inline std::vector<std::uint8_t> encode_jpeg(const ImageU8& img, int quality) {
    if (quality < 1 || quality > 100) throw std::invalid_argument("jpeg: quality must be in [1,100]");
    jpeg_compress_struct cinfo;
    detail::JpegErr err;
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = detail::jpeg_error_trap;
    jpeg_create_compress(&cinfo);
    unsigned char* buf = nullptr;
    unsigned long buf_size = 0;
    if (setjmp(err.jump)) {
        jpeg_destroy_compress(&cinfo);
        if (buf) free(buf);
        throw std::runtime_error(std::string("jpeg: encode: ") + err.message);
    }
    jpeg_mem_dest(&cinfo, &buf, &buf_size);
    cinfo.image_width = JDIMENSION(img.width);
    cinfo.image_height = JDIMENSION(img.height);
    cinfo.input_components = img.channels;
    cinfo.in_color_space = img.channels == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW row = const_cast<JSAMPROW>(img.pixels.data() +
                                            std::size_t(cinfo.next_scanline) * img.width * img.channels);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    std::vector<std::uint8_t> out(buf, buf + buf_size);
    jpeg_destroy_compress(&cinfo);
    free(buf);
    return out;
}

inline void save_jpeg(const std::string& path, const ImageU8& img, int quality) {
    auto bytes = encode_jpeg(img, quality);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("jpeg: cannot open for write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

// decode(encode(img, qf)): the JPEG degradation primitive
inline ImageU8 jpeg_roundtrip(const ImageU8& img, int quality) {
    auto bytes = encode_jpeg(img, quality);
    return decode_jpeg(bytes.data(), bytes.size(), "roundtrip");
}

// ---------------------------------------------------------------------------
// PPM / PGM (binary)
// ---------------------------------------------------------------------------

inline ImageU8 load_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("pnm: cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5" && magic != "P6") throw std::runtime_error("pnm: unsupported magic in " + path);
    auto next_int = [&in, &path]() {
        int v;
        for (;;) {
            in >> std::ws;
            if (in.peek() == '#') {
                std::string line;
                std::getline(in, line);
                continue;
            }
            if (!(in >> v)) throw std::runtime_error("pnm: malformed header in " + path);
            return v;
        }
    };
    ImageU8 img;
    img.width = next_int();
    img.height = next_int();
    int maxval = next_int();
    if (maxval != 255) throw std::runtime_error("pnm: only 8-bit supported in " + path);
    img.channels = magic == "P6" ? 3 : 1;
    in.get();
    img.pixels.resize(std::size_t(img.width) * img.height * img.channels);
    if (!in.read(reinterpret_cast<char*>(img.pixels.data()), std::streamsize(img.pixels.size())))
        throw std::runtime_error("pnm: truncated data in " + path);
    return img;
}

inline void save_pnm(const std::string& path, const ImageU8& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("pnm: cannot open for write " + path);
    out << (img.channels == 3 ? "P6" : "P5") << "\n"
        << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()), std::streamsize(img.pixels.size()));
}

// ---------------------------------------------------------------------------
// TIFF: baseline 8-bit gray/RGB, uncompressed or PackBits, chunky planar
// ---------------------------------------------------------------------------

inline ImageU8 load_tiff(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("tiff: cannot open " + path);
    std::vector<std::uint8_t> b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (b.size() < 8) throw std::runtime_error("tiff: truncated header in " + path);
    bool le;
    if (b[0] == 'I' && b[1] == 'I') le = true;
    else if (b[0] == 'M' && b[1] == 'M') le = false;
    else throw std::runtime_error("tiff: bad byte-order mark in " + path);
    auto u16 = [&](std::size_t off) -> std::uint32_t {
        if (off + 2 > b.size()) throw std::runtime_error("tiff: truncated in " + path);
        return le ? b[off] | (b[off + 1] << 8) : (b[off] << 8) | b[off + 1];
    };
    auto u32 = [&](std::size_t off) -> std::uint32_t {
        if (off + 4 > b.size()) throw std::runtime_error("tiff: truncated in " + path);
        return le ? b[off] | (b[off + 1] << 8) | (b[off + 2] << 16) | (std::uint32_t(b[off + 3]) << 24)
                  : (std::uint32_t(b[off]) << 24) | (b[off + 1] << 16) | (b[off + 2] << 8) | b[off + 3];
    };
    if (u16(2) != 42) throw std::runtime_error("tiff: bad magic in " + path);
    std::size_t ifd = u32(4);
    std::uint32_t width = 0, height = 0, bits = 8, compression = 1, spp = 1, rows_per_strip = 0;
    std::uint32_t planar = 1;
    std::vector<std::uint32_t> strip_offsets, strip_counts;
    const std::uint32_t nent = u16(ifd);
    auto read_values = [&](std::size_t entry, std::vector<std::uint32_t>& out) {
        std::uint32_t type = u16(entry + 2), count = u32(entry + 4);
        std::uint32_t size = type == 3 ? 2 : 4;
        std::size_t off = (count * size <= 4) ? entry + 8 : u32(entry + 8);
        for (std::uint32_t i = 0; i < count; ++i)
            out.push_back(size == 2 ? u16(off + 2 * i) : u32(off + 4 * i));
    };
    auto first_value = [&](std::size_t entry) {
        std::vector<std::uint32_t> v;
        read_values(entry, v);
        return v.empty() ? 0u : v[0];
    };
    for (std::uint32_t e = 0; e < nent; ++e) {
        std::size_t entry = ifd + 2 + std::size_t(e) * 12;
        switch (u16(entry)) {
            case 256: width = first_value(entry); break;
            case 257: height = first_value(entry); break;
            case 258: bits = first_value(entry); break;
            case 259: compression = first_value(entry); break;
            case 273: read_values(entry, strip_offsets); break;
            case 277: spp = first_value(entry); break;
            case 278: rows_per_strip = first_value(entry); break;
            case 279: read_values(entry, strip_counts); break;
            case 284: planar = first_value(entry); break;
        }
    }
    if (width == 0 || height == 0 || strip_offsets.empty())
        throw std::runtime_error("tiff: missing required tags in " + path);
    if (bits != 8 || (spp != 1 && spp != 3) || planar != 1)
        throw std::runtime_error("tiff: only 8-bit gray/RGB chunky supported (" + path + ")");
    if (compression != 1 && compression != 32773)
        throw std::runtime_error("tiff: unsupported compression " + std::to_string(compression) +
                                 " in " + path + " (only none/PackBits)");
    if (rows_per_strip == 0) rows_per_strip = height;

    ImageU8 img;
    img.width = int(width);
    img.height = int(height);
    img.channels = int(spp);
    img.pixels.resize(std::size_t(width) * height * spp);
    std::size_t out_pos = 0;
    for (std::size_t si = 0; si < strip_offsets.size(); ++si) {
        std::size_t off = strip_offsets[si];
        std::size_t cnt = si < strip_counts.size() ? strip_counts[si] : 0;
        if (off + cnt > b.size()) throw std::runtime_error("tiff: strip out of bounds in " + path);
        if (compression == 1) {
            for (std::size_t i = 0; i < cnt && out_pos < img.pixels.size(); ++i)
                img.pixels[out_pos++] = b[off + i];
        } else {  // PackBits
            std::size_t i = 0;
            while (i < cnt && out_pos < img.pixels.size()) {
                std::int8_t n = std::int8_t(b[off + i++]);
                if (n >= 0) {
                    for (int k = 0; k <= n && i < cnt && out_pos < img.pixels.size(); ++k)
                        img.pixels[out_pos++] = b[off + i++];
                } else if (n != -128) {
                    if (i >= cnt) break;
                    std::uint8_t v = b[off + i++];
                    for (int k = 0; k < 1 - n && out_pos < img.pixels.size(); ++k)
                        img.pixels[out_pos++] = v;
                }
            }
        }
    }
    if (out_pos != img.pixels.size())
        throw std::runtime_error("tiff: decoded " + std::to_string(out_pos) + " of " +
                                 std::to_string(img.pixels.size()) + " bytes in " + path);
    return img;
}

// ---------------------------------------------------------------------------
// dispatch + tensor conversion
// ---------------------------------------------------------------------------

inline ImageU8 load_image(const std::string& path) {
    std::string ext = std::filesystem::path(path).extension().string();
    for (char& c : ext) c = char(std::tolower(c));
    try {
        if (ext == ".png") return load_png(path);
        if (ext == ".jpg" || ext == ".jpeg") return load_jpeg(path);
        if (ext == ".ppm" || ext == ".pgm") return load_pnm(path);
        if (ext == ".tif" || ext == ".tiff") return load_tiff(path);
    } catch (const std::exception& e) {
        throw std::runtime_error("cannot decode " + path + ": " + e.what());
    }
    throw std::runtime_error("cannot decode " + path + ": unsupported extension '" + ext +
                             "' (png/jpeg/ppm/pgm/tiff)");
}

// channels-first [0,1] tensor; grayscale is replicated to 3 channels
template <typename T>
Tensor<T> to_tensor01(const ImageU8& img, bool force_rgb = true) {
    int out_c = force_rgb ? 3 : img.channels;
    Tensor<T> t(Shape4(1, out_c, img.height, img.width));
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < out_c; ++c) {
                int src_c = img.channels == 1 ? 0 : c;
                t.at(0, c, y, x) = T(img.at(y, x, src_c)) / T(255);
            }
    return t;
}

template <typename T>
ImageU8 from_tensor01(const Tensor<T>& t) {
    if (t.shape.n != 1 || (t.shape.c != 1 && t.shape.c != 3))
        throw std::invalid_argument("from_tensor01: need (1,1|3,H,W), got " + t.shape.str());
    ImageU8 img;
    img.width = t.shape.w;
    img.height = t.shape.h;
    img.channels = t.shape.c;
    img.pixels.resize(std::size_t(img.width) * img.height * img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double v = std::clamp(double(t.at(0, c, y, x)), 0.0, 1.0);
                img.at(y, x, c) = std::uint8_t(std::lround(v * 255.0));
            }
    return img;
}

}  // namespace mmf
