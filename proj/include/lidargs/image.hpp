// Copyright Contributors to the lidargs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lidargs/common.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace lidargs {

/// Dense row-major image. at(x, y) addresses column x of row y; row 0 is the top.
template <class T>
struct Image {
    int width = 0;
    int height = 0;
    std::vector<T> data;

    Image() = default;
    Image(int w, int h, const T& fill = T{}) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    T& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    const T& at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    bool same_shape(int w, int h) const { return width == w && height == h; }
    template <class U>
    bool same_shape(const Image<U>& o) const {
        return width == o.width && height == o.height;
    }
};

using GrayImage = Image<double>;
using RgbImage = Image<Vec3>;
using Mask = Image<std::uint8_t>;

inline double luminance(const Vec3& c) { return 0.299 * c.x() + 0.587 * c.y() + 0.114 * c.z(); }

inline GrayImage to_luminance(const RgbImage& img) {
    GrayImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.size(); ++i) out.data[i] = luminance(img.data[i]);
    return out;
}

namespace detail {

inline void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::kIo, "cannot write file: " + path.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

inline std::string pfm_header(char kind, int w, int h) {
    return std::string("P") + kind + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n-1.0\n";
}

inline void append_f32(std::string& out, double v) {
    const float f = static_cast<float>(v);
    char buf[4];
    std::memcpy(buf, &f, 4);
    out.append(buf, 4);
}

}  // namespace detail

/// Single-channel PFM, little-endian (scale -1.0), rows stored bottom-up.
inline void write_pfm(const std::filesystem::path& path, const GrayImage& img) {
    std::string out = detail::pfm_header('f', img.width, img.height);
    for (int y = img.height - 1; y >= 0; --y)
        for (int x = 0; x < img.width; ++x) detail::append_f32(out, img.at(x, y));
    detail::write_bytes(path, out);
}

inline void write_pfm(const std::filesystem::path& path, const RgbImage& img) {
    std::string out = detail::pfm_header('F', img.width, img.height);
    for (int y = img.height - 1; y >= 0; --y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) detail::append_f32(out, img.at(x, y)[c]);
    detail::write_bytes(path, out);
}

struct PfmData {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> values;  // top-down, interleaved
};

inline PfmData read_pfm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot open file: " + path.string());
    std::string magic;
    PfmData d;
    double scale = 0.0;
    in >> magic >> d.width >> d.height >> scale;
    if (!in || (magic != "Pf" && magic != "PF") || d.width <= 0 || d.height <= 0)
        throw Error(ErrorCode::kParse, path.string() + ": malformed PFM header");
    if (scale >= 0.0) throw Error(ErrorCode::kParse, path.string() + ": big-endian PFM is not supported");
    in.get();
    d.channels = magic == "PF" ? 3 : 1;
    const std::size_t row = static_cast<std::size_t>(d.width) * d.channels;
    std::vector<float> raw(row * d.height);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
    if (!in) throw Error(ErrorCode::kParse, path.string() + ": truncated PFM data");
    d.values.resize(raw.size());
    for (int y = 0; y < d.height; ++y)
        std::memcpy(&d.values[static_cast<std::size_t>(y) * row], &raw[static_cast<std::size_t>(d.height - 1 - y) * row],
                    row * sizeof(float));
    return d;
}

inline GrayImage read_pfm_gray(const std::filesystem::path& path) {
    const PfmData d = read_pfm(path);
    require(d.channels == 1, ErrorCode::kParse, path.string() + ": expected a single-channel PFM");
    GrayImage img(d.width, d.height);
    for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = d.values[i];
    return img;
}

inline RgbImage read_pfm_rgb(const std::filesystem::path& path) {
    const PfmData d = read_pfm(path);
    RgbImage img(d.width, d.height);
    for (std::size_t i = 0; i < img.size(); ++i) {
        if (d.channels == 3) {
            img.data[i] = Vec3(d.values[3 * i], d.values[3 * i + 1], d.values[3 * i + 2]);
        } else {
            img.data[i] = Vec3::Constant(d.values[i]);
        }
    }
    return img;
}

namespace detail {

struct PngFile {
    std::FILE* fp = nullptr;
    ~PngFile() {
        if (fp) std::fclose(fp);
    }
};

inline void write_png_bytes(const std::filesystem::path& path, int w, int h, int channels,
                            const std::vector<std::uint8_t>& pixels) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    PngFile file{std::fopen(path.c_str(), "wb")};
    if (!file.fp) throw Error(ErrorCode::kIo, "cannot write file: " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorCode::kIo, "libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorCode::kIo, "PNG encoding failed: " + path.string());
    }
    png_init_io(png, file.fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < h; ++y)
        png_write_row(png, const_cast<png_bytep>(&pixels[static_cast<std::size_t>(y) * w * channels]));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline std::uint8_t to_u8(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace detail

inline void write_png(const std::filesystem::path& path, const RgbImage& img) {
    std::vector<std::uint8_t> px(img.size() * 3);
    for (std::size_t i = 0; i < img.size(); ++i)
        for (int c = 0; c < 3; ++c) px[3 * i + c] = detail::to_u8(img.data[i][c]);
    detail::write_png_bytes(path, img.width, img.height, 3, px);
}

/// Grayscale PNG of values in [0, 1].
inline void write_png(const std::filesystem::path& path, const GrayImage& img) {
    std::vector<std::uint8_t> px(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) px[i] = detail::to_u8(img.data[i]);
    detail::write_png_bytes(path, img.width, img.height, 1, px);
}

/// Validity mask as 0/255 grayscale PNG.
inline void write_png(const std::filesystem::path& path, const Mask& mask) {
    std::vector<std::uint8_t> px(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) px[i] = mask.data[i] ? 255 : 0;
    detail::write_png_bytes(path, mask.width, mask.height, 1, px);
}

/// Decodes any PNG to 8-bit RGB in [0, 1].
inline RgbImage read_png_rgb(const std::filesystem::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw Error(ErrorCode::kParse, path.string() + ": " + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> px(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, px.data(), 0, nullptr)) {
        png_image_free(&image);
        throw Error(ErrorCode::kParse, path.string() + ": " + image.message);
    }
    RgbImage img(static_cast<int>(image.width), static_cast<int>(image.height));
    for (std::size_t i = 0; i < img.size(); ++i)
        img.data[i] = Vec3(px[3 * i], px[3 * i + 1], px[3 * i + 2]) / 255.0;
    return img;
}

/// PNG or PFM by extension.
inline RgbImage read_rgb(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".pfm" || ext == ".PFM") return read_pfm_rgb(path);
    if (ext == ".png" || ext == ".PNG") return read_png_rgb(path);
    throw Error(ErrorCode::kInvalidArgument, "unsupported image format: " + path.string());
}

}  // namespace lidargs
