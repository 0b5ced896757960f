#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sraseg/core.hpp"

namespace sraseg {

// Raster I/O for binary PGM (P5, single channel) and PPM (P6, three channel)
// with 8- or 16-bit samples. Masks are stored as P5 with raw class indices.

namespace detail {

inline int next_pnm_token(std::istream& in) {
    // skips whitespace and '#' comments, returns a non-negative integer
    for (;;) {
        int ch = in.peek();
        if (ch == EOF) throw std::runtime_error("pnm: truncated header");
        if (std::isspace(ch)) {
            in.get();
        } else if (ch == '#') {
            std::string junk;
            std::getline(in, junk);
        } else {
            break;
        }
    }
    int value = 0;
    if (!(in >> value) || value < 0) throw std::runtime_error("pnm: bad header value");
    return value;
}

struct RawRaster {
    int channels = 0, height = 0, width = 0, maxval = 0;
    std::vector<std::uint16_t> samples;  // interleaved, row-major
};

inline RawRaster read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("pnm: cannot open " + path);
    char p = 0, kind = 0;
    in.get(p);
    in.get(kind);
    if (p != 'P' || (kind != '5' && kind != '6'))
        throw std::runtime_error("pnm: unsupported format in " + path);
    RawRaster r;
    r.channels = (kind == '6') ? 3 : 1;
    r.width = next_pnm_token(in);
    r.height = next_pnm_token(in);
    r.maxval = next_pnm_token(in);
    if (r.maxval <= 0 || r.maxval > 65535)
        throw std::runtime_error("pnm: bad maxval in " + path);
    in.get();  // single whitespace after maxval
    const std::size_t n = static_cast<std::size_t>(r.width) * r.height * r.channels;
    r.samples.resize(n);
    if (r.maxval < 256) {
        std::vector<std::uint8_t> buf(n);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n)
            throw std::runtime_error("pnm: truncated pixel data in " + path);
        for (std::size_t i = 0; i < n; ++i) r.samples[i] = buf[i];
    } else {
        std::vector<std::uint8_t> buf(2 * n);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(2 * n));
        if (static_cast<std::size_t>(in.gcount()) != 2 * n)
            throw std::runtime_error("pnm: truncated pixel data in " + path);
        for (std::size_t i = 0; i < n; ++i)
            r.samples[i] = static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]);
    }
    return r;
}

}  // namespace detail

/// Loads an image and min-max normalizes it to [0,1] per image.
/// A constant image maps to all zeros.
inline ImageSlice load_image(const std::string& path) {
    detail::RawRaster r = detail::read_pnm(path);
    ImageSlice img(r.channels, r.height, r.width);
    std::uint16_t lo = r.samples.empty() ? 0 : r.samples[0];
    std::uint16_t hi = lo;
    for (auto s : r.samples) {
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    const double range = static_cast<double>(hi) - static_cast<double>(lo);
    for (int c = 0; c < r.channels; ++c)
        for (int y = 0; y < r.height; ++y)
            for (int x = 0; x < r.width; ++x) {
                std::uint16_t s =
                    r.samples[(static_cast<std::size_t>(y) * r.width + x) * r.channels + c];
                img.at(c, y, x) = range > 0.0 ? (s - lo) / range : 0.0;
            }
    return img;
}

/// Loads a mask as an integer class map; every value must be < num_classes.
inline HardLabelMap load_mask(const std::string& path, int num_classes) {
    detail::RawRaster r = detail::read_pnm(path);
    if (r.channels != 1)
        throw std::runtime_error("mask must be single channel: " + path);
    HardLabelMap m(r.height, r.width);
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
        if (r.samples[i] >= static_cast<std::uint16_t>(num_classes))
            throw std::runtime_error("mask value " + std::to_string(r.samples[i]) +
                                     " >= num_classes in " + path);
        m.labels[i] = r.samples[i];
    }
    return m;
}

/// Writes a [0,1] image as 8-bit PGM (1 channel) or PPM (3 channels).
inline void save_image_u8(const ImageSlice& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("pnm: cannot write " + path);
    const bool color = img.channels == 3;
    if (!color && img.channels != 1)
        throw std::runtime_error("save_image_u8: expected 1 or 3 channels");
    out << (color ? "P6" : "P5") << "\n"
        << img.width << " " << img.height << "\n255\n";
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
                out.put(static_cast<char>(static_cast<int>(std::lround(v * 255.0))));
            }
}

/// Writes a class map as raw-index 8-bit PGM.
inline void save_mask(const HardLabelMap& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("pnm: cannot write " + path);
    out << "P5\n" << m.width << " " << m.height << "\n255\n";
    for (int v : m.labels) out.put(static_cast<char>(v));
}

}  // namespace sraseg
