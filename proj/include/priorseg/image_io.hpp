#pragma once

#include <png.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "priorseg/errors.hpp"
#include "priorseg/grid.hpp"

namespace priorseg {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

// 8- or 16-bit grayscale PNG. Raw sample values are kept (0..255 or
// 0..65535); nothing is rescaled.
inline ImageGrid read_png(const std::string& path) {
    detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("read_png: cannot open " + path);

    std::uint8_t sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8))
        throw IoError("read_png: not a PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("read_png: libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("read_png: decode error in " + path);
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_byte color = png_get_color_type(png, info);
    png_byte depth = png_get_bit_depth(png, info);
    if (color != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("read_png: only grayscale PNG is supported: " + path);
    }
    if (depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
        depth = 8;
    }
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<std::uint8_t> row(rowbytes);

    ImageGrid img(w, h);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        if (depth == 16) {
            for (int x = 0; x < w; ++x)
                img.at(x, y) = static_cast<double>((row[2 * x] << 8) | row[2 * x + 1]); // network order
        } else {
            for (int x = 0; x < w; ++x) img.at(x, y) = static_cast<double>(row[x]);
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

namespace detail {

inline void write_png_impl(const std::string& path, int w, int h, int color_type, int channels,
                           const std::vector<std::uint8_t>& pixels) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("write_png: cannot open " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("write_png: libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("write_png: encode error for " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, w, h, 8, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < h; ++y)
        png_write_row(png, const_cast<png_bytep>(pixels.data() + static_cast<size_t>(y) * w * channels));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace detail

inline void write_mask_png(const std::string& path, const RegionMask& m) {
    std::vector<std::uint8_t> px(m.size());
    for (size_t i = 0; i < m.size(); ++i) px[i] = m.inside[i] ? 255 : 0;
    detail::write_png_impl(path, m.width, m.height, PNG_COLOR_TYPE_GRAY, 1, px);
}

// Min-max normalized 8-bit rendering of an intensity field.
inline void write_image_png(const std::string& path, const ImageGrid& img) {
    double lo = img.data.empty() ? 0.0 : img.data[0], hi = lo;
    for (double v : img.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double range = hi > lo ? hi - lo : 1.0;
    std::vector<std::uint8_t> px(img.size());
    for (size_t i = 0; i < img.size(); ++i)
        px[i] = static_cast<std::uint8_t>(std::clamp(255.0 * (img.data[i] - lo) / range, 0.0, 255.0));
    detail::write_png_impl(path, img.width, img.height, PNG_COLOR_TYPE_GRAY, 1, px);
}

// Grayscale base with the mask boundary in red; optional second mask
// (e.g. ground truth) in green.
inline void write_overlay_png(const std::string& path, const ImageGrid& base, const RegionMask& contour,
                              const RegionMask* reference = nullptr) {
    if (base.width != contour.width || base.height != contour.height)
        throw IoError("write_overlay_png: size mismatch");
    double lo = base.data.empty() ? 0.0 : base.data[0], hi = lo;
    for (double v : base.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double range = hi > lo ? hi - lo : 1.0;
    std::vector<std::uint8_t> px(base.size() * 3);
    for (size_t i = 0; i < base.size(); ++i) {
        const auto g = static_cast<std::uint8_t>(std::clamp(255.0 * (base.data[i] - lo) / range, 0.0, 255.0));
        px[3 * i] = px[3 * i + 1] = px[3 * i + 2] = g;
    }
    auto draw = [&](const RegionMask& m, int channel) {
        for (const Pixel& p : boundary_pixels(m)) {
            const size_t i = 3 * m.idx(p.x, p.y);
            px[i] = px[i + 1] = px[i + 2] = 0;
            px[i + channel] = 255;
        }
    };
    if (reference) draw(*reference, 1);
    draw(contour, 0);
    detail::write_png_impl(path, base.width, base.height, PNG_COLOR_TYPE_RGB, 3, px);
}

// Binary PGM (P5), 8-bit or 16-bit per maxval. Comments allowed in header.
inline ImageGrid read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("read_pgm: cannot open " + path);

    auto next_token = [&]() -> std::string {
        std::string tok;
        int c;
        while ((c = is.get()) != EOF) {
            if (c == '#') {
                while ((c = is.get()) != EOF && c != '\n') {}
                continue;
            }
            if (std::isspace(c)) {
                if (!tok.empty()) break;
                continue;
            }
            tok.push_back(static_cast<char>(c));
        }
        if (tok.empty()) throw IoError("read_pgm: truncated header in " + path);
        return tok;
    };

    if (next_token() != "P5") throw IoError("read_pgm: not a binary PGM (P5): " + path);
    const int w = std::stoi(next_token());
    const int h = std::stoi(next_token());
    const long maxval = std::stol(next_token());
    if (w < 1 || h < 1 || maxval < 1 || maxval > 65535) throw IoError("read_pgm: bad dimensions in " + path);

    ImageGrid img(w, h);
    if (maxval < 256) {
        std::vector<std::uint8_t> buf(static_cast<size_t>(w) * h);
        is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!is) throw IoError("read_pgm: truncated pixel data in " + path);
        for (size_t i = 0; i < buf.size(); ++i) img.data[i] = buf[i];
    } else {
        std::vector<std::uint8_t> buf(static_cast<size_t>(w) * h * 2);
        is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!is) throw IoError("read_pgm: truncated pixel data in " + path);
        for (size_t i = 0; i < img.size(); ++i)
            img.data[i] = static_cast<double>((buf[2 * i] << 8) | buf[2 * i + 1]); // big-endian per PNM
    }
    return img;
}

// PNG or PGM, dispatched on magic bytes.
inline ImageGrid read_image(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("read_image: cannot open " + path);
    char magic[2] = {0, 0};
    is.read(magic, 2);
    is.close();
    if (magic[0] == 'P' && magic[1] == '5') return read_pgm(path);
    return read_png(path);
}

// Binary mask from an image file: inside where the sample exceeds half of
// the observed value range (masks written by this library are 0/255).
inline RegionMask read_mask(const std::string& path) {
    const ImageGrid img = read_image(path);
    double hi = 0.0;
    for (double v : img.data) hi = std::max(hi, v);
    const double thr = hi > 0.0 ? hi / 2.0 : 0.5;
    RegionMask m(img.width, img.height);
    for (size_t i = 0; i < img.size(); ++i) m.inside[i] = img.data[i] > thr ? 1 : 0;
    return m;
}

// --- level-set field serialization --------------------------------------
// 16-byte header: magic "PHI1", width and height as u32 little-endian,
// 4 reserved zero bytes; then width*height float64 little-endian values in
// raster order.

inline void write_phi(const std::string& path, const LevelSetField& f) {
    std::vector<std::uint8_t> out;
    out.reserve(16 + f.size() * 8);
    out.insert(out.end(), {'P', 'H', 'I', '1'});
    detail::put_u32le(out, static_cast<std::uint32_t>(f.width));
    detail::put_u32le(out, static_cast<std::uint32_t>(f.height));
    detail::put_u32le(out, 0);
    for (double v : f.phi) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>((bits >> (8 * b)) & 0xff));
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("write_phi: cannot open " + path);
    os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!os) throw IoError("write_phi: write failed for " + path);
}

inline LevelSetField read_phi(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("read_phi: cannot open " + path);
    std::uint8_t header[16];
    is.read(reinterpret_cast<char*>(header), 16);
    if (!is || std::memcmp(header, "PHI1", 4) != 0) throw IoError("read_phi: bad magic in " + path);
    const auto w = detail::get_u32le(header + 4);
    const auto h = detail::get_u32le(header + 8);
    if (w < 1 || h < 1 || w > (1u << 20) || h > (1u << 20)) throw IoError("read_phi: bad dimensions in " + path);
    LevelSetField f(static_cast<int>(w), static_cast<int>(h));
    std::vector<std::uint8_t> buf(f.size() * 8);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!is) throw IoError("read_phi: truncated field data in " + path);
    for (size_t i = 0; i < f.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 7; b >= 0; --b) bits = (bits << 8) | buf[8 * i + b];
        f.phi[i] = std::bit_cast<double>(bits);
    }
    return f;
}

}  // namespace priorseg
