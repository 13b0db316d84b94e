#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>

#include "emdreg/image.hpp"

namespace emdreg {

namespace detail {

inline bool has_suffix(const std::string& s, const std::string& suf) {
    if (s.size() < suf.size()) return false;
    std::string tail = s.substr(s.size() - suf.size());
    for (auto& c : tail) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return tail == suf;
}

// Reads the next whitespace/comment-delimited token of a PNM header.
inline std::string pnm_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    return tok;
}

inline long pnm_int(std::istream& in, const char* what) {
    std::string tok = pnm_token(in);
    if (tok.empty()) throw format_error(std::string("graymap: missing ") + what);
    try {
        return std::stol(tok);
    } catch (const std::exception&) {
        throw format_error(std::string("graymap: bad ") + what + " '" + tok + "'");
    }
}

inline ImageGrid load_pgm(std::istream& in, const std::string& path) {
    std::string magic = pnm_token(in);
    if (magic != "P2" && magic != "P5")
        throw format_error("unsupported graymap type '" + magic + "' in " + path);
    long w = pnm_int(in, "width");
    long h = pnm_int(in, "height");
    long maxval = pnm_int(in, "maxval");
    if (w < 1 || h < 1 || maxval < 1 || maxval > 65535)
        throw format_error("graymap: invalid header in " + path);
    ImageGrid img(static_cast<int>(w), static_cast<int>(h));
    // 8-bit data scales by 1/255, 16-bit by 1/65535.
    double scale = maxval < 256 ? 1.0 / 255.0 : 1.0 / 65535.0;
    size_t n = img.size();
    if (magic == "P2") {
        for (size_t i = 0; i < n; ++i) img.data[i] = pnm_int(in, "sample") * scale;
    } else {
        // The maxval token is followed by exactly one whitespace byte, already
        // consumed by pnm_token.
        if (maxval < 256) {
            std::vector<std::uint8_t> raw(n);
            in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
            if (static_cast<size_t>(in.gcount()) != n)
                throw format_error("graymap: truncated pixel data in " + path);
            for (size_t i = 0; i < n; ++i) img.data[i] = raw[i] * scale;
        } else {
            std::vector<std::uint8_t> raw(n * 2);
            in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
            if (static_cast<size_t>(in.gcount()) != raw.size())
                throw format_error("graymap: truncated pixel data in " + path);
            for (size_t i = 0; i < n; ++i) {
                unsigned v = (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1];
                img.data[i] = v * scale;
            }
        }
    }
    return img;
}

struct png_closer {
    std::FILE* f = nullptr;
    ~png_closer() {
        if (f) std::fclose(f);
    }
};

inline ImageGrid load_png(const std::string& path) {
    png_closer fc;
    fc.f = std::fopen(path.c_str(), "rb");
    if (!fc.f) throw io_error("cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        throw io_error("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw format_error("invalid PNG data in " + path);
    }
    png_init_io(png, fc.f);
    png_read_info(png, info);
    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int depth = png_get_bit_depth(png, info);
    int color = png_get_color_type(png, info);
    if (color != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw format_error("unsupported PNG (grayscale only): " + path);
    }
    if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    depth = png_get_bit_depth(png, info);

    std::vector<std::uint8_t> raw(static_cast<size_t>(w) * h * (depth / 8));
    std::vector<png_bytep> rows(h);
    size_t stride = static_cast<size_t>(w) * (depth / 8);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    ImageGrid img(static_cast<int>(w), static_cast<int>(h));
    size_t n = img.size();
    if (depth == 8) {
        for (size_t i = 0; i < n; ++i) img.data[i] = raw[i] / 255.0;
    } else {
        // PNG stores 16-bit samples big-endian.
        for (size_t i = 0; i < n; ++i) {
            unsigned v = (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1];
            img.data[i] = v / 65535.0;
        }
    }
    return img;
}

inline void save_png16(const ImageGrid& img, const std::string& path) {
    png_closer fc;
    fc.f = std::fopen(path.c_str(), "wb");
    if (!fc.f) throw io_error("cannot write " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        throw io_error("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw io_error("PNG write failed: " + path);
    }
    png_init_io(png, fc.f);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
                 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<std::uint8_t> row(static_cast<size_t>(img.width) * 2);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double v = std::clamp(img.at(x, y), 0.0, 1.0);
            unsigned q = static_cast<unsigned>(std::lround(v * 65535.0));
            row[2 * x] = static_cast<std::uint8_t>(q >> 8);
            row[2 * x + 1] = static_cast<std::uint8_t>(q & 0xff);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline void save_pgm16(const ImageGrid& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write " + path);
    out << "P5\n" << img.width << " " << img.height << "\n65535\n";
    std::vector<std::uint8_t> raw(img.size() * 2);
    for (size_t i = 0; i < img.size(); ++i) {
        double v = std::clamp(img.data[i], 0.0, 1.0);
        unsigned q = static_cast<unsigned>(std::lround(v * 65535.0));
        raw[2 * i] = static_cast<std::uint8_t>(q >> 8);
        raw[2 * i + 1] = static_cast<std::uint8_t>(q & 0xff);
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw io_error("write failed: " + path);
}

} // namespace detail

/// Loads an 8/16-bit grayscale raster (PGM P2/P5 or grayscale PNG). 8-bit
/// samples scale by 1/255, 16-bit by 1/65535.
inline ImageGrid load_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path);
    char sig[8] = {};
    in.read(sig, 8);
    if (in.gcount() >= 8 && std::memcmp(sig, "\x89PNG\r\n\x1a\n", 8) == 0) {
        in.close();
        return detail::load_png(path);
    }
    if (in.gcount() >= 2 && sig[0] == 'P' && (sig[1] == '2' || sig[1] == '5')) {
        in.clear();
        in.seekg(0);
        return detail::load_pgm(in, path);
    }
    throw format_error("unsupported image format: " + path);
}

/// Writes 16-bit grayscale, values clamped to [0,1] then scaled by 65535.
/// PNG when the path ends in .png, binary graymap (P5) otherwise.
inline void save_image(const ImageGrid& img, const std::string& path) {
    if (detail::has_suffix(path, ".png"))
        detail::save_png16(img, path);
    else
        detail::save_pgm16(img, path);
}

} // namespace emdreg
