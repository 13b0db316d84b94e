#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "emdreg/errors.hpp"

namespace emdreg {

/// 2D scalar field, row-major. x indexes columns, y indexes rows, origin at
/// the top-left pixel center. Intensities are nominally in [0,1] after
/// normalization but are not clamped anywhere except at save time.
struct ImageGrid {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    ImageGrid() = default;
    ImageGrid(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<size_t>(w) * static_cast<size_t>(h), fill) {
        if (w < 1 || h < 1) throw std::invalid_argument("ImageGrid: dimensions must be >= 1");
    }

    double& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    double at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
    double& operator()(int x, int y) { return at(x, y); }
    double operator()(int x, int y) const { return at(x, y); }

    size_t size() const { return data.size(); }
    bool same_shape(const ImageGrid& o) const { return width == o.width && height == o.height; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline void require_same_shape(const ImageGrid& a, const ImageGrid& b, const char* who) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(who) + ": image dimensions do not match");
}

inline std::pair<double, double> min_max(const ImageGrid& img) {
    auto [lo, hi] = std::minmax_element(img.data.begin(), img.data.end());
    return {*lo, *hi};
}

/// (img - min) / (max - min); a constant image maps to all zeros. True
/// division keeps the result exactly idempotent (min -> 0.0, max -> 1.0).
inline ImageGrid normalize(const ImageGrid& img) {
    auto [lo, hi] = min_max(img);
    ImageGrid out(img.width, img.height);
    if (hi == lo) return out;
    double range = hi - lo;
    for (size_t i = 0; i < img.size(); ++i) out.data[i] = (img.data[i] - lo) / range;
    return out;
}

/// Bilinear interpolation with coordinates clamped to the image rectangle
/// (replicate padding), so out-of-bounds queries never manufacture edges.
inline double sample_bilinear(const ImageGrid& img, double x, double y) {
    x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
    int x0 = static_cast<int>(x);
    int y0 = static_cast<int>(y);
    if (x0 > img.width - 2) x0 = std::max(0, img.width - 2);
    if (y0 > img.height - 2) y0 = std::max(0, img.height - 2);
    double fx = x - x0;
    double fy = y - y0;
    int x1 = std::min(x0 + 1, img.width - 1);
    int y1 = std::min(y0 + 1, img.height - 1);
    double v00 = img.at(x0, y0), v10 = img.at(x1, y0);
    double v01 = img.at(x0, y1), v11 = img.at(x1, y1);
    // Symmetric weight form: exact at lattice points (weights are 0/1 there).
    return (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11);
}

namespace detail {

// Separable 3x3 binomial smoothing with replicated borders.
inline ImageGrid smooth3x3(const ImageGrid& img) {
    ImageGrid tmp(img.width, img.height), out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            int xm = std::max(0, x - 1), xp = std::min(img.width - 1, x + 1);
            tmp.at(x, y) = 0.25 * img.at(xm, y) + 0.5 * img.at(x, y) + 0.25 * img.at(xp, y);
        }
    }
    for (int y = 0; y < img.height; ++y) {
        int ym = std::max(0, y - 1), yp = std::min(img.height - 1, y + 1);
        for (int x = 0; x < img.width; ++x) {
            out.at(x, y) = 0.25 * tmp.at(x, ym) + 0.5 * tmp.at(x, y) + 0.25 * tmp.at(x, yp);
        }
    }
    return out;
}

} // namespace detail

/// Anti-aliased decimation: 3x3 smoothing, then the mean of each
/// factor x factor block (blocks truncated at the borders). Output size is
/// ceil(side / factor). factor 1 returns the input bit-for-bit.
inline ImageGrid downsample(const ImageGrid& img, int factor) {
    if (factor < 1) throw std::invalid_argument("downsample: factor must be >= 1");
    if (factor == 1) return img;
    ImageGrid src = detail::smooth3x3(img);
    int ow = (img.width + factor - 1) / factor;
    int oh = (img.height + factor - 1) / factor;
    ImageGrid out(ow, oh);
    for (int oy = 0; oy < oh; ++oy) {
        int y0 = oy * factor, y1 = std::min(img.height, y0 + factor);
        for (int ox = 0; ox < ow; ++ox) {
            int x0 = ox * factor, x1 = std::min(img.width, x0 + factor);
            double sum = 0.0;
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) sum += src.at(x, y);
            out.at(ox, oy) = sum / ((y1 - y0) * (x1 - x0));
        }
    }
    return out;
}

} // namespace emdreg
