#pragma once

#include <cmath>
#include <vector>

#include "emdreg/delaunay.hpp"
#include "emdreg/image.hpp"
#include "emdreg/tps.hpp"

namespace emdreg {

struct Extremum {
    int x = 0;
    int y = 0;
    double value = 0.0;
};

/// Local extrema of a grid under strict 8-connected comparison (border pixels
/// compared against in-bounds neighbors only; plateaus are not extrema). The
/// four image corners are appended to BOTH lists as envelope anchors and are
/// excluded from detection; detected_* counts cover the detected extrema only.
struct ExtremaSet {
    std::vector<Extremum> maxima;
    std::vector<Extremum> minima;
    int detected_maxima = 0;
    int detected_minima = 0;
};

/// Ordered intrinsic mode functions plus the final residual. imfs[0] is the
/// highest-frequency component; summing all IMFs and the residual
/// reconstructs the decomposed image (telescoping identity).
struct ImfStack {
    std::vector<ImageGrid> imfs;
    ImageGrid residual;

    int levels() const { return static_cast<int>(imfs.size()); }
};

/// Sifting runs essentially to the iteration cap: the smooth-trend remnant
/// left in an IMF after one or two envelope subtractions is small relative to
/// the oscillation (so an SD-style stop cannot see it), but each extra pass
/// shrinks it geometrically, and that cleanup is exactly what routes smooth
/// bias fields into the residual.
struct SiftOptions {
    int max_sift_iters = 12;
    double sd_threshold = 1e-4;
};

struct SiftStats {
    int iterations = 0;
    double last_sd = 0.0;
};

inline ExtremaSet find_local_extrema(const ImageGrid& g) {
    ExtremaSet out;
    auto is_corner = [&](int x, int y) {
        return (x == 0 || x == g.width - 1) && (y == 0 || y == g.height - 1);
    };
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            if (is_corner(x, y)) continue;
            double v = g.at(x, y);
            bool is_max = true, is_min = true;
            for (int dy = -1; dy <= 1 && (is_max || is_min); ++dy) {
                int ny = y + dy;
                if (ny < 0 || ny >= g.height) continue;
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    int nx = x + dx;
                    if (nx < 0 || nx >= g.width) continue;
                    double nv = g.at(nx, ny);
                    if (nv >= v) is_max = false;
                    if (nv <= v) is_min = false;
                }
            }
            if (is_max) out.maxima.push_back({x, y, v});
            if (is_min) out.minima.push_back({x, y, v});
        }
    }
    out.detected_maxima = static_cast<int>(out.maxima.size());
    out.detected_minima = static_cast<int>(out.minima.size());
    int cx[2] = {0, g.width - 1}, cy[2] = {0, g.height - 1};
    for (int iy = 0; iy < (g.height > 1 ? 2 : 1); ++iy) {
        for (int ix = 0; ix < (g.width > 1 ? 2 : 1); ++ix) {
            Extremum corner{cx[ix], cy[iy], g.at(cx[ix], cy[iy])};
            out.maxima.push_back(corner);
            out.minima.push_back(corner);
        }
    }
    return out;
}

/// Smooth surface through scattered samples on the full pixel lattice.
/// Thin-plate splines up to 2000 points; above that, Delaunay linear
/// interpolation with nearest-neighbor extrapolation (the dense TPS solve is
/// cubic in point count).
inline ImageGrid interpolate_envelope(const std::vector<Extremum>& points, int width, int height) {
    std::vector<ScatteredPoint> pts;
    pts.reserve(points.size());
    for (const auto& e : points) pts.push_back({static_cast<double>(e.x), static_cast<double>(e.y), e.value});
    if (pts.size() > 2000) return delaunay_interpolate(pts, width, height);
    return tps_interpolate(pts, width, height);
}

/// Extracts one IMF by envelope-mean subtraction: h <- h - (Emax + Emin)/2,
/// stopping on the standard SD criterion, the iteration cap, or once fewer
/// than 3 detected maxima or minima remain. Inputs too degenerate to carry an
/// envelope come back unchanged as a zero-iteration IMF.
inline ImageGrid sift(const ImageGrid& residual_prev, const SiftOptions& opts = {},
                      SiftStats* stats = nullptr) {
    constexpr double kSdEps = 1e-12;
    ImageGrid h = residual_prev;
    int iters = 0;
    double sd = 0.0;
    while (iters < opts.max_sift_iters) {
        ExtremaSet ex = find_local_extrema(h);
        if (iters > 0 && (ex.detected_maxima < 3 || ex.detected_minima < 3)) break;
        if (ex.maxima.size() < 3 || ex.minima.size() < 3) break;
        ImageGrid emax, emin;
        try {
            emax = interpolate_envelope(ex.maxima, h.width, h.height);
            emin = interpolate_envelope(ex.minima, h.width, h.height);
        } catch (const numerical_error&) {
            break;  // collinear anchors (1-pixel-wide grids and the like)
        }
        double num = 0.0, den = 0.0;
        for (size_t i = 0; i < h.size(); ++i) {
            double mean = 0.5 * (emax.data[i] + emin.data[i]);
            double prev = h.data[i];
            h.data[i] = prev - mean;
            num += mean * mean;
            den += prev * prev + kSdEps;
        }
        ++iters;
        sd = num / den;
        if (sd < opts.sd_threshold) break;
    }
    if (stats) {
        stats->iterations = iters;
        stats->last_sd = sd;
    }
    return h;
}

/// n-level decomposition: repeatedly sift the running residual and subtract.
/// Once a residual turns degenerate (fewer than 3 detected extrema of either
/// kind) the remaining IMFs are zero grids, keeping the stack shape fixed.
inline ImfStack decompose(const ImageGrid& img, int levels, const SiftOptions& opts = {}) {
    if (levels < 1) throw std::invalid_argument("decompose: levels must be >= 1");
    ImfStack stack;
    stack.imfs.reserve(static_cast<size_t>(levels));
    ImageGrid res = img;
    for (int i = 0; i < levels; ++i) {
        ExtremaSet ex = find_local_extrema(res);
        if (ex.detected_maxima < 3 || ex.detected_minima < 3) {
            while (static_cast<int>(stack.imfs.size()) < levels)
                stack.imfs.emplace_back(img.width, img.height, 0.0);
            break;
        }
        ImageGrid imf = sift(res, opts);
        for (size_t j = 0; j < res.size(); ++j) res.data[j] -= imf.data[j];
        stack.imfs.push_back(std::move(imf));
    }
    stack.residual = std::move(res);
    return stack;
}

/// Per-pixel arithmetic mean of all IMFs (residual excluded).
inline ImageGrid average_feature_map(const ImfStack& stack) {
    if (stack.imfs.empty()) throw std::invalid_argument("average_feature_map: empty stack");
    ImageGrid out(stack.imfs[0].width, stack.imfs[0].height);
    for (const auto& imf : stack.imfs)
        for (size_t i = 0; i < out.size(); ++i) out.data[i] += imf.data[i];
    double inv = 1.0 / stack.imfs.size();
    for (double& v : out.data) v *= inv;
    return out;
}

} // namespace emdreg
