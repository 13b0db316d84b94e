#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "emdreg/image.hpp"
#include "emdreg/rng.hpp"

namespace emdreg {

/// Seeded uniform-noise image on [0,1].
inline ImageGrid make_random_image(int width, int height, std::uint64_t seed) {
    ImageGrid img(width, height);
    auto rng = make_rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : img.data) v = u(rng);
    return img;
}

/// Synthetic brain-slice-like test image: skull ring, cortex with gyral
/// banding, ventricles, plus band-limited texture so the image carries local
/// extrema at every scale. Deterministic in (width, height, seed) and
/// normalized to [0,1].
inline ImageGrid make_phantom(int width, int height, std::uint64_t seed = 0) {
    ImageGrid img(width, height, 0.03);
    double cx = 0.5 * (width - 1), cy = 0.5 * (height - 1);
    double ax = 0.44 * width, by = 0.46 * height;

    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double ex = (x - cx) / ax, ey = (y - cy) / by;
            double r = std::sqrt(ex * ex + ey * ey);
            double theta = std::atan2(ey, ex);
            double v = 0.03;
            if (r < 1.0) {
                if (r >= 0.90) {
                    v = 0.85;  // skull
                } else if (r >= 0.84) {
                    v = 0.10;  // CSF gap
                } else {
                    v = 0.48;  // gray matter base
                    if (r < 0.58) v = 0.62;  // white matter core
                    // gyral banding in the cortex
                    if (r >= 0.45 && r < 0.84) {
                        double band = std::sin(9.0 * theta + 2.2 * std::sin(3.0 * theta));
                        v += 0.10 * band * std::exp(-8.0 * (r - 0.70) * (r - 0.70));
                    }
                    // ventricles
                    double v1x = (x - (cx - 0.11 * width)) / (0.05 * width);
                    double v1y = (y - (cy - 0.03 * height)) / (0.16 * height);
                    double v2x = (x - (cx + 0.11 * width)) / (0.05 * width);
                    double v2y = v1y;
                    if (v1x * v1x + v1y * v1y < 1.0 || v2x * v2x + v2y * v2y < 1.0) v = 0.14;
                    // deep gray nuclei
                    double p1x = (x - (cx - 0.20 * width)) / (0.07 * width);
                    double p1y = (y - (cy + 0.10 * height)) / (0.09 * height);
                    double p2x = (x - (cx + 0.20 * width)) / (0.07 * width);
                    double p2y = p1y;
                    if (p1x * p1x + p1y * p1y < 1.0 || p2x * p2x + p2y * p2y < 1.0) v = 0.40;
                }
            }
            img.at(x, y) = v;
        }
    }
    img = detail::smooth3x3(detail::smooth3x3(img));

    // Broadband acquisition-style noise. Decomposition treats broadband
    // noise as a dyadic filter bank, which keeps local extrema dense at
    // every level; narrowband texture would dissolve after one level.
    auto rng = make_rng(mix_seed(seed, 0x70a17));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double& v : img.data) v += 0.08 * u(rng);
    return normalize(img);
}

} // namespace emdreg
