#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "emdreg/image.hpp"
#include "emdreg/rng.hpp"

namespace emdreg {

/// Mixture-of-Gaussians bias field: G(x,y) = (1/K) sum_k exp(-|p - mu_k|^2 / 2 sigma^2).
/// When means is empty it is filled with K draws uniform over the pixel
/// domain, seeded by `seed`. sigma <= 0 selects the default width/16.
struct BiasFieldConfig {
    int kernel_count = 0;
    double sigma = 0.0;
    std::vector<std::pair<double, double>> means;
    std::uint64_t seed = 0;
};

inline ImageGrid generate_bias_field(int width, int height, const BiasFieldConfig& config) {
    ImageGrid field(width, height, 0.0);
    if (config.kernel_count == 0) return field;  // the "no bias field" case
    if (config.kernel_count < 0) throw std::invalid_argument("generate_bias_field: negative kernel count");

    double sigma = config.sigma > 0.0 ? config.sigma : width / 16.0;
    std::vector<std::pair<double, double>> means = config.means;
    if (means.empty()) {
        auto rng = make_rng(config.seed);
        std::uniform_real_distribution<double> ux(0.0, static_cast<double>(width - 1));
        std::uniform_real_distribution<double> uy(0.0, static_cast<double>(height - 1));
        for (int k = 0; k < config.kernel_count; ++k) {
            double mx = ux(rng);
            double my = uy(rng);
            means.emplace_back(mx, my);
        }
    }
    if (static_cast<int>(means.size()) != config.kernel_count)
        throw std::invalid_argument("generate_bias_field: means/kernel_count mismatch");

    double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    double invk = 1.0 / config.kernel_count;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double s = 0.0;
            for (const auto& [mx, my] : means) {
                double dx = x - mx, dy = y - my;
                s += std::exp(-(dx * dx + dy * dy) * inv2s2);
            }
            field.at(x, y) = s * invk;
        }
    }
    return field;
}

/// Pixel-wise additive corruption. No clamping: the model is a pure sum, and
/// clamping would break its additivity.
inline ImageGrid apply_bias(const ImageGrid& img, const ImageGrid& field) {
    require_same_shape(img, field, "apply_bias");
    ImageGrid out = img;
    for (size_t i = 0; i < out.size(); ++i) out.data[i] += field.data[i];
    return out;
}

} // namespace emdreg
