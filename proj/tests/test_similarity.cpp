#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "emdreg/bias_field.hpp"
#include "emdreg/ffd.hpp"
#include "emdreg/phantom.hpp"
#include "emdreg/similarity.hpp"

using namespace emdreg;

namespace {

// Independent partial-volume MI computation used as the oracle: separate
// marginal accumulation, explicit two-pass structure.
double mi_oracle(const ImageGrid& a, const ImageGrid& b, int bins) {
    auto [lo_a, hi_a] = min_max(a);
    auto [lo_b, hi_b] = min_max(b);
    std::vector<std::vector<double>> joint(bins, std::vector<double>(bins, 0.0));
    auto bin_of = [bins](double v, double lo, double hi) {
        double pos = hi > lo ? (v - lo) / (hi - lo) * (bins - 1) : 0.0;
        int i = std::min(bins - 2, std::max(0, static_cast<int>(pos)));
        return std::pair<int, double>{i, pos - i};
    };
    for (size_t i = 0; i < a.size(); ++i) {
        auto [ia, fa] = bin_of(a.data[i], lo_a, hi_a);
        auto [ib, fb] = bin_of(b.data[i], lo_b, hi_b);
        joint[ia][ib] += (1 - fa) * (1 - fb);
        joint[ia][ib + 1] += (1 - fa) * fb;
        joint[ia + 1][ib] += fa * (1 - fb);
        joint[ia + 1][ib + 1] += fa * fb;
    }
    std::vector<double> pa(bins, 0.0), pb(bins, 0.0);
    double n = static_cast<double>(a.size());
    for (int i = 0; i < bins; ++i)
        for (int j = 0; j < bins; ++j) {
            joint[i][j] /= n;
            pa[i] += joint[i][j];
            pb[j] += joint[i][j];
        }
    auto ent = [](const std::vector<double>& p) {
        double h = 0;
        for (double v : p)
            if (v > 0) h -= v * std::log(v);
        return h;
    };
    double hj = 0;
    for (int i = 0; i < bins; ++i)
        for (int j = 0; j < bins; ++j)
            if (joint[i][j] > 0) hj -= joint[i][j] * std::log(joint[i][j]);
    return ent(pa) + ent(pb) - hj;
}

// Image whose samples land exactly on histogram bin positions.
ImageGrid exact_bin_image(int w, int h, int bins, std::uint64_t seed) {
    ImageGrid img(w, h);
    auto rng = make_rng(seed);
    std::uniform_int_distribution<int> u(0, bins - 1);
    img.data[0] = 0.0;                       // pin the range
    img.data[1] = double(bins - 1) / (bins - 1);
    for (size_t i = 2; i < img.size(); ++i) img.data[i] = double(u(rng)) / (bins - 1);
    return img;
}

} // namespace

TEST_CASE("ssd basics") {
    ImageGrid i = make_phantom(24, 20, 1);
    CHECK(ssd(i, i) == 0.0);

    ImageGrid a(2, 1, 0.0), b(2, 1, 1.0);
    CHECK(ssd(a, b) == 1.0);

    ImageGrid x = make_random_image(9, 7, 2), y = make_random_image(9, 7, 3);
    CHECK(ssd(x, y) == Catch::Approx(ssd(y, x)).epsilon(1e-15));

    ImageGrid wrong(8, 7, 0.0);
    CHECK_THROWS_AS(ssd(x, wrong), std::invalid_argument);
}

TEST_CASE("cc cost is zero for perfect (anti-)correlation, one for constants") {
    ImageGrid i = make_phantom(24, 20, 4);
    CHECK(cc(i, i) == Catch::Approx(0.0).margin(1e-12));

    ImageGrid flipped = i;
    for (double& v : flipped.data) v = -v + 2.0;
    CHECK(cc(i, flipped) == Catch::Approx(0.0).margin(1e-12));

    ImageGrid c(24, 20, 0.5);
    CHECK(cc(i, c) == 1.0);
    CHECK(cc(c, i) == 1.0);
}

TEST_CASE("dct2 is orthonormal") {
    ImageGrid c(12, 9, 0.37);
    ImageGrid q = dct2(c);
    CHECK(q.at(0, 0) == Catch::Approx(0.37 * std::sqrt(12.0 * 9.0)).epsilon(1e-12));
    for (int y = 0; y < 9; ++y)
        for (int x = 0; x < 12; ++x)
            if (x != 0 || y != 0) CHECK(std::abs(q.at(x, y)) < 1e-12);

    ImageGrid r = make_random_image(31, 17, 8);
    ImageGrid qr = dct2(r);
    double sum_r = 0, sum_q = 0;
    for (double v : r.data) sum_r += v * v;
    for (double v : qr.data) sum_q += v * v;
    CHECK(std::abs(sum_q - sum_r) <= 1e-9 * sum_r);

    ImageGrid back = idct2(qr);
    double worst = 0;
    for (size_t i = 0; i < r.size(); ++i) worst = std::max(worst, std::abs(back.data[i] - r.data[i]));
    CHECK(worst <= 1e-10);
}

TEST_CASE("rc cost: zero at equality, exact on constant residuals, sign invariant") {
    ImageGrid i = make_phantom(24, 20, 6);
    CHECK(rc(i, i) == 0.0);

    double alpha = 0.05, c0 = 0.2;
    int n = 24 * 20;
    ImageGrid shifted = i;
    for (double& v : shifted.data) v += c0;
    CHECK(rc(shifted, i, alpha) == Catch::Approx(std::log1p(c0 * c0 * n / alpha)).epsilon(1e-12));

    ImageGrid r = make_random_image(24, 20, 9);
    ImageGrid plus = i, minus = i;
    for (size_t k = 0; k < r.size(); ++k) {
        plus.data[k] += 0.1 * r.data[k];
        minus.data[k] -= 0.1 * r.data[k];
    }
    CHECK(rc(plus, i) == rc(minus, i));

    CHECK_THROWS_AS(rc(i, i, 0.0), std::invalid_argument);
}

TEST_CASE("rc prefers smooth residuals over white noise of equal energy") {
    ImageGrid base = make_phantom(64, 53, 2);
    BiasFieldConfig bf;
    bf.kernel_count = 1;
    bf.sigma = 64.0 / 16.0;
    bf.means = {{30.0, 25.0}};
    ImageGrid smooth = generate_bias_field(64, 53, bf);

    ImageGrid noise = make_random_image(64, 53, 5);
    for (double& v : noise.data) v -= 0.5;
    double es = 0, en = 0;
    for (double v : smooth.data) es += v * v;
    for (double v : noise.data) en += v * v;
    for (double& v : noise.data) v *= std::sqrt(es / en);

    ImageGrid with_smooth = base, with_noise = base;
    for (size_t i = 0; i < base.size(); ++i) {
        with_smooth.data[i] += smooth.data[i];
        with_noise.data[i] += noise.data[i];
    }
    CHECK(rc(with_smooth, base) < rc(with_noise, base));
}

TEST_CASE("rc rises relatively less than ssd under a smooth corruption") {
    ImageGrid a = make_phantom(64, 53, 3);
    FfdTransform small_warp = perturb_grid(make_uniform_grid(64, 53, 8, 8), 1.0, 4);
    ImageGrid b = warp_image(a, small_warp);

    BiasFieldConfig bf;
    bf.kernel_count = 1;
    bf.sigma = 64.0 / 16.0;
    bf.seed = 12;
    ImageGrid b_biased = apply_bias(b, generate_bias_field(64, 53, bf));

    double rc_ratio = rc(a, b_biased) / rc(a, b);
    double ssd_ratio = ssd(a, b_biased) / ssd(a, b);
    CHECK(rc_ratio < ssd_ratio);
}

TEST_CASE("mi of an image with itself is its negative entropy on exact bins") {
    int bins = 32;
    ImageGrid img = exact_bin_image(40, 30, bins, 13);
    // entropy from a plain counting histogram
    std::vector<double> counts(bins, 0.0);
    for (double v : img.data) counts[static_cast<int>(std::lround(v * (bins - 1)))] += 1.0;
    double h = 0;
    for (double c : counts)
        if (c > 0) {
            double p = c / img.size();
            h -= p * std::log(p);
        }
    CHECK(mi(img, img, bins) == Catch::Approx(-h).margin(1e-12));
}

TEST_CASE("mi matches the independent oracle and is symmetric") {
    ImageGrid a = make_phantom(40, 30, 1);
    ImageGrid b = make_phantom(40, 30, 2);
    CHECK(mi(a, b, 32) == Catch::Approx(-mi_oracle(a, b, 32)).margin(1e-12));
    CHECK(mi(a, b, 32) == Catch::Approx(mi(b, a, 32)).margin(1e-12));
}

TEST_CASE("mi of independent random images stays near zero") {
    ImageGrid a = make_random_image(218, 181, 101);
    ImageGrid b = make_random_image(218, 181, 202);
    double info = -mi(a, b, 64);
    CHECK(info >= -1e-9);
    CHECK(info <= 0.05);
}

TEST_CASE("mi is invariant under bin-permutation remaps") {
    int bins = 16;
    ImageGrid a = exact_bin_image(36, 28, bins, 3);
    ImageGrid b = exact_bin_image(36, 28, bins, 4);
    // permute a's bin labels (0 and bins-1 stay, preserving the range)
    std::vector<int> perm(bins);
    for (int i = 0; i < bins; ++i) perm[i] = i;
    std::swap(perm[3], perm[11]);
    std::swap(perm[5], perm[9]);
    ImageGrid a_perm = a;
    for (double& v : a_perm.data)
        v = double(perm[static_cast<int>(std::lround(v * (bins - 1)))]) / (bins - 1);
    CHECK(mi(a_perm, b, bins) == Catch::Approx(mi(a, b, bins)).margin(1e-12));
}

TEST_CASE("all four costs are minimized at equality") {
    ImageGrid a = make_phantom(48, 40, 7);
    FfdTransform warp = perturb_grid(make_uniform_grid(48, 40, 6, 6), 2.0, 3);
    ImageGrid b = warp_image(a, warp);
    for (MeasureKind m : {MeasureKind::ssd(), MeasureKind::cc(), MeasureKind::rc(), MeasureKind::mi()}) {
        double at_eq = measure_cost(m, a, a);
        double at_mismatch = measure_cost(m, a, b);
        CHECK(at_eq <= at_mismatch);
        if (m.type != MeasureKind::MI) CHECK(at_eq == Catch::Approx(0.0).margin(1e-12));
    }
}
