#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "emdreg/bias_field.hpp"

using namespace emdreg;

TEST_CASE("single kernel peaks at its mean and decays radially") {
    BiasFieldConfig cfg;
    cfg.kernel_count = 1;
    cfg.sigma = 8.0;
    cfg.means = {{50.0, 40.0}};
    ImageGrid g = generate_bias_field(120, 100, cfg);
    CHECK(g.at(50, 40) == 1.0);
    // at distance sigma the kernel is exp(-1/2)
    CHECK(g.at(58, 40) == Catch::Approx(std::exp(-0.5)).epsilon(1e-12));
    CHECK(g.at(50, 48) == Catch::Approx(std::exp(-0.5)).epsilon(1e-12));
    // radial decay
    CHECK(g.at(70, 40) < g.at(60, 40));
    CHECK(g.at(60, 40) < g.at(55, 40));
}

TEST_CASE("two identical kernels average to the single-kernel field") {
    BiasFieldConfig one;
    one.kernel_count = 1;
    one.sigma = 6.0;
    one.means = {{30.0, 20.0}};
    BiasFieldConfig two;
    two.kernel_count = 2;
    two.sigma = 6.0;
    two.means = {{30.0, 20.0}, {30.0, 20.0}};
    ImageGrid a = generate_bias_field(64, 48, one);
    ImageGrid b = generate_bias_field(64, 48, two);
    REQUIRE(a.data.size() == b.data.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a.data[i] == Catch::Approx(b.data[i]).margin(1e-15));
}

TEST_CASE("default sigma is width/16") {
    BiasFieldConfig auto_sigma;
    auto_sigma.kernel_count = 1;
    auto_sigma.means = {{100.0, 90.0}};
    BiasFieldConfig explicit_sigma = auto_sigma;
    explicit_sigma.sigma = 218.0 / 16.0;  // = 13.625
    ImageGrid a = generate_bias_field(218, 181, auto_sigma);
    ImageGrid b = generate_bias_field(218, 181, explicit_sigma);
    REQUIRE(a.data == b.data);
}

TEST_CASE("field maximum never exceeds 1 and hits 1 on lattice means") {
    BiasFieldConfig cfg;
    cfg.kernel_count = 3;
    cfg.sigma = 5.0;
    cfg.seed = 42;
    ImageGrid g = generate_bias_field(80, 60, cfg);
    double peak = *std::max_element(g.data.begin(), g.data.end());
    CHECK(peak <= 1.0);

    BiasFieldConfig lattice;
    lattice.kernel_count = 2;
    lattice.sigma = 5.0;
    lattice.means = {{10.0, 10.0}, {10.0, 10.0}};
    ImageGrid l = generate_bias_field(80, 60, lattice);
    CHECK(*std::max_element(l.data.begin(), l.data.end()) == 1.0);
}

TEST_CASE("field is invariant under permutation of means") {
    BiasFieldConfig a;
    a.kernel_count = 3;
    a.sigma = 7.0;
    a.means = {{5.0, 6.0}, {40.0, 30.0}, {20.0, 50.0}};
    BiasFieldConfig b = a;
    std::swap(b.means[0], b.means[2]);
    ImageGrid ga = generate_bias_field(64, 64, a);
    ImageGrid gb = generate_bias_field(64, 64, b);
    for (size_t i = 0; i < ga.size(); ++i) CHECK(ga.data[i] == Catch::Approx(gb.data[i]).margin(1e-15));
}

TEST_CASE("seeded mean draws are reproducible bit-for-bit") {
    BiasFieldConfig cfg;
    cfg.kernel_count = 4;
    cfg.sigma = 9.0;
    cfg.seed = 1234;
    ImageGrid a = generate_bias_field(100, 80, cfg);
    ImageGrid b = generate_bias_field(100, 80, cfg);
    REQUIRE(a.data == b.data);

    cfg.seed = 1235;
    ImageGrid c = generate_bias_field(100, 80, cfg);
    CHECK(a.data != c.data);
}

TEST_CASE("K = 0 yields the zero field") {
    BiasFieldConfig cfg;
    cfg.kernel_count = 0;
    ImageGrid g = generate_bias_field(32, 24, cfg);
    for (double v : g.data) CHECK(v == 0.0);
}

TEST_CASE("apply_bias adds, inverts, and validates shapes") {
    ImageGrid img(8, 6, 0.5);
    ImageGrid zero(8, 6, 0.0);
    CHECK(apply_bias(img, zero).data == img.data);

    ImageGrid c(8, 6, 0.25);
    ImageGrid shifted = apply_bias(img, c);
    for (double v : shifted.data) CHECK(v == 0.75);

    // add then subtract the same field restores the image (to rounding)
    BiasFieldConfig cfg;
    cfg.kernel_count = 2;
    cfg.sigma = 3.0;
    cfg.seed = 9;
    ImageGrid field = generate_bias_field(8, 6, cfg);
    ImageGrid neg = field;
    for (double& v : neg.data) v = -v;
    ImageGrid restored = apply_bias(apply_bias(img, field), neg);
    for (size_t i = 0; i < img.size(); ++i)
        CHECK(restored.data[i] == Catch::Approx(img.data[i]).margin(1e-15));

    ImageGrid wrong(7, 6, 0.0);
    CHECK_THROWS_AS(apply_bias(img, wrong), std::invalid_argument);
}
